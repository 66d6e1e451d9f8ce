"""Parameter-efficient finetuning: injection, accounting, balancing, merging.

Strategies:
  lora            low-rank updates on every encoder block's query and value
                  projections; the up-factor starts at zero so the injected
                  model reproduces the base forward exactly
  mlp-adapter     parallel bottleneck branch beside each encoder MLP sublayer,
                  zero-initialized up-projection, scaled by `adapter_scale`
  prompt-tuning   learnable tokens prepended to every block's input and
                  stripped from its output (deep variant); not output-neutral
  full-finetuning everything trainable, nothing added

Injection freezes the backbone; the mask decoder stays trainable by default
(`train_decoder`) and MAT parameters are controlled by the transfer pipeline
via `train_mat`. The report breaks counts down per prefix so either decoder
convention can be reproduced from it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .diffcore import Parameter, Tensor, init_array, seed_for
from .errors import ConfigurationError, InfeasibleTargetError, StateError
from .model.build import Model, count_plan, param_plan
from .model.config import ModelConfig

__all__ = ["PEFTConfig", "InjectionReport", "inject", "trainable_fraction",
           "balance_to_fraction", "BalanceResult", "merge_lora", "injection_plan",
           "STRATEGIES"]

LORA = "lora"
MLP_ADAPTER = "mlp-adapter"
PROMPT_TUNING = "prompt-tuning"
FULL_FINETUNING = "full-finetuning"
STRATEGIES = (LORA, MLP_ADAPTER, PROMPT_TUNING, FULL_FINETUNING)


@dataclass(frozen=True)
class PEFTConfig:
    strategy: str
    rank: int = 4                  # lora
    alpha: float = 4.0             # lora scaling is alpha / rank
    bottleneck: int = 8            # mlp-adapter
    adapter_scale: float = 0.1     # mlp-adapter residual scale
    tokens_per_block: int = 4      # prompt-tuning
    target_fraction: float = 0.04
    train_decoder: bool = True
    train_mat: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(
                f"unknown finetuning strategy {self.strategy!r}; choose one of {STRATEGIES}")
        for knob in ("rank", "bottleneck", "tokens_per_block"):
            if getattr(self, knob) < 1:
                raise ConfigurationError(f"{knob} must be >= 1")
        if not 0.0 < self.target_fraction <= 1.0:
            raise ConfigurationError("target_fraction must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PEFTConfig":
        return cls(**data)


def injection_plan(model_config: ModelConfig, config: PEFTConfig
                   ) -> List[Tuple[str, tuple, str]]:
    """(name, shape, init kind) of every parameter the strategy adds."""
    d = model_config.embed_dim
    plan: List[Tuple[str, tuple, str]] = []
    for i in range(model_config.depth):
        b = f"encoder.block{i}"
        if config.strategy == LORA:
            for target in ("attn.q", "attn.v"):
                plan.append((f"{b}.{target}.lora_A", (config.rank, d), "trunc_normal"))
                plan.append((f"{b}.{target}.lora_B", (d, config.rank), "zeros"))
        elif config.strategy == MLP_ADAPTER:
            plan.append((f"{b}.adapter.down.weight", (config.bottleneck, d), "trunc_normal"))
            plan.append((f"{b}.adapter.down.bias", (config.bottleneck,), "zeros"))
            plan.append((f"{b}.adapter.up.weight", (d, config.bottleneck), "zeros"))
            plan.append((f"{b}.adapter.up.bias", (d,), "zeros"))
        elif config.strategy == PROMPT_TUNING:
            plan.append((f"{b}.prompt_tokens", (config.tokens_per_block, d), "trunc_normal"))
    return plan


@dataclass
class InjectionReport:
    """Trainable-parameter accounting immediately after injection.

    `per_prefix` buckets base parameters under "encoder"/"prompt"/"decoder";
    injected parameters are reported in the separate "injected" bucket even
    though their dotted names live under encoder blocks.
    """

    strategy: str
    added_param_count: int
    frozen_param_count: int
    trainable_param_count: int
    trainable_fraction: float
    per_prefix: Dict[str, Dict[str, int]]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _report(model: Model, added_names: set, strategy: str) -> InjectionReport:
    buckets = {"encoder": {"trainable": 0, "frozen": 0, "total": 0},
               "prompt": {"trainable": 0, "frozen": 0, "total": 0},
               "decoder": {"trainable": 0, "frozen": 0, "total": 0},
               "injected": {"trainable": 0, "frozen": 0, "total": 0}}
    trainable = frozen = 0
    for name, p in model.params.items():
        bucket = "injected" if name in added_names else name.split(".", 1)[0]
        state = "trainable" if p.trainable else "frozen"
        buckets[bucket][state] += p.size
        buckets[bucket]["total"] += p.size
        if p.trainable:
            trainable += p.size
        else:
            frozen += p.size
    return InjectionReport(
        strategy=strategy,
        added_param_count=buckets["injected"]["total"],
        frozen_param_count=frozen,
        trainable_param_count=trainable,
        trainable_fraction=trainable / (trainable + frozen),
        per_prefix=buckets,
    )


def inject(model: Model, config: PEFTConfig) -> Tuple[Model, InjectionReport]:
    """Apply a finetuning strategy to a built model, in place."""
    if model.peft is not None:
        raise StateError(f"model already injected with {model.peft.strategy!r}")
    config.validate()
    d = model.config.embed_dim
    if config.strategy == LORA and config.rank > d:
        raise ConfigurationError(f"lora rank {config.rank} exceeds embed dim {d}")
    if config.strategy == MLP_ADAPTER and config.bottleneck > d:
        raise ConfigurationError(f"adapter bottleneck {config.bottleneck} exceeds embed dim {d}")

    added_names: set = set()
    if config.strategy == FULL_FINETUNING:
        for p in model.params.values():
            p.set_trainable(True)
    else:
        for p in model.params.values():
            keep = config.train_decoder and p.name.startswith("decoder.")
            p.set_trainable(keep)
        for name, shape, kind in injection_plan(model.config, config):
            rng = np.random.default_rng(seed_for(model.master_seed, name))
            model.add_param(Parameter(name, Tensor(init_array(kind, shape, rng))))
            added_names.add(name)
    model.peft = config
    return model, _report(model, added_names, config.strategy)


def trainable_fraction(model: Model) -> float:
    """Trainable share of the foundation model's parameters (buffers excluded)."""
    trainable = total = 0
    for p in model.params.values():
        total += p.size
        if p.trainable:
            trainable += p.size
    return trainable / total if total else 0.0


@dataclass(frozen=True)
class BalanceResult:
    strategy: str
    knob: Optional[int]
    fraction: float


def _added_count(model_config: ModelConfig, strategy: str, knob: int) -> int:
    d = model_config.embed_dim
    depth = model_config.depth
    if strategy == LORA:
        return depth * 2 * (2 * knob * d)
    if strategy == MLP_ADAPTER:
        return depth * (2 * knob * d + knob + d)
    if strategy == PROMPT_TUNING:
        return depth * knob * d
    raise ConfigurationError(f"no capacity knob for strategy {strategy!r}")


def balance_to_fraction(model_config: ModelConfig, strategy: str,
                        target_fraction: float) -> BalanceResult:
    """Pick the capacity knob whose post-injection trainable fraction is closest
    to the target (backbone frozen, decoder excluded from the trainable side).

    Ties break toward the smaller knob. Uses the closed-form added-parameter
    formulas; the tests cross-check them against structural enumeration.
    """
    if not 0.0 < target_fraction <= 1.0:
        raise ConfigurationError("target_fraction must lie in (0, 1]")
    if strategy == FULL_FINETUNING:
        return BalanceResult(strategy, None, 1.0)
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown strategy {strategy!r}")

    base_total = count_plan(param_plan(model_config))

    def fraction(knob: int) -> float:
        added = _added_count(model_config, strategy, knob)
        return added / (base_total + added)

    floor_fraction = fraction(1)
    if floor_fraction > target_fraction * 1.5:
        raise InfeasibleTargetError(
            f"{strategy}: smallest knob already gives fraction {floor_fraction:.6f} "
            f"(> 1.5x target {target_fraction})")

    max_knob = model_config.embed_dim if strategy in (LORA, MLP_ADAPTER) else None
    best_knob, best_diff = 1, abs(floor_fraction - target_fraction)
    knob = 2
    while max_knob is None or knob <= max_knob:
        diff = abs(fraction(knob) - target_fraction)
        if diff < best_diff:
            best_knob, best_diff = knob, diff
        elif fraction(knob) > target_fraction:
            break  # fraction is monotone in the knob; it only gets worse
        knob += 1
    return BalanceResult(strategy, best_knob, fraction(best_knob))


def merge_lora(model: Model) -> Model:
    """Fold low-rank factors into the base weights and strip them."""
    if model.peft is None or model.peft.strategy != LORA:
        raise StateError("merge_lora requires a lora-injected model")
    scale = np.float32(model.peft.alpha / model.peft.rank)
    for i in range(model.config.depth):
        for target in ("attn.q", "attn.v"):
            base = f"encoder.block{i}.{target}"
            a = model.param(f"{base}.lora_A").tensor.data
            b = model.param(f"{base}.lora_B").tensor.data
            model.param(f"{base}.weight").tensor.data += scale * (b @ a)
            model.remove_param(f"{base}.lora_A")
            model.remove_param(f"{base}.lora_B")
    model.peft = None
    return model
