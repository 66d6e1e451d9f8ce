"""Central finite-difference verification of reverse-mode gradients.

The closure under test maps input Tensors to one output Tensor; the checker
sum-reduces that output (in float64, outside the graph) and compares the
analytic gradient of the sum against central differences taken element by
element. Per-element step is `epsilon * max(1, |x|)`.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import NumericError
from .tensor import Tensor

__all__ = ["grad_check"]


def _eval_sum(fn: Callable[..., Tensor], inputs: Sequence[Tensor]) -> float:
    out = fn(*inputs)
    if not np.all(np.isfinite(out.data)):
        raise NumericError("non-finite output during finite-difference evaluation")
    return float(np.sum(out.data, dtype=np.float64))


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor],
               epsilon: float = 1e-2, max_checks_per_input: Optional[int] = None,
               rng: Optional[np.random.Generator] = None) -> float:
    """Return the max relative error between analytic and numeric gradients.

    Relative error per element: |analytic - cd| / max(|analytic|, |cd|, 1e-8).
    `max_checks_per_input` subsamples coordinates (deterministically, from
    `rng` or a fixed default) so large inputs stay affordable.

    The per-element step is `epsilon * max(1, |x|)`; the default 1e-2 sits at
    the fp32 noise/truncation balance point (roughly cbrt of machine epsilon).
    The difference quotient divides by the actually-realized fp32 perturbation
    rather than the nominal step.
    """
    inputs = list(inputs)
    for x in inputs:
        x.requires_grad = True
        x.grad = None

    out = fn(*inputs)
    if not np.all(np.isfinite(out.data)):
        raise NumericError("non-finite output in analytic forward pass")
    loss = out.sum() if out.data.size != 1 else out.reshape(())
    loss.backward()
    analytic = []
    for x in inputs:
        g = x.grad if x.grad is not None else np.zeros_like(x.data)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite analytic gradient")
        analytic.append(g.astype(np.float64))

    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for x, g in zip(inputs, analytic):
        flat = x.data.reshape(-1)
        n = flat.size
        if max_checks_per_input is not None and n > max_checks_per_input:
            idx = rng.choice(n, size=max_checks_per_input, replace=False)
        else:
            idx = np.arange(n)
        for i in idx:
            orig = flat[i]
            step = np.float32(epsilon * max(1.0, abs(float(orig))))
            hi = np.float32(orig + step)
            lo = np.float32(orig - step)
            flat[i] = hi
            f_plus = _eval_sum(fn, inputs)
            flat[i] = lo
            f_minus = _eval_sum(fn, inputs)
            flat[i] = orig
            cd = (f_plus - f_minus) / (float(hi) - float(lo))
            a = g.reshape(-1)[i]
            rel = abs(a - cd) / max(abs(a), abs(cd), 1e-8)
            worst = max(worst, rel)
    return worst
