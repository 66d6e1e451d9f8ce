"""Modality-agnostic transfer of a promptable segmentation model.

Subpackages:
  diffcore - fp32 autodiff substrate, Adam, schedules, gradient checker
  model    - the foundation model (patch embed, encoder, prompt encoder, decoder)
  mat      - modality-agnostic transfer layers plus parameter/FLOPs accounting
  peft     - LoRA / adapter / prompt-token injection and merging
  bench    - synthetic scenes, instance decomposition, manifests
  trainer  - loss, metrics, training loop, learning-rate sweep
  cli      - end-to-end command-line pipeline
"""

__version__ = "0.1.0"
