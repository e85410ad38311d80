"""Dense tensors with reverse-mode differentiation for the model's layers."""

from compfer.autodiff import ops
from compfer.autodiff.checkpoint import load_checkpoint, params_hash, save_checkpoint
from compfer.autodiff.optim import Adam, AdamState, adam_step
from compfer.autodiff.tensor import ParamStore, Tape, Tensor, as_tensor, backward

__all__ = [
    "ops", "load_checkpoint", "params_hash", "save_checkpoint", "Adam", "AdamState",
    "adam_step", "ParamStore", "Tape", "Tensor", "as_tensor", "backward",
]
