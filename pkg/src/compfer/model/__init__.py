"""Dual-branch expression model: residual-stream classifier plus frozen identity encoder."""

from compfer.model.config import INPUT_MODES, FerBranchConfig, LossWeights, ModelConfig
from compfer.model.identity import cosine, pretrain_identity
from compfer.model.network import (
    aggregate,
    classify,
    decode_apex,
    embed_frames,
    embed_residual,
    expression_feature,
    extract_identity,
    frame_inputs,
    identity_embedding,
    identity_inputs,
    independence_penalty,
    init_params,
    logits_from_inputs,
    predict,
    predict_batch,
    predict_logits,
    reconstruct_apex,
    sequence_inputs,
    to_frame,
    total_loss,
)

__all__ = [
    "INPUT_MODES", "FerBranchConfig", "LossWeights", "ModelConfig", "cosine", "pretrain_identity",
    "aggregate", "classify", "decode_apex", "embed_frames", "embed_residual", "expression_feature",
    "extract_identity", "frame_inputs", "identity_embedding", "identity_inputs",
    "independence_penalty", "init_params", "logits_from_inputs", "predict", "predict_batch",
    "predict_logits", "reconstruct_apex", "sequence_inputs", "to_frame", "total_loss",
]
