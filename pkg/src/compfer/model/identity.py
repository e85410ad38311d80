"""Pretraining of the identity encoder as a subject classifier, then freezing it."""

from __future__ import annotations

import numpy as np

from compfer.autodiff import ops
from compfer.autodiff.optim import Adam
from compfer.autodiff.tensor import ParamStore, Tape, Tensor, backward
from compfer.model.config import ModelConfig
from compfer.model.network import identity_embedding, identity_inputs


def pretrain_identity(params: ParamStore, cfg: ModelConfig, i_frames, subject_ids,
                      seed: int = 0, epochs: int = 40, batch: int = 16, lr: float = 2e-3) -> list[float]:
    """Fit ``id.*`` plus a throwaway linear head to predict the subject, then freeze ``id.*``.

    Returns the per-epoch mean cross-entropy. The head is discarded, so only
    the embedding layer's output (the identity embedding) survives.
    """
    subjects = sorted(set(subject_ids))
    y = np.array([subjects.index(s) for s in subject_ids], dtype=np.int64)
    x_all = identity_inputs(i_frames)
    rng = np.random.default_rng([0x1D5, int(seed)])
    work = ParamStore()
    for name in params.names("id."):
        work.add(name, params[name].data.copy())
    head_w = work.add("head.w", (rng.standard_normal((cfg.id_dim, len(subjects)))
                                 / np.sqrt(cfg.id_dim)).astype(np.float32))
    head_b = work.add("head.b", np.zeros(len(subjects), np.float32))
    opt = Adam(work, lr=lr)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(order), batch):
            idx = order[start : start + batch]
            with Tape() as tape:
                z = ops.relu(identity_embedding(Tensor(x_all[idx]), work, cfg))
                loss = ops.softmax_ce(ops.linear(z, head_w, head_b), y[idx])
            opt.step(backward(tape, loss, work))
            total += float(loss.data) * len(idx)
        history.append(total / len(y))
    for name in params.names("id."):
        params[name].data = work[name].data.copy()
    params.freeze("id.")
    return history


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12))
