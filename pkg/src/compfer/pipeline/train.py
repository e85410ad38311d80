"""Training loop for one fold and the frozen identity encoder it relies on."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from compfer.autodiff import ops
from compfer.autodiff.checkpoint import params_hash, params_to_bytes
from compfer.autodiff.optim import Adam
from compfer.autodiff.tensor import ParamStore, Tape, Tensor, backward
from compfer.model.config import ModelConfig
from compfer.model.identity import pretrain_identity
from compfer.model.network import (
    classify,
    decode_apex,
    expression_feature,
    identity_embedding,
    identity_inputs,
    independence_penalty,
    init_params,
    sequence_inputs,
    total_loss,
)
from compfer.pipeline.config import FoldPlan, RunConfig
from compfer.pipeline.data import CorpusData


class TrainingDiverged(RuntimeError):
    """A loss became NaN or infinite."""


@dataclass
class IdentityEncoder:
    """Frozen ``id.*`` parameters and the identity embedding of every corpus sequence."""

    params: ParamStore
    z: np.ndarray
    history: list[float] = field(default_factory=list)

    @property
    def digest(self) -> str:
        return params_hash(self.params, "id.")


def fit_identity_encoder(data: CorpusData, model: ModelConfig, seed: int = 0,
                         epochs: int = 40) -> IdentityEncoder:
    """Pretrain the identity CNN on the corpus's subject labels, then freeze it.

    Only I-frames and subject ids are used; expression labels never are.
    """
    full = init_params(model, seed)
    hist = pretrain_identity(full, model, data.i_frames, data.subjects, seed=seed, epochs=epochs)
    store = ParamStore()
    for name in full.names("id."):
        store.add(name, full[name].data, trainable=False)
    z = identity_embedding(identity_inputs(data.i_frames), store, model).data.copy()
    return IdentityEncoder(store, z, hist)


def corpus_inputs(data: CorpusData, model: ModelConfig) -> list[np.ndarray]:
    """Network inputs per sequence, cached on the corpus object per input mode."""
    cache = data.__dict__.setdefault("_inputs", {})
    key = (model.fer.input_mode, model.fer.residual_scale, model.fer.motion_scale)
    if key not in cache:
        cache[key] = [sequence_inputs(v, model.fer) for v in data.views]
    return cache[key]


def _batches(order: np.ndarray, lengths: np.ndarray, size: int) -> list[np.ndarray]:
    """Chunk a shuffled order into equal-length groups; a trailing singleton joins its neighbour."""
    out = []
    for t in sorted(set(lengths[order].tolist())):
        grp = order[lengths[order] == t]
        chunks = [grp[i : i + size] for i in range(0, len(grp), size)]
        if len(chunks) > 1 and len(chunks[-1]) == 1:
            last = chunks.pop()
            chunks[-1] = np.concatenate([chunks[-1], last])
        out.extend(chunks)
    return out


@dataclass
class FoldResult:
    fold: int
    params: ParamStore
    log: list[dict]
    train_index: np.ndarray

    @property
    def checkpoint_hash(self) -> str:
        return hashlib.sha256(params_to_bytes(self.params)).hexdigest()


def train_fold(data: CorpusData, plan: FoldPlan, fold: int, cfg: RunConfig,
               identity: IdentityEncoder | None = None) -> FoldResult:
    """Minimise cross-entropy + alpha * penalty + beta * reconstruction on the fold's training subjects.

    The reconstruction term is active only for epochs below ``cfg.e_warm`` and
    is skipped entirely (no decoder forward pass) when its weight is zero.
    """
    model = cfg.model
    train_idx = data.indices_for(plan.train_subjects(fold))
    if len(train_idx) < 2:
        raise ValueError(f"fold {fold} leaves fewer than 2 training sequences")
    if identity is None:
        identity = fit_identity_encoder(data, model, cfg.seed, cfg.id_epochs)
    inputs = corpus_inputs(data, model)
    lengths = np.array([x.shape[0] for x in inputs])
    params = init_params(model, seed=cfg.seed * 1000 + fold)
    for name in identity.params:
        params[name].data = identity.params[name].data.copy()
    params.freeze("id.")
    opt = Adam(params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    rng = np.random.default_rng([0x7E, int(cfg.seed), int(fold)])
    h, w = model.height, model.width
    targets = np.moveaxis(data.apex_frames.astype(np.float32) / np.float32(255.0), -1, 1)

    log: list[dict] = []
    for epoch in range(cfg.epochs):
        beta = cfg.beta if epoch < cfg.e_warm else 0.0
        sums = {"ce": 0.0, "total": 0.0}
        if cfg.alpha > 0:
            sums["dis"] = 0.0
        if beta > 0:
            sums["rec"] = 0.0
        correct = seen = 0
        for idx in _batches(rng.permutation(train_idx), lengths, cfg.batch_size):
            x = np.stack([inputs[i] for i in idx])
            labels = data.labels[idx]
            with Tape() as tape:
                z_e = expression_feature(Tensor(x), params, model)
                logits = classify(z_e, params)
                ce = ops.softmax_ce(logits, labels)
                l_dis = independence_penalty(z_e, identity.z[idx]) if cfg.alpha > 0 else None
                l_rec = None
                has_apex = data.apex[idx] >= 0
                if beta > 0 and has_apex.any():
                    img = decode_apex(identity.z[idx], z_e, params, model)
                    mask = np.broadcast_to(has_apex[:, None, None, None], img.shape).astype(np.float32)
                    l_rec = ops.scale(
                        ops.l2_loss(ops.mul(img, Tensor(mask)), Tensor(targets[idx] * mask), "sum"),
                        1.0 / (int(has_apex.sum()) * 3 * h * w))
                loss = total_loss(logits, labels, l_dis, l_rec,
                                  type(cfg.weights)(cfg.alpha, beta), has_apex=l_rec is not None)
            parts = {"ce": ce, "total": loss, "dis": l_dis, "rec": l_rec}
            for key in sums:
                if parts[key] is None:
                    continue
                v = float(parts[key].data)
                if not math.isfinite(v):
                    last = log[-1] if log else "none (first epoch)"
                    raise TrainingDiverged(
                        f"fold {fold} epoch {epoch}: {key} loss became {v}; last finite epoch: {last}")
                sums[key] += v * len(idx)
            grads = backward(tape, loss, params)
            if l_rec is None:
                # decoder is outside the graph: leave it (and its Adam moments) untouched
                grads = {k: g for k, g in grads.items() if not k.startswith("dec.")}
            opt.step(grads)
            correct += int((np.argmax(logits.data, axis=1) == labels).sum())
            seen += len(idx)
        entry = {"epoch": epoch, **{k: v / seen for k, v in sums.items()},
                 "alpha": cfg.alpha, "beta": beta, "train_acc": correct / seen}
        log.append(entry)
    return FoldResult(fold, params, log, train_idx)
