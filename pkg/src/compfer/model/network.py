"""Forward passes of the two branches, the penalties and the test-time path.

Parameter names are prefixed by branch: ``fer.`` (per-frame CNN and LSTM),
``cls.`` (classifier), ``id.`` (frozen identity encoder) and ``dec.`` (apex
decoder). Everything runs on the autodiff ops, so the same code serves
training (inside a ``Tape``) and inference (no tape, plain numpy).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from compfer import instrument
from compfer.autodiff import ops
from compfer.autodiff.tensor import ParamStore, Tensor
from compfer.codec.bitstream import GopView
from compfer.codec.frames import Frame, MotionField, ResidualFrame
from compfer.errors import ClassificationError, ConfigError, DimensionError
from compfer.model.config import FerBranchConfig, LossWeights, ModelConfig


# --- initialisation ------------------------------------------------------------

def _he(rng, shape, fan_in):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def _add_conv_stack(store, rng, prefix, in_ch, plan, k):
    c = in_ch
    for i, o in enumerate(plan):
        store.add(f"{prefix}.conv{i}.w", _he(rng, (o, c, k, k), c * k * k))
        store.add(f"{prefix}.conv{i}.b", np.zeros(o, np.float32))
        c = o
    return c


def init_params(cfg: ModelConfig, seed: int = 0) -> ParamStore:
    """Fresh parameters for every branch, drawn from one seeded generator."""
    rng = np.random.default_rng([0xF0, int(seed)])
    f = cfg.fer
    store = ParamStore()
    c = _add_conv_stack(store, rng, "fer", f.in_channels, f.channels, f.kernel)
    flat = c * (cfg.height // f.kernel ** len(f.channels)) * (cfg.width // f.kernel ** len(f.channels))
    store.add("fer.fc.w", _he(rng, (flat, f.frame_dim), flat))
    store.add("fer.fc.b", np.zeros(f.frame_dim, np.float32))
    h = f.hidden
    lim = 1.0 / np.sqrt(h)
    store.add("fer.lstm.wx", rng.uniform(-lim, lim, (f.frame_dim, 4 * h)).astype(np.float32))
    store.add("fer.lstm.wh", rng.uniform(-lim, lim, (h, 4 * h)).astype(np.float32))
    b = np.zeros(4 * h, np.float32)
    b[h : 2 * h] = 1.0  # forget gate starts open
    store.add("fer.lstm.b", b)
    store.add("cls.w", (rng.standard_normal((h, f.n_classes)) / np.sqrt(h)).astype(np.float32))
    store.add("cls.b", np.zeros(f.n_classes, np.float32))

    c = _add_conv_stack(store, rng, "id", 3, cfg.id_channels, f.kernel)
    n = len(cfg.id_channels)
    flat = c * (cfg.height // f.kernel ** n) * (cfg.width // f.kernel ** n)
    store.add("id.fc.w", _he(rng, (flat, cfg.id_dim), flat))
    store.add("id.fc.b", np.zeros(cfg.id_dim, np.float32))

    zin = cfg.id_dim + f.z_dim
    g, dc = cfg.dec_grid, cfg.dec_channels
    store.add("dec.fc.w", _he(rng, (zin, dc * g * g), zin))
    store.add("dec.fc.b", np.zeros(dc * g * g, np.float32))
    store.add("dec.conv0.w", _he(rng, (dc // 2, dc, 3, 3), dc * 9))
    store.add("dec.conv0.b", np.zeros(dc // 2, np.float32))
    store.add("dec.conv1.w", _he(rng, (3, dc // 2, 1, 1), dc // 2))
    store.add("dec.conv1.b", np.zeros(3, np.float32))
    return store


# --- inputs --------------------------------------------------------------------

def frame_inputs(residuals: np.ndarray, motion: np.ndarray | None, fer: FerBranchConfig,
                 block_size: int = 8) -> np.ndarray:
    """(..., h, w, 3) residual levels [+ (..., gh, gw, 2) vectors] -> (..., C, h, w) float32."""
    res = np.asarray(residuals)
    x = np.moveaxis(res.astype(np.float32) * np.float32(fer.residual_scale), -1, -3)
    if fer.input_mode == "residual_only":
        if motion is not None:
            raise ConfigError("motion field supplied but input_mode is residual_only")
        return np.ascontiguousarray(x)
    if motion is None:
        raise ConfigError("input_mode residual_plus_motion needs the motion field")
    mv = np.asarray(motion)
    if mv.shape[:-3] != res.shape[:-3] or mv.shape[-1] != 2:
        raise DimensionError(f"motion {mv.shape} does not pair with residual {res.shape}")
    if (mv.shape[-3] * block_size, mv.shape[-2] * block_size) != res.shape[-3:-1]:
        raise DimensionError(f"motion grid {mv.shape[-3:-1]} does not cover {res.shape[-3:-1]}")
    full = np.repeat(np.repeat(mv, block_size, axis=-3), block_size, axis=-2)
    m = np.moveaxis(full.astype(np.float32) * np.float32(fer.motion_scale), -1, -3)
    return np.ascontiguousarray(np.concatenate([x, m], axis=-3))


def _conv_stack(x: Tensor, params: ParamStore, prefix: str, n: int, k: int) -> Tensor:
    for i in range(n):
        x = ops.relu(ops.conv2d(x, params[f"{prefix}.conv{i}.w"], params[f"{prefix}.conv{i}.b"], stride=k))
    return ops.reshape(x, (x.shape[0], -1))


# --- expression branch ---------------------------------------------------------

def embed_frames(x, params: ParamStore, cfg: ModelConfig) -> Tensor:
    """Shared per-frame CNN: (N, C, h, w) inputs -> (N, frame_dim) embeddings."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    f = cfg.fer
    if x.data.ndim != 4 or x.shape[1:] != (f.in_channels, cfg.height, cfg.width):
        raise DimensionError(
            f"expected (N, {f.in_channels}, {cfg.height}, {cfg.width}) input, got {x.shape}")
    flat = _conv_stack(x, params, "fer", len(f.channels), f.kernel)
    return ops.relu(ops.linear(flat, params["fer.fc.w"], params["fer.fc.b"]))


def embed_residual(frame: ResidualFrame, params: ParamStore, cfg: ModelConfig,
                   motion: MotionField | None = None) -> Tensor:
    """Embedding of a single residual frame (and its motion field when the mode uses it)."""
    if frame.shape != (cfg.height, cfg.width, 3):
        raise DimensionError(f"residual {frame.shape} does not match configured {cfg.height}x{cfg.width}")
    mv = None if motion is None else motion.vectors[None]
    bs = 8 if motion is None else motion.block_size
    x = frame_inputs(frame.levels[None], mv, cfg.fer, bs)
    return ops.reshape(embed_frames(x, params, cfg), (cfg.fer.frame_dim,))


def aggregate(embeddings, params: ParamStore) -> Tensor:
    """Run the LSTM over a sequence and return its final hidden state.

    ``embeddings`` is either a (B, T, F) tensor or a sequence of T (B, F) /
    (F,) tensors in temporal order.
    """
    if isinstance(embeddings, Tensor):
        if embeddings.data.ndim != 3:
            raise DimensionError(f"expected (B, T, F) embeddings, got {embeddings.shape}")
        steps = [ops.select(embeddings, t, axis=1) for t in range(embeddings.shape[1])]
    else:
        steps = [e if e.data.ndim == 2 else ops.reshape(e, (1, -1)) for e in embeddings]
    if not steps:
        raise ValueError("cannot aggregate an empty sequence")
    wx, wh, b = params["fer.lstm.wx"], params["fer.lstm.wh"], params["fer.lstm.b"]
    hid = wh.shape[0]
    zeros = np.zeros((steps[0].shape[0], hid), dtype=wx.dtype)
    h, c = Tensor(zeros), Tensor(zeros)
    for x in steps:
        h, c = ops.lstm_cell(x, h, c, wx, wh, b)
    return h


def classify(z_e: Tensor, params: ParamStore) -> Tensor:
    if z_e.data.ndim == 1:
        z_e = ops.reshape(z_e, (1, -1))
    return ops.linear(z_e, params["cls.w"], params["cls.b"])


def expression_feature(x, params: ParamStore, cfg: ModelConfig) -> Tensor:
    """(B, T, C, h, w) frame inputs -> (B, z_dim) expression features."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    b, t = x.shape[:2]
    if t == 0:
        raise ValueError("cannot aggregate an empty sequence")
    emb = embed_frames(ops.reshape(x, (b * t, *x.shape[2:])), params, cfg)
    return aggregate(ops.reshape(emb, (b, t, -1)), params)


# --- identity branch -----------------------------------------------------------

def identity_inputs(frames) -> np.ndarray:
    """Frames (or an (N, h, w, 3) uint8 stack) -> centred (N, 3, h, w) float32."""
    if isinstance(frames, Frame):
        frames = [frames]
    levels = np.stack([f.levels for f in frames]) if isinstance(frames, (list, tuple)) else np.asarray(frames)
    x = levels.astype(np.float32) / np.float32(255.0) - np.float32(0.5)
    return np.ascontiguousarray(np.moveaxis(x, -1, 1))


def identity_embedding(x, params: ParamStore, cfg: ModelConfig) -> Tensor:
    """The identity CNN without instrumentation (also used during pretraining)."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.ndim != 4 or x.shape[1:] != (3, cfg.height, cfg.width):
        raise DimensionError(f"expected (N, 3, {cfg.height}, {cfg.width}) I-frames, got {x.shape}")
    flat = _conv_stack(x, params, "id", len(cfg.id_channels), cfg.fer.kernel)
    return ops.linear(flat, params["id.fc.w"], params["id.fc.b"])


def extract_identity(i_frame, params: ParamStore, cfg: ModelConfig) -> np.ndarray:
    """Identity embedding for one I-frame (shape (id_dim,)) or a batch of them (shape (N, id_dim)).

    Returned as a plain array: the identity encoder is frozen, so in the loss
    graph the identity embedding is a constant.
    """
    instrument.hit("extract_identity")
    single = isinstance(i_frame, Frame)
    z = identity_embedding(identity_inputs(i_frame), params, cfg).data.copy()
    return z[0] if single else z


# --- penalties and decoder -----------------------------------------------------

def independence_penalty(z_e: Tensor, z_i) -> Tensor:
    """Squared Frobenius norm of the standardized cross-covariance, per entry.

    Both inputs are standardized per dimension over the batch, then the
    (dE, dI) cross-covariance is averaged over the batch axis.
    """
    z_i = z_i if isinstance(z_i, Tensor) else Tensor(np.asarray(z_i, dtype=z_e.dtype))
    n = z_e.shape[0]
    if n < 2:
        raise ValueError(f"independence penalty needs a batch of at least 2, got {n}")
    if z_i.shape[0] != n:
        raise DimensionError(f"batch sizes differ: {n} vs {z_i.shape[0]}")
    de, di = z_e.shape[1], z_i.shape[1]
    cov = ops.scale(ops.matmul(ops.transpose(ops.standardize(z_e)), ops.standardize(z_i)), 1.0 / n)
    return ops.scale(ops.sum_squares(cov), 1.0 / (de * di))


def decode_apex(z_i, z_e: Tensor, params: ParamStore, cfg: ModelConfig) -> Tensor:
    """Decoder forward without instrumentation: (N, 3, h, w) in [0, 1]."""
    z_i = z_i if isinstance(z_i, Tensor) else Tensor(np.asarray(z_i, dtype=z_e.dtype))
    if z_i.data.ndim == 1:
        z_i = ops.reshape(z_i, (1, -1))
    if z_e.data.ndim == 1:
        z_e = ops.reshape(z_e, (1, -1))
    n, g, dc = z_e.shape[0], cfg.dec_grid, cfg.dec_channels
    x = ops.relu(ops.linear(ops.concat([z_i, z_e], axis=1), params["dec.fc.w"], params["dec.fc.b"]))
    x = ops.upsample_nearest(ops.reshape(x, (n, dc, g, g)), 2)
    x = ops.relu(ops.conv2d(x, params["dec.conv0.w"], params["dec.conv0.b"], padding=1))
    x = ops.upsample_nearest(x, cfg.height // g // 2)
    return ops.sigmoid(ops.conv2d(x, params["dec.conv1.w"], params["dec.conv1.b"]))


def reconstruct_apex(z_i, z_e: Tensor, params: ParamStore, cfg: ModelConfig) -> Tensor:
    """Predicted apex image(s) from the concatenated identity and expression features."""
    instrument.hit("reconstruct_apex")
    return decode_apex(z_i, z_e, params, cfg)


def to_frame(image: Tensor | np.ndarray, index: int = 0) -> Frame:
    """One decoder output image as a :class:`Frame`."""
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    return Frame.from_float(np.moveaxis(data[index], 0, -1).astype(np.float64))


def total_loss(logits: Tensor, labels, l_dis: Tensor | None, l_rec: Tensor | None,
               weights: LossWeights, has_apex: bool = True) -> Tensor:
    """Cross-entropy + alpha * penalty + beta * reconstruction; zero-weight terms are not added at all.

    Without an apex annotation the reconstruction weight is forced to zero.
    """
    if not isinstance(weights, LossWeights):
        raise ConfigError("weights must be a LossWeights instance")
    beta = weights.beta if has_apex else 0.0
    loss = ops.softmax_ce(logits, labels)
    if weights.alpha > 0:
        if l_dis is None:
            raise ValueError("alpha > 0 but no independence penalty given")
        loss = ops.add(loss, ops.scale(l_dis, weights.alpha))
    if beta > 0:
        if l_rec is None:
            raise ValueError("beta > 0 but no reconstruction loss given")
        loss = ops.add(loss, ops.scale(l_rec, beta))
    return loss


# --- test-time path ------------------------------------------------------------

def sequence_inputs(view: GopView, fer: FerBranchConfig) -> np.ndarray:
    """(T, C, h, w) network inputs read straight from a GOP's P-frames."""
    if len(view) == 0:
        raise ClassificationError("GOP has no P-frames, so there is nothing to classify")
    motion = view.motion_vectors() if fer.input_mode == "residual_plus_motion" else None
    bs = view.p_frames[0][0].block_size
    return frame_inputs(view.residual_levels(), motion, fer, bs)


def logits_from_inputs(x: np.ndarray, params: ParamStore, cfg: ModelConfig) -> np.ndarray:
    """Logits for one sequence of prepared (T, C, h, w) inputs."""
    if x.shape[0] == 0:
        raise ClassificationError("empty sequence cannot be classified")
    z = expression_feature(x[None], params, cfg)
    return classify(z, params).data[0]


def predict_logits(view: GopView, params: ParamStore, cfg: ModelConfig) -> np.ndarray:
    return logits_from_inputs(sequence_inputs(view, cfg.fer), params, cfg)


def predict(view: GopView, params: ParamStore, cfg: ModelConfig) -> int:
    """Class id from the expression branch alone (residuals, LSTM, classifier)."""
    return int(np.argmax(predict_logits(view, params, cfg)))


def predict_batch(views: Sequence[GopView], params: ParamStore, cfg: ModelConfig) -> np.ndarray:
    return np.array([predict(v, params, cfg) for v in views], dtype=np.int64)
