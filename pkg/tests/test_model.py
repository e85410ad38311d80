import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compfer import instrument
from compfer.autodiff import Tape, Tensor, backward, ops
from compfer.autodiff.checkpoint import params_hash
from compfer.codec import Frame, MotionField, ResidualFrame, encode_video, parse_bitstream, read_compressed
from compfer.errors import ClassificationError, ConfigError, DimensionError
from compfer.model import (
    FerBranchConfig,
    LossWeights,
    ModelConfig,
    aggregate,
    classify,
    cosine,
    decode_apex,
    embed_residual,
    expression_feature,
    extract_identity,
    frame_inputs,
    independence_penalty,
    init_params,
    predict,
    predict_logits,
    reconstruct_apex,
    to_frame,
    total_loss,
)

SMALL = ModelConfig(FerBranchConfig(channels=(4, 6), frame_dim=8, z_dim=8, hidden=8, n_classes=3),
                    height=16, width=16, id_channels=(4, 6), id_dim=6, dec_channels=4, dec_grid=8)


def zero_biases(params):
    for name, t in params.items():
        if name.endswith(".b"):
            t.data = np.zeros_like(t.data)


def residual(rng, h=64, w=64, scale=30):
    return ResidualFrame(rng.integers(-scale, scale + 1, (h, w, 3)).astype(np.int16))


# --- configs --------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        FerBranchConfig(z_dim=32, hidden=64)
    with pytest.raises(ConfigError):
        FerBranchConfig(n_classes=1)
    with pytest.raises(ConfigError):
        FerBranchConfig(input_mode="pixels")
    with pytest.raises(ConfigError):
        ModelConfig(height=60, width=60)
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"bogus": 1})
    for a, b in [(-0.1, 0.5), (0.1, 1.5)]:
        with pytest.raises(ConfigError):
            LossWeights(a, b)


def test_config_json_round_trip(tmp_path):
    cfg = ModelConfig(FerBranchConfig(input_mode="residual_plus_motion"), apex_policy="middle")
    cfg.save(tmp_path / "m.json")
    assert ModelConfig.load(tmp_path / "m.json") == cfg


# --- expression branch ----------------------------------------------------------

def test_zero_residual_zero_embedding():
    cfg = ModelConfig()
    params = init_params(cfg, 0)
    zero_biases(params)
    z = embed_residual(ResidualFrame(np.zeros((64, 64, 3), np.int16)), params, cfg)
    assert z.shape == (64,) and not z.data.any()


def test_embedding_is_per_frame(rng):
    cfg = ModelConfig()
    params = init_params(cfg, 1)
    a, b = residual(rng), residual(rng)
    za = embed_residual(a, params, cfg).data
    assert np.array_equal(embed_residual(a, params, cfg).data, za)
    # a batch embedding of [a, b] gives a's row unchanged by b's content
    x = frame_inputs(np.stack([a.levels, b.levels]), None, cfg.fer)
    from compfer.model import embed_frames

    assert np.allclose(embed_frames(x, params, cfg).data[0], za, atol=1e-6)


def test_plus_motion_mode(rng):
    cfg = ModelConfig(FerBranchConfig(input_mode="residual_plus_motion"))
    params = init_params(cfg, 0)
    res = residual(rng)
    mv = MotionField(rng.integers(-7, 8, (8, 8, 2)).astype(np.int16), 8)
    z = embed_residual(res, params, cfg, mv)
    assert z.shape == (cfg.fer.frame_dim,)
    x = frame_inputs(res.levels[None], mv.vectors[None], cfg.fer)
    assert x.shape == (1, 5, 64, 64)
    assert np.array_equal(x[0, 3:], np.moveaxis(mv.expand(), -1, 0) * np.float32(cfg.fer.motion_scale))
    with pytest.raises(ConfigError):
        embed_residual(res, params, cfg)
    base = ModelConfig()
    with pytest.raises(ConfigError):
        embed_residual(res, init_params(base, 0), base, mv)


def test_residual_shape_mismatch(rng):
    cfg = ModelConfig()
    with pytest.raises(DimensionError):
        embed_residual(residual(rng, 32, 32), init_params(cfg, 0), cfg)


def test_aggregate_single_step_and_order(rng):
    cfg = ModelConfig()
    params = init_params(cfg, 2)
    steps = [Tensor(rng.normal(size=(1, 64)).astype(np.float32)) for _ in range(4)]
    h1 = aggregate(steps[:1], params)
    zeros = Tensor(np.zeros((1, 64), np.float32))
    h_ref, _ = ops.lstm_cell(steps[0], zeros, zeros, params["fer.lstm.wx"], params["fer.lstm.wh"],
                             params["fer.lstm.b"])
    assert np.array_equal(h1.data, h_ref.data)
    fwd = aggregate(steps, params).data
    rev = aggregate(steps[::-1], params).data
    assert not np.allclose(fwd, rev)
    with pytest.raises(ValueError):
        aggregate([], params)


def test_variable_lengths_iterate_exactly(rng):
    cfg = ModelConfig()
    params = init_params(cfg, 3)
    seq = rng.normal(size=(1, 6, 64)).astype(np.float32)
    short = aggregate(Tensor(seq[:, :4]), params).data
    assert np.array_equal(short, aggregate([Tensor(seq[:, t]) for t in range(4)], params).data)
    assert not np.allclose(short, aggregate(Tensor(seq), params).data)


@given(st.floats(-100, 100))
def test_classifier_shift_invariance(c):
    cfg = ModelConfig()
    params = init_params(cfg, 0)
    z = Tensor(np.random.default_rng(0).normal(size=(1, 64)).astype(np.float32))
    logits = classify(z, params).data[0].astype(np.float64)
    assert np.argmax(logits) == np.argmax(logits + c)


def test_zero_classifier_is_uniform():
    cfg = ModelConfig()
    params = init_params(cfg, 0)
    params["cls.w"].data[:] = 0
    logits = classify(Tensor(np.ones((1, 64), np.float32)), params)
    assert np.allclose(ops.softmax(logits.data), 1 / 7)


# --- identity branch ------------------------------------------------------------

def test_identity_feature_shape_and_stability(rng):
    cfg = ModelConfig()
    params = init_params(cfg, 0)
    f = Frame(rng.integers(0, 256, (64, 64, 3), dtype=np.uint8))
    z = extract_identity(f, params, cfg)
    assert z.shape == (128,)
    assert z.tobytes() == extract_identity(f, params, cfg).tobytes()
    with pytest.raises(DimensionError):
        extract_identity(Frame.zeros(32, 32), params, cfg)


def test_pretrained_identity_separates_subjects(corpus, identity_encoders):
    enc = identity_encoders(0)
    subj = np.array(corpus.subjects)
    z = extract_identity(corpus.i_frames, enc.params, ModelConfig())
    assert np.array_equal(z, enc.z)
    sims = np.array([[cosine(a, b) for b in z] for a in z])
    same = subj[:, None] == subj[None, :]
    off_diag = ~np.eye(len(z), dtype=bool)
    within = sims[same & off_diag].mean()
    across = sims[~same].mean()
    assert within > across
    for s in np.unique(subj):
        rows = subj == s
        assert sims[np.ix_(rows, rows)][~np.eye(rows.sum(), dtype=bool)].mean() > sims[np.ix_(rows, ~rows)].mean()


# --- independence penalty -------------------------------------------------------

def penalty_oracle(a, b, eps=1e-5):
    """Direct summation of the standardized cross-covariance."""
    n, de = a.shape
    di = b.shape[1]

    def std(x):
        out = np.zeros_like(x)
        for j in range(x.shape[1]):
            col = x[:, j] - x[0, j]
            col = col - col.mean()
            out[:, j] = col / math.sqrt((col ** 2).mean() + eps)
        return out

    sa, sb = std(a), std(b)
    total = 0.0
    for i in range(de):
        for j in range(di):
            c = sum(sa[k, i] * sb[k, j] for k in range(n)) / n
            total += c * c
    return total / (de * di)


def test_penalty_constant_batch_is_zero(rng):
    z_e = Tensor(np.tile(rng.normal(size=(1, 4)), (10, 1)))
    assert independence_penalty(z_e, rng.normal(size=(10, 3))).item() == 0.0


def test_penalty_identical_features(rng):
    z = rng.normal(size=(16, 5))
    val = independence_penalty(Tensor(z), z).item()
    assert val == pytest.approx(penalty_oracle(z, z), rel=1e-9)
    assert val >= 5 / (5 * 5) - 1e-6


@given(st.integers(0, 2**31 - 1), st.integers(2, 12), st.integers(1, 4), st.integers(1, 4))
def test_penalty_matches_oracle(seed, n, de, di):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, de)), rng.normal(size=(n, di))
    val = independence_penalty(Tensor(a), b).item()
    assert val >= 0
    assert val == pytest.approx(penalty_oracle(a, b), rel=1e-9, abs=1e-12)


def test_penalty_independent_gaussians_small(rng):
    vals = [independence_penalty(Tensor(rng.normal(size=(1024, 8))), rng.normal(size=(1024, 8))).item()
            for _ in range(20)]
    assert max(vals) < 0.02


def test_penalty_needs_two_rows():
    with pytest.raises(ValueError):
        independence_penalty(Tensor(np.zeros((1, 3))), np.zeros((1, 3)))


# --- decoder and losses ---------------------------------------------------------

def test_reconstruction_shape_range_and_grads(rng):
    cfg = ModelConfig()
    params = init_params(cfg, 0)
    params.freeze("id.")
    x = frame_inputs(rng.integers(-30, 31, (2, 3, 64, 64, 3)), None, cfg.fer)
    z_i = rng.normal(size=(2, 128)).astype(np.float32)
    target = Tensor(rng.random((2, 3, 64, 64)).astype(np.float32))
    with Tape() as tape:
        z_e = expression_feature(x, params, cfg)
        img = reconstruct_apex(z_i, z_e, params, cfg)
        loss = ops.l2_loss(img, target)
    assert img.shape == (2, 3, 64, 64)
    assert img.data.min() >= 0 and img.data.max() <= 1
    assert to_frame(img, 1).shape == (64, 64, 3)
    grads = backward(tape, loss, params)
    for prefix in ("fer.conv0", "fer.fc", "fer.lstm", "dec.fc", "dec.conv0", "dec.conv1"):
        assert any(np.abs(g).max() > 0 for n, g in grads.items() if n.startswith(prefix)), prefix
    assert not any(n.startswith("id.") for n in grads)


def test_total_loss_examples(rng):
    logits = Tensor(rng.normal(size=(4, 7)))
    labels = rng.integers(0, 7, 4)
    ce = ops.softmax_ce(logits, labels).item()
    half = Tensor(np.array(0.5))
    assert total_loss(logits, labels, half, half, LossWeights(0, 0)).item() == ce
    z = Tensor(np.zeros((2, 2)))
    out = total_loss(z, [0, 1], half, half, LossWeights(1, 1)).item()
    assert out == pytest.approx(math.log(2) + 1.0)
    assert total_loss(z, [0, 1], half, half, LossWeights(1, 1), has_apex=False).item() == pytest.approx(
        math.log(2) + 0.5)
    with pytest.raises(ConfigError):
        total_loss(z, [0, 1], half, half, (0.1, 0.5))


def test_total_loss_half_each_term():
    # logits whose CE is exactly 0.5, with dis and rec both 0.5
    p = math.exp(-0.5)
    logits = Tensor(np.array([[math.log(p), math.log(1 - p)]]))
    half = Tensor(np.array(0.5))
    assert total_loss(logits, [0], half, half, LossWeights(1, 1)).item() == pytest.approx(1.5, abs=1e-12)


def test_total_loss_gradient_is_linear(rng):
    cfg = SMALL
    params = init_params(cfg, 5)
    params.astype(np.float64)
    params.freeze("id.")
    x = frame_inputs(rng.integers(-30, 31, (4, 3, 16, 16, 3)), None, cfg.fer).astype(np.float64)
    labels = np.array([0, 1, 2, 1])
    z_i = rng.normal(size=(4, 6))
    target = Tensor(rng.random((4, 3, 16, 16)))
    w = LossWeights(0.3, 0.7)

    def grads(term):
        with Tape() as tape:
            z_e = expression_feature(x, params, cfg)
            logits = classify(z_e, params)
            dis = independence_penalty(z_e, z_i)
            rec = ops.l2_loss(decode_apex(z_i, z_e, params, cfg), target)
            loss = {"ce": ops.softmax_ce(logits, labels), "dis": dis, "rec": rec,
                    "all": total_loss(logits, labels, dis, rec, w)}[term]
        return backward(tape, loss, params)

    full, ce, dis, rec = grads("all"), grads("ce"), grads("dis"), grads("rec")
    for name in params.names("fer."):
        combined = ce[name] + w.alpha * dis[name] + w.beta * rec[name]
        assert np.allclose(full[name], combined, rtol=1e-10, atol=1e-12), name


# --- test-time path -------------------------------------------------------------

def small_gop(rng, n=5):
    base = rng.integers(0, 256, (64, 64, 3), dtype=np.uint8)
    frames = [Frame(np.clip(base.astype(int) + rng.integers(-9, 10, base.shape), 0, 255).astype(np.uint8))
              for _ in range(n)]
    return encode_video(frames, gop_length=n)


def test_predict_purity_and_round_trip(rng):
    cfg = ModelConfig()
    params = init_params(cfg, 0)
    bs = small_gop(rng)
    instrument.reset()
    (view,) = list(read_compressed(bs))
    label = predict(view, params, cfg)
    assert instrument.calls["decode_video"] == 0
    assert instrument.calls["extract_identity"] == 0
    assert instrument.calls["reconstruct_apex"] == 0
    (reparsed,) = list(read_compressed(parse_bitstream(bs.to_bytes()).to_bytes()))
    assert predict(reparsed, params, cfg) == label
    assert np.array_equal(predict_logits(reparsed, params, cfg), predict_logits(view, params, cfg))
    probs = ops.softmax(predict_logits(view, params, cfg))
    assert label == int(np.argmax(probs))


def test_predict_rejects_empty_gop(rng):
    cfg = ModelConfig()
    (view,) = list(read_compressed(encode_video([Frame.zeros(64, 64)])))
    with pytest.raises(ClassificationError):
        predict(view, init_params(cfg, 0), cfg)


def test_frozen_identity_hash_survives_training(corpus, fold_plan, identity_encoders):
    from compfer.pipeline import default_config, train_fold

    enc = identity_encoders(0)
    before = params_hash(enc.params, "id.")
    cfg = replace(default_config(), epochs=2)
    res = train_fold(corpus, fold_plan, 0, cfg, enc)
    assert params_hash(res.params, "id.") == before == params_hash(enc.params, "id.")
