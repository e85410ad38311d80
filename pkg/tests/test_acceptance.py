"""Acceptance criteria 1-8, one test each.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary (and immediately, when run with ``-s``). Training runs are
shared through the session-scoped caches in ``conftest.py``.
"""

import hashlib
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from compfer.cli import main as cli_main
from compfer.codec import (
    Frame,
    MotionField,
    compute_residual,
    decode_video,
    encode_video,
    entropy_decode,
    entropy_encode,
    read_compressed,
    reconstruct,
)
from compfer.pipeline import bench_throughput, default_config, run_ablations

import test_autodiff_grad as grad_suite
from test_codec_bitstream import block_constant_sequence

pytestmark = pytest.mark.acceptance

VERDICTS: dict[int, str] = {}
SEEDS = (0, 1, 2)


def verdict(n: int, ok: bool, text: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {text}"
    VERDICTS[n] = line
    print(line)


# --- 1 ---------------------------------------------------------------------------

def test_criterion_1_codec_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    entropy_bad = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 6))
        b = np.zeros((n, 8, 8), np.int64)
        mask = rng.random(b.shape) < rng.random()
        b[mask] = rng.integers(-32768, 32768, size=int(mask.sum()))
        payload = entropy_encode(b)
        if not np.array_equal(entropy_decode(payload), b) or entropy_encode(entropy_decode(payload)) != payload:
            entropy_bad += 1
    recon_bad = 0
    for _ in range(1_000):
        prev = Frame(rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
        cur = Frame(rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
        mv = MotionField(rng.integers(-7, 8, (4, 4, 2)).astype(np.int16), 8)
        if reconstruct(prev, mv, compute_residual(prev, cur, mv)) != cur:
            recon_bad += 1
    frames = block_constant_sequence(rng, 16, 64, 64)
    exact = decode_video(encode_video(frames, gop_length=8, quantizer_step=1).to_bytes()) == frames
    elapsed = time.perf_counter() - t0
    ok = entropy_bad == 0 and recon_bad == 0 and exact and elapsed < 60
    verdict(1, ok, f"entropy mismatches {entropy_bad}/10000, reconstruction mismatches {recon_bad}/1000, "
                   f"qstep-1 exact {exact}, {elapsed:.1f}s (< 60s)")
    assert ok


# --- 2 ---------------------------------------------------------------------------

def test_criterion_2_compressed_decoded_equivalence(corpus):
    mismatched = 0
    for src in corpus.sources:
        chained = []
        for view in read_compressed(src):
            prev = view.i_frame
            chained.append(prev)
            for mv, res in view.p_frames:
                prev = reconstruct(prev, mv, res)
                chained.append(prev)
        if chained != decode_video(src):
            mismatched += 1
    ok = mismatched == 0 and len(corpus.sources) == 140
    verdict(2, ok, f"{len(corpus.sources) - mismatched}/{len(corpus.sources)} sequences bit-exact")
    assert ok


# --- 3 ---------------------------------------------------------------------------

def test_criterion_3_gradient_suite():
    suites = [grad_suite.test_elementwise, grad_suite.test_shape_ops, grad_suite.test_linear_and_matmul,
              grad_suite.test_conv2d, grad_suite.test_lstm_bptt, grad_suite.test_losses]
    failures = []
    for fn in suites:
        for seed in range(20):
            try:
                fn(seed)
            except AssertionError:
                failures.append(f"{fn.__name__}[{seed}]")
    try:
        grad_suite.test_end_to_end_encoder_lstm_classifier()
    except AssertionError:
        failures.append("end_to_end")
    ok = not failures
    verdict(3, ok, f"{len(suites)} op groups x 20 configs + end-to-end graph; failures: {failures or 'none'}")
    assert ok


# --- 4 ---------------------------------------------------------------------------

def test_criterion_4_learning_works(cross_validation):
    t0 = time.perf_counter()
    cv = cross_validation(default_config())
    acc = cv.mean_accuracy
    ok = acc >= 0.90
    folds = " ".join(f"{a:.2f}" for a in cv.fold_accuracy)
    verdict(4, ok, f"10-fold mean accuracy {acc:.4f} (>= 0.90, chance 0.143); folds [{folds}]; "
                   f"{time.perf_counter() - t0:.0f}s")
    assert ok


# --- 5 ---------------------------------------------------------------------------

def test_criterion_5_disentanglement_direction(cross_validation):
    rows, ok = [], True
    for seed in SEEDS:
        with_pen = cross_validation(replace(default_config(), seed=seed))
        without = cross_validation(replace(default_config(), seed=seed, alpha=0.0))
        lower = with_pen.mean_correlation < without.mean_correlation
        drop = without.mean_accuracy - with_pen.mean_accuracy
        ok &= lower and drop <= 0.05
        rows.append(f"seed {seed}: corr {with_pen.mean_correlation:.4f} vs {without.mean_correlation:.4f}, "
                    f"acc {with_pen.mean_accuracy:.4f} vs {without.mean_accuracy:.4f}")
    verdict(5, ok, "alpha 0.1 vs 0 held-out expression/identity |corr| strictly lower and accuracy drop <= 5 pts; "
                   + "; ".join(rows))
    assert ok


# --- 6 ---------------------------------------------------------------------------

def test_criterion_6_speed_direction(corpus, cross_validation):
    cfg = default_config()
    cv = cross_validation(cfg)
    res = bench_throughput(corpus.sources, cv.results[0].params, cfg.model, repeats=5)
    ok = res.ratio > 1.5 and res.identical
    verdict(6, ok, f"compressed {res.compressed_fps:.1f} fps vs decoded {res.decoded_fps:.1f} fps, "
                   f"ratio {res.ratio:.2f} (> 1.5), identical predictions {res.identical}")
    assert ok


# --- 7 ---------------------------------------------------------------------------

def test_criterion_7_ablation_directions(corpus, fold_plan, run_cache):
    rows = {r.tag: r for r in run_ablations(corpus, fold_plan, default_config(), seeds=SEEDS,
                                            bench_repeats=5, cache=run_cache)}
    base, no_apex, motion = rows["base"], rows["no_apex"], rows["plus_motion"]
    acc_ok = no_apex.mean_accuracy <= base.mean_accuracy
    fps_ok = motion.compressed_fps < base.compressed_fps
    verdict(7, acc_ok and fps_ok,
            f"no_apex acc {no_apex.mean_accuracy:.4f} <= base {base.mean_accuracy:.4f} ({acc_ok}); "
            f"plus_motion fps {motion.compressed_fps:.1f} < base {base.compressed_fps:.1f} ({fps_ok}); "
            f"plus_motion acc {motion.mean_accuracy:.4f} (reported only)")
    assert acc_ok and fps_ok


# --- 8 ---------------------------------------------------------------------------

def _run_pipeline(root: Path) -> dict[str, str]:
    """gen-data -> train -> eval through the CLI; returns sha256 of every output file."""
    data, out = root / "data", root / "run"
    assert cli_main(["gen-data", "--seed", "7", "--out-dir", str(data)]) == 0
    assert cli_main(["train", "--data", str(data / "manifest.csv"), "--seed", "7", "--epochs", "3",
                     "--out-dir", str(out)]) == 0
    assert cli_main(["eval", "--data", str(data / "manifest.csv"), "--out-dir", str(out)]) == 0
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_8_determinism(tmp_path, capsys):
    first = _run_pipeline(tmp_path / "a")
    second = _run_pipeline(tmp_path / "b")
    capsys.readouterr()
    reports = [k for k in first if k.startswith("run/") and k.endswith((".csv", ".json"))]
    ckpts = [k for k in first if k.endswith(".rprm")]
    same = first == second
    ok = same and len(ckpts) == 10 and {"run/folds.csv", "run/confusion.csv", "run/summary.json"} <= set(first)
    diff = sorted(k for k in first if first[k] != second.get(k))
    verdict(8, ok, f"{len(first)} files ({len(ckpts)} checkpoints, {len(reports)} reports/logs) "
                   f"byte-identical across two runs: {same}; differing: {diff or 'none'}")
    assert ok
