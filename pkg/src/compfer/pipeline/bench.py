"""Throughput of the compressed-domain path versus a full-decode baseline.

Both paths run the same network on bit-identical residuals. The compressed
path reads residuals straight from the bitstream; the decoded path first
reconstructs every pixel and then recomputes the residuals from consecutive
decoded frames, which is the work a pixel-domain pipeline cannot skip.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from compfer.autodiff.tensor import ParamStore
from compfer.codec.bitstream import decode_video, read_compressed, read_motion
from compfer.codec.motion import predict_levels
from compfer.model.config import ModelConfig
from compfer.model.network import frame_inputs, logits_from_inputs, predict

MIN_SEQUENCES = 100


def compressed_predictions(sources, params: ParamStore, model: ModelConfig) -> list[int]:
    return [predict(view, params, model) for src in sources for view in read_compressed(src)]


def decoded_predictions(sources, params: ParamStore, model: ModelConfig) -> list[int]:
    out = []
    use_motion = model.fer.input_mode == "residual_plus_motion"
    for src in sources:
        frames = decode_video(src)
        pos = 0
        for mvs in read_motion(src):
            gop = frames[pos : pos + 1 + len(mvs)]
            pos += len(gop)
            res = np.stack([gop[t + 1].levels.astype(np.int16) - predict_levels(gop[t].levels, mv)
                            for t, mv in enumerate(mvs)])
            motion = np.stack([mv.vectors for mv in mvs]) if use_motion else None
            bs = mvs[0].block_size
            x = frame_inputs(res, motion, model.fer, bs)
            out.append(int(np.argmax(logits_from_inputs(x, params, model))))
    return out


@dataclass
class BenchResult:
    compressed_fps: float
    decoded_fps: float
    ratio: float
    identical: bool
    n_sequences: int
    n_frames: int
    repeats: int

    def to_dict(self) -> dict:
        return asdict(self)


def _median_seconds(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def count_frames(sources) -> int:
    return sum(1 + len(mvs) for src in sources for mvs in read_motion(src))


def bench_throughput(sources, params: ParamStore, model: ModelConfig, repeats: int = 5,
                     min_sequences: int = MIN_SEQUENCES) -> BenchResult:
    """Frames per second of both paths: median of ``repeats`` timed passes after one warm-up."""
    sources = list(sources)
    if len(sources) < min_sequences:
        raise ValueError(f"benchmark needs at least {min_sequences} sequences, got {len(sources)}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    # the warm-up pass doubles as the equivalence check
    a = compressed_predictions(sources, params, model)
    b = decoded_predictions(sources, params, model)
    frames = count_frames(sources)
    tc = _median_seconds(lambda: compressed_predictions(sources, params, model), repeats)
    td = _median_seconds(lambda: decoded_predictions(sources, params, model), repeats)
    cf, df = frames / tc, frames / td
    return BenchResult(cf, df, cf / df, a == b, len(sources), frames, repeats)
