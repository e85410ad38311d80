"""Block motion estimation and motion-compensated prediction."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit

from compfer.codec.frames import (
    MAX_LEVEL,
    Frame,
    MotionField,
    ResidualFrame,
    check_block_grid,
    check_same_shape,
)
from compfer.errors import DimensionError


@lru_cache(maxsize=32)
def candidate_order(radius: int) -> tuple[tuple[int, int], ...]:
    """All offsets in the search square, sorted by the tie-break rule."""
    offs = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    return tuple(sorted(offs, key=lambda v: (abs(v[0]) + abs(v[1]), v[0], v[1])))


@njit(cache=True)
def _block_match(padded, target, cands, block_size, r, out):
    gh, gw = out.shape[0], out.shape[1]
    for by in range(gh):
        for bx in range(gw):
            y0, x0 = by * block_size, bx * block_size
            best = np.int64(1) << 62
            bdy, bdx = 0, 0
            for ci in range(cands.shape[0]):
                dy, dx = cands[ci, 0], cands[ci, 1]
                sy, sx = r + y0 - dy, r + x0 - dx
                sad = np.int64(0)
                for yy in range(block_size):
                    for xx in range(block_size):
                        for ch in range(3):
                            d = np.int64(target[y0 + yy, x0 + xx, ch]) - padded[sy + yy, sx + xx, ch]
                            sad += d if d >= 0 else -d
                    if sad >= best:
                        break
                if sad < best:
                    best, bdy, bdx = sad, dy, dx
            out[by, bx, 0] = bdy
            out[by, bx, 1] = bdx


def motion_search(prev: Frame, cur: Frame, block_size: int = 8, search_radius: int = 7) -> MotionField:
    """Exhaustive SAD block matching.

    Source pixels outside the frame are clamped to the nearest edge pixel, so
    any radius is valid. Candidates are visited in tie-break order and only a
    strictly smaller SAD replaces the incumbent, which also makes abandoning a
    candidate once its partial SAD reaches the incumbent safe.
    """
    check_same_shape(prev, cur)
    if search_radius < 0:
        raise ValueError("search_radius must be >= 0")
    h, w = prev.height, prev.width
    check_block_grid(h, w, block_size)
    r = search_radius
    padded = np.pad(prev.levels, ((r, r), (r, r), (0, 0)), mode="edge")
    cands = np.array(candidate_order(r), dtype=np.int64)
    vecs = np.zeros((h // block_size, w // block_size, 2), dtype=np.int16)
    _block_match(padded, cur.levels, cands, block_size, r, vecs)
    return MotionField(vecs, block_size)


def motion_search_reference(prev: Frame, cur: Frame, block_size: int = 8,
                            search_radius: int = 7) -> MotionField:
    """Vectorised full-frame version of :func:`motion_search` (no early exit)."""
    check_same_shape(prev, cur)
    h, w = prev.height, prev.width
    check_block_grid(h, w, block_size)
    gh, gw = h // block_size, w // block_size
    r = search_radius
    padded = np.pad(prev.levels.astype(np.int32), ((r, r), (r, r), (0, 0)), mode="edge")
    target = cur.levels.astype(np.int32)
    best = np.full((gh, gw), np.iinfo(np.int64).max, dtype=np.int64)
    vecs = np.zeros((gh, gw, 2), dtype=np.int16)
    for dy, dx in candidate_order(r):
        shifted = padded[r - dy : r - dy + h, r - dx : r - dx + w]
        sad = np.abs(target - shifted).reshape(gh, block_size, gw, block_size, 3).sum(axis=(1, 3, 4))
        better = sad < best
        if better.any():
            best[better] = sad[better]
            vecs[better] = (dy, dx)
    return MotionField(vecs, block_size)


def _check_field(frame_shape, mv: MotionField) -> None:
    if tuple(frame_shape[:2]) != mv.frame_shape:
        raise DimensionError(
            f"motion field covers {mv.frame_shape}, frame is {tuple(frame_shape[:2])}"
        )


def predict_levels(prev_levels: np.ndarray, mv: MotionField) -> np.ndarray:
    """Motion-compensated prediction P[i] = prev[clamp(i - v_i)] as int16 levels."""
    _check_field(prev_levels.shape, mv)
    h, w = prev_levels.shape[:2]
    b = mv.block_size
    if not mv.vectors.any():
        return prev_levels.astype(np.int16)
    dy = np.repeat(np.repeat(mv.vectors[..., 0], b, axis=0), b, axis=1)
    dx = np.repeat(np.repeat(mv.vectors[..., 1], b, axis=0), b, axis=1)
    ys = np.clip(np.arange(h)[:, None] - dy, 0, h - 1)
    xs = np.clip(np.arange(w)[None, :] - dx, 0, w - 1)
    return prev_levels[ys, xs].astype(np.int16)


def compute_residual(prev: Frame, cur: Frame, mv: MotionField) -> ResidualFrame:
    check_same_shape(prev, cur)
    pred = predict_levels(prev.levels, mv)
    return ResidualFrame(cur.levels.astype(np.int16) - pred)


def reconstruct(prev: Frame, mv: MotionField, res: ResidualFrame) -> Frame:
    """P^t = clip(prev shifted by the motion field + residual)."""
    check_same_shape(prev, res)
    pred = predict_levels(prev.levels, mv)
    return Frame(np.clip(pred + res.levels, 0, MAX_LEVEL).astype(np.uint8))
