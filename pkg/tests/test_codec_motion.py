import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compfer.codec import Frame, MotionField, ResidualFrame, compute_residual, motion_search, reconstruct
from compfer.codec.motion import candidate_order, motion_search_reference, predict_levels
from compfer.errors import DimensionError

from conftest import random_frame


def smooth_frame(seed, h=32, w=32):
    """Band-limited texture with no flat regions, so block matches are unique."""
    y, x = np.mgrid[0:h, 0:w].astype(float)
    rng = np.random.default_rng(seed)
    chans = []
    for _ in range(3):
        a, b, c, d = rng.uniform(0.15, 0.45, 4)
        chans.append(0.5 + 0.2 * np.sin(a * x + b * y) + 0.2 * np.cos(c * x * 0.7 - d * y * 1.3))
    return Frame.from_float(np.stack(chans, axis=-1))


def brute_force_vector(prev, cur, by, bx, b, r):
    """Minimiser of SAD over every offset, using the documented tie-break."""
    h, w = prev.height, prev.width
    best = None
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            sad = 0
            for y in range(by * b, by * b + b):
                for x in range(bx * b, bx * b + b):
                    sy = min(max(y - dy, 0), h - 1)
                    sx = min(max(x - dx, 0), w - 1)
                    sad += int(np.abs(cur.levels[y, x].astype(int) - prev.levels[sy, sx]).sum())
            key = (sad, abs(dy) + abs(dx), dy, dx)
            if best is None or key < best:
                best = key
    return best[2], best[3]


def test_identical_frames_give_zero_motion(rng):
    f = random_frame(rng)
    assert not motion_search(f, f).vectors.any()


def test_circular_shift_recovered():
    prev = smooth_frame(3)
    cur = Frame(np.roll(prev.levels, 2, axis=1))
    mv = motion_search(prev, cur, block_size=8, search_radius=4)
    # blocks whose source window wraps around the left edge are not interior
    interior = mv.vectors[:, 1:]
    assert np.all(interior == np.array([0, 2]))


def test_matches_brute_force_sad():
    prev = smooth_frame(5, 16, 16)
    cur = Frame(np.roll(smooth_frame(5, 16, 16).levels, (1, -2), axis=(0, 1)))
    mv = motion_search(prev, cur, 8, 3)
    for by in range(2):
        for bx in range(2):
            assert tuple(mv.vectors[by, bx]) == brute_force_vector(prev, cur, by, bx, 8, 3)


def test_grid_shape():
    f = Frame.zeros(16, 16)
    assert motion_search(f, f, block_size=8).grid_shape == (2, 2)


def test_tie_break_prefers_small_then_lexicographic():
    # a flat frame makes every candidate tie at SAD 0
    f = Frame(np.full((16, 16, 3), 90, np.uint8))
    assert not motion_search(f, f, 8, 5).vectors.any()
    order = candidate_order(1)
    assert order[0] == (0, 0)
    assert order[1:5] == ((-1, 0), (0, -1), (0, 1), (1, 0))


@given(st.integers(0, 2**31 - 1), st.integers(0, 6))
def test_numba_search_equals_vectorised_reference(seed, radius):
    rng = np.random.default_rng(seed)
    prev = random_frame(rng, 24, 32)
    cur = Frame(np.roll(prev.levels, (rng.integers(-3, 4), rng.integers(-3, 4)), axis=(0, 1)))
    a = motion_search(prev, cur, 8, radius)
    b = motion_search_reference(prev, cur, 8, radius)
    assert a == b
    assert a.max_magnitude() <= radius


def test_huge_radius_clamps_instead_of_failing(rng):
    prev, cur = random_frame(rng, 16, 16), random_frame(rng, 16, 16)
    mv = motion_search(prev, cur, 8, 40)
    assert mv.max_magnitude() <= 40


def test_shape_mismatch_raises(rng):
    with pytest.raises(DimensionError):
        motion_search(random_frame(rng, 16, 16), random_frame(rng, 16, 24))
    with pytest.raises(DimensionError):
        compute_residual(random_frame(rng, 16, 16), random_frame(rng, 16, 24), MotionField.zeros(16, 16))
    with pytest.raises(DimensionError):
        reconstruct(random_frame(rng, 16, 16), MotionField.zeros(24, 24),
                    ResidualFrame(np.zeros((16, 16, 3), np.int16)))


def test_zero_motion_residual_is_difference(rng):
    prev, cur = random_frame(rng), random_frame(rng)
    res = compute_residual(prev, cur, MotionField.zeros(32, 32))
    assert np.array_equal(res.levels, cur.levels.astype(np.int16) - prev.levels)
    assert not compute_residual(prev, prev, MotionField.zeros(32, 32)).levels.any()


def test_reconstruct_identity_and_addition():
    prev = Frame(np.full((16, 16, 3), 128, np.uint8))
    zero = ResidualFrame(np.zeros((16, 16, 3), np.int16))
    assert reconstruct(prev, MotionField.zeros(16, 16), zero) == prev
    # on the level grid 0.5 + 0.25 = 0.75 reads 128 + 64 = 192
    quarter = ResidualFrame(np.full((16, 16, 3), 64, np.int16))
    out = reconstruct(prev, MotionField.zeros(16, 16), quarter)
    assert np.all(out.levels == 192)
    assert np.allclose(out.data, 192 / 255)


def test_reconstruct_clips():
    prev = Frame(np.full((8, 8, 3), 250, np.uint8))
    res = ResidualFrame(np.full((8, 8, 3), 100, np.int16))
    assert np.all(reconstruct(prev, MotionField.zeros(8, 8), res).levels == 255)


@given(st.integers(0, 2**31 - 1), st.integers(0, 7))
def test_reconstruction_identity_random_fields(seed, radius):
    rng = np.random.default_rng(seed)
    prev, cur = random_frame(rng, 24, 16), random_frame(rng, 24, 16)
    vec = rng.integers(-radius, radius + 1, size=(3, 2, 2)).astype(np.int16)
    mv = MotionField(vec, 8)
    assert reconstruct(prev, mv, compute_residual(prev, cur, mv)) == cur


def test_expanded_field_is_block_constant(rng):
    mv = MotionField(rng.integers(-7, 8, size=(3, 4, 2)).astype(np.int16), 8)
    full = mv.expand()
    assert full.shape == (24, 32, 2)
    blocks = full.reshape(3, 8, 4, 8, 2)
    assert np.all(blocks == blocks[:, :1, :, :1, :])


def test_prediction_replicates_edges():
    prev = np.arange(16 * 16 * 3, dtype=np.int64).reshape(16, 16, 3) % 251
    prev = prev.astype(np.uint8)
    mv = MotionField(np.array([[[0, 3], [0, 0]], [[0, 0], [-2, 0]]], np.int16), 8)
    pred = predict_levels(prev, mv)
    # top-left block reads columns x - 3 clamped at 0
    assert np.array_equal(pred[0, 0], prev[0, 0])
    assert np.array_equal(pred[0, 5], prev[0, 2])
    # bottom-right block reads rows y + 2 clamped at 15
    assert np.array_equal(pred[15, 15], prev[15, 15])
    assert np.array_equal(pred[8, 8], prev[10, 8])


def test_searched_motion_reconstructs_exactly(rng):
    prev, cur = random_frame(rng), random_frame(rng)
    mv = motion_search(prev, cur, 8, 4)
    assert reconstruct(prev, mv, compute_residual(prev, cur, mv)) == cur
