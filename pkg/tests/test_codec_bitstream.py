import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from compfer.codec import (
    Bitstream,
    CodecParams,
    Frame,
    decode_video,
    encode_video,
    parse_bitstream,
    read_compressed,
    read_motion,
    read_ppm,
    reconstruct,
)
from compfer.errors import ConfigError, DimensionError, ParseError

from conftest import ASSETS, random_frame


def block_constant_sequence(rng, n, h=32, w=32):
    """Flat 8x8 blocks, far apart in value, drifting by at most 3 levels a frame.

    Every residual is then block-constant, so a unit quantizer step is exact.
    """
    base = rng.choice(np.arange(20, 236, 40), size=(h // 8, w // 8, 3))
    out = []
    for _ in range(n):
        out.append(Frame(np.kron(base, np.ones((8, 8, 1))).astype(np.uint8)))
        base = np.clip(base + rng.integers(-3, 4, size=base.shape), 0, 255)
    return out


def test_single_frame_is_one_gop():
    bs = encode_video([Frame.zeros(16, 16)])
    assert bs.gop_count == 1 and len(bs.gops[0].p_records) == 0
    assert decode_video(bs) == [Frame.zeros(16, 16)]


def test_gop_count():
    frames = [Frame.zeros(16, 16)] * 30
    assert encode_video(frames, gop_length=10).gop_count == 3
    assert encode_video(frames, gop_length=16).gop_count == 2


def test_identical_frames_compress_well(rng):
    f = random_frame(rng, 64, 64)
    bs = encode_video([f] * 10, gop_length=10, quantizer_step=7)
    for rec in bs.gops[0].p_records:
        assert not rec.qblocks.any()
    raw = 10 * 64 * 64 * 3
    assert len(bs.to_bytes()) < raw / 5
    assert all(d == f for d in decode_video(bs))
    for view in read_compressed(bs):
        assert not view.residual_levels().any()


def test_step_one_exact_on_block_constant_content(rng):
    frames = block_constant_sequence(rng, 10)
    bs = encode_video(frames, gop_length=10, quantizer_step=1)
    assert decode_video(bs.to_bytes()) == frames


def test_empty_inputs():
    assert decode_video(Bitstream(16, 16, 8, 4)) == []
    with pytest.raises(ValueError):
        encode_video([])
    with pytest.raises(DimensionError):
        encode_video([Frame.zeros(16, 16), Frame.zeros(16, 24)])


def test_codec_params_validation():
    with pytest.raises(ConfigError):
        CodecParams(quantizer_step=0)
    with pytest.raises(ConfigError):
        CodecParams(search_radius=-1)
    with pytest.raises(ConfigError):
        encode_video([Frame.zeros(16, 16)], gop_length=0)


def test_golden_file():
    data = (ASSETS / "golden.rgop").read_bytes()
    meta = json.loads((ASSETS / "golden.json").read_text())
    decoded = decode_video(data)
    assert len(decoded) == meta["frames"]
    for i, f in enumerate(decoded):
        assert f == read_ppm(ASSETS / f"golden_{i:02d}.ppm")
        src = read_ppm(ASSETS / f"source_{i:02d}.ppm")
        assert np.abs(f.levels.astype(int) - src.levels).max() <= meta["max_abs_level_error"]
    # the stored bytes are also what the encoder produces today
    sources = [read_ppm(ASSETS / f"source_{i:02d}.ppm") for i in range(meta["frames"])]
    again = encode_video(sources, meta["gop_length"], 8, meta["search_radius"], meta["quantizer_step"])
    assert again.to_bytes() == data


def test_parse_serialize_identity():
    data = (ASSETS / "golden.rgop").read_bytes()
    assert parse_bitstream(data).to_bytes() == data


@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1), st.integers(1, 7), st.integers(1, 20), st.integers(0, 5))
def test_compressed_domain_equivalence(seed, n, step, radius):
    rng = np.random.default_rng(seed)
    base = random_frame(rng, 16, 24)
    frames = [Frame(np.clip(base.levels.astype(int) + rng.integers(-20, 21, base.shape), 0, 255).astype(np.uint8))
              for _ in range(n)]
    bs = encode_video(frames, gop_length=4, search_radius=radius, quantizer_step=step)
    data = bs.to_bytes()
    assert parse_bitstream(data).to_bytes() == data
    decoded = decode_video(data)
    assert len(decoded) == n
    chained = []
    for view in read_compressed(data):
        prev = view.i_frame
        chained.append(prev)
        for mv, res in view.p_frames:
            prev = reconstruct(prev, mv, res)
            chained.append(prev)
    assert chained == decoded
    motions = [m for g in read_motion(data) for m in g]
    assert motions == [mv for v in read_compressed(bs) for mv, _ in v.p_frames]


def test_gop_view_length():
    frames = [Frame.zeros(16, 16)] * 6
    (view,) = list(read_compressed(encode_video(frames, gop_length=6)))
    assert len(view) == 5
    assert view.residual_levels().shape == (5, 16, 16, 3)
    assert view.motion_vectors().shape == (5, 2, 2, 2)


def test_header_layout():
    data = encode_video([Frame.zeros(16, 24)], quantizer_step=3).to_bytes()
    assert struct.unpack("<4sBHHBHI", data[:16]) == (b"RGOP", 1, 16, 24, 8, 3, 1)


def test_parse_errors_carry_offsets():
    data = (ASSETS / "golden.rgop").read_bytes()
    with pytest.raises(ParseError) as e:
        parse_bitstream(b"XXXX" + data[4:])
    assert e.value.offset == 0
    with pytest.raises(ParseError) as e:
        parse_bitstream(data[:-3])
    assert e.value.offset is not None and e.value.offset <= len(data)
    with pytest.raises(ParseError, match="trailing"):
        parse_bitstream(data + b"\x01")
    with pytest.raises(ParseError):
        decode_video(data[:100])
