"""GOP bitstream: encoder, full decoder and compressed-domain reader.

File layout (little-endian)::

    "RGOP" u8 version=1 u16 h u16 w u8 block_size u16 quantizer_step u32 gop_count
    per GOP:
        u16 p_count
        h*w*3 bytes raw I-frame
        per P-frame: (h/bs)*(w/bs) pairs of i16 (dy, dx), u32 payload length, payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np

from compfer import instrument
from compfer.codec.entropy import entropy_decode, entropy_encode
from compfer.codec.frames import MAX_LEVEL, Frame, MotionField, ResidualFrame, check_block_grid
from compfer.codec.motion import motion_search, predict_levels
from compfer.codec.transform import N, qblocks_to_residual, residual_to_qblocks
from compfer.errors import ConfigError, DimensionError, ParseError

MAGIC = b"RGOP"
VERSION = 1
_HEADER = struct.Struct("<4sBHHBHI")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class CodecParams:
    gop_length: int = 16
    block_size: int = 8
    search_radius: int = 7
    quantizer_step: int = 4

    def __post_init__(self):
        if self.gop_length < 1:
            raise ConfigError("gop_length must be >= 1")
        if self.block_size < 1:
            raise ConfigError("block_size must be >= 1")
        if self.search_radius < 0:
            raise ConfigError("search_radius must be >= 0")
        if int(self.quantizer_step) != self.quantizer_step or self.quantizer_step < 1:
            raise ConfigError(f"quantizer_step must be an integer >= 1, got {self.quantizer_step}")


@dataclass(eq=False)
class PRecord:
    motion: MotionField
    qblocks: np.ndarray  # int16 (n_blocks, 8, 8)
    payload: bytes | None = None

    def encoded(self) -> bytes:
        if self.payload is None:
            self.payload = entropy_encode(self.qblocks)
        return self.payload


@dataclass(eq=False)
class Gop:
    i_frame: Frame
    p_records: list[PRecord] = field(default_factory=list)


@dataclass(eq=False)
class Bitstream:
    height: int
    width: int
    block_size: int
    quantizer_step: int
    gops: list[Gop] = field(default_factory=list)

    @property
    def gop_count(self) -> int:
        return len(self.gops)

    @property
    def frame_count(self) -> int:
        return sum(1 + len(g.p_records) for g in self.gops)

    def to_bytes(self) -> bytes:
        return serialize(self)

    def save(self, path) -> None:
        Path(path).write_bytes(serialize(self))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        return parse_bitstream(data)

    @classmethod
    def load(cls, path) -> "Bitstream":
        return parse_bitstream(Path(path).read_bytes())


@dataclass(eq=False)
class GopView:
    """Compressed-domain view of one GOP: no pixel reconstruction performed."""

    i_frame: Frame
    p_frames: list[tuple[MotionField, ResidualFrame]]

    def __len__(self) -> int:
        return len(self.p_frames)

    def residual_levels(self) -> np.ndarray:
        """(T, h, w, 3) int16 stack of the residuals."""
        if not self.p_frames:
            h, w = self.i_frame.height, self.i_frame.width
            return np.zeros((0, h, w, 3), np.int16)
        return np.stack([r.levels for _, r in self.p_frames])

    def motion_vectors(self) -> np.ndarray:
        """(T, gh, gw, 2) int16 stack of the motion grids."""
        return np.stack([m.vectors for m, _ in self.p_frames])


Source = Union[Bitstream, bytes, bytearray, memoryview]


# --- serialization -----------------------------------------------------------

def serialize(bs: Bitstream) -> bytes:
    parts = [
        _HEADER.pack(MAGIC, VERSION, bs.height, bs.width, bs.block_size, bs.quantizer_step, len(bs.gops))
    ]
    for gop in bs.gops:
        parts.append(_U16.pack(len(gop.p_records)))
        parts.append(np.ascontiguousarray(gop.i_frame.levels).tobytes())
        for rec in gop.p_records:
            parts.append(rec.motion.vectors.astype("<i2").tobytes())
            payload = rec.encoded()
            parts.append(_U32.pack(len(payload)))
            parts.append(payload)
    return b"".join(parts)


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.buf):
            raise ParseError(f"truncated bitstream while reading {what}", self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out


def _read_header(r: _Reader):
    magic, version, h, w, bsz, qstep, gop_count = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", 4)
    if bsz < 1 or h % bsz or w % bsz or h % N or w % N or h == 0 or w == 0:
        raise ParseError(f"inconsistent geometry h={h} w={w} block_size={bsz}", 5)
    if qstep < 1:
        raise ParseError("quantizer_step must be >= 1", 10)
    return h, w, bsz, qstep, gop_count


def _iter_raw(data) -> Iterator:
    """Yield the header, then (i_levels, [(mv, payload, payload_offset), ...]) per GOP."""
    r = _Reader(data)
    h, w, bsz, qstep, gop_count = _read_header(r)
    yield h, w, bsz, qstep, gop_count
    gh, gw = h // bsz, w // bsz
    mv_bytes = gh * gw * 4
    frame_bytes = h * w * 3
    for _ in range(gop_count):
        (p_count,) = _U16.unpack(r.take(2, "GOP p_count"))
        i_levels = np.frombuffer(r.take(frame_bytes, "I-frame"), dtype=np.uint8).reshape(h, w, 3)
        recs = []
        for _ in range(p_count):
            mv = np.frombuffer(r.take(mv_bytes, "motion grid"), dtype="<i2").reshape(gh, gw, 2)
            (n,) = _U32.unpack(r.take(4, "payload length"))
            off = r.pos
            recs.append((MotionField(mv.astype(np.int16), bsz), r.take(n, "residual payload"), off))
        yield i_levels, recs
    if r.pos != len(r.buf):
        raise ParseError("trailing bytes after last GOP", r.pos)


def parse_bitstream(data) -> Bitstream:
    """Parse and fully validate a bitstream (every payload is entropy-decoded)."""
    it = _iter_raw(data)
    h, w, bsz, qstep, _ = next(it)
    n_blocks = 3 * (h // N) * (w // N)
    bs = Bitstream(h, w, bsz, qstep)
    for i_levels, recs in it:
        gop = Gop(Frame(i_levels.copy()))
        for mv, payload, off in recs:
            payload = bytes(payload)
            q = entropy_decode(payload, n_blocks, base_offset=off)
            gop.p_records.append(PRecord(mv, q, payload))
        bs.gops.append(gop)
    return bs


# --- encoder -----------------------------------------------------------------

def _encode_p(prev_levels: np.ndarray, cur: Frame, params: CodecParams):
    prev = Frame(prev_levels)
    mv = motion_search(prev, cur, params.block_size, params.search_radius)
    pred = predict_levels(prev_levels, mv)
    res = cur.levels.astype(np.int16) - pred
    q = residual_to_qblocks(res, params.quantizer_step)
    res_hat = qblocks_to_residual(q, params.quantizer_step, cur.height, cur.width)
    recon = np.clip(pred + res_hat, 0, MAX_LEVEL).astype(np.uint8)
    return PRecord(mv, q), recon


def encode_video(frames: Sequence[Frame], gop_length: int = 16, block_size: int = 8,
                 search_radius: int = 7, quantizer_step: int = 4) -> Bitstream:
    """Encode frames into GOPs; prediction chains on reconstructed frames."""
    params = CodecParams(gop_length, block_size, search_radius, quantizer_step)
    frames = list(frames)
    if not frames:
        raise ValueError("encode_video needs at least one frame")
    h, w = frames[0].height, frames[0].width
    for f in frames:
        if f.shape != frames[0].shape:
            raise DimensionError(f"non-uniform frame shapes: {frames[0].shape} vs {f.shape}")
    check_block_grid(h, w, block_size)
    check_block_grid(h, w, N)
    if h > 0xFFFF or w > 0xFFFF:
        raise DimensionError("frame too large for the header")
    bs = Bitstream(h, w, block_size, quantizer_step)
    for start in range(0, len(frames), gop_length):
        chunk = frames[start : start + gop_length]
        gop = Gop(chunk[0])
        recon = chunk[0].levels
        for cur in chunk[1:]:
            rec, recon = _encode_p(recon, cur, params)
            gop.p_records.append(rec)
        bs.gops.append(gop)
    return bs


# --- decoders ----------------------------------------------------------------

def _gops(source: Source):
    """Yield (h, w, qstep, i_frame, [(mv, qblocks)]) for Bitstream objects or raw bytes."""
    if isinstance(source, Bitstream):
        for g in source.gops:
            yield source.height, source.width, source.quantizer_step, g.i_frame, [
                (r.motion, r.qblocks) for r in g.p_records
            ]
        return
    it = _iter_raw(source)
    h, w, _, qstep, _ = next(it)
    n_blocks = 3 * (h // N) * (w // N)
    for i_levels, recs in it:
        yield h, w, qstep, Frame(i_levels), [
            (mv, entropy_decode(p, n_blocks, base_offset=off)) for mv, p, off in recs
        ]


def read_compressed(source: Source) -> Iterator[GopView]:
    """Iterate GOPs yielding motion fields and dequantized residuals.

    Residuals are exactly what the decoder adds to its prediction, but no
    prediction or pixel reconstruction is done here.
    """
    for h, w, qstep, i_frame, recs in _gops(source):
        yield GopView(
            i_frame,
            [(mv, ResidualFrame(qblocks_to_residual(q, qstep, h, w))) for mv, q in recs],
        )


def read_motion(source: Source) -> Iterator[list[MotionField]]:
    """Per GOP, the motion fields of its P-frames (residual payloads are skipped)."""
    if isinstance(source, Bitstream):
        for g in source.gops:
            yield [r.motion for r in g.p_records]
        return
    it = _iter_raw(source)
    next(it)
    for _, recs in it:
        yield [mv for mv, _, _ in recs]


def decode_video(source: Source) -> list[Frame]:
    """Full pixel decode of every frame in stream order."""
    instrument.hit("decode_video")
    out: list[Frame] = []
    for h, w, qstep, i_frame, recs in _gops(source):
        out.append(i_frame)
        prev = i_frame.levels
        for mv, q in recs:
            pred = predict_levels(prev, mv)
            res = qblocks_to_residual(q, qstep, h, w)
            prev = np.clip(pred + res, 0, MAX_LEVEL).astype(np.uint8)
            out.append(Frame(prev))
    return out
