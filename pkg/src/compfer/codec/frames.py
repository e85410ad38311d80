"""Frame containers and PPM image I/O.

Pixels live on the 8-bit level grid: a ``Frame`` stores ``uint8`` levels and a
``ResidualFrame`` stores signed ``int16`` level differences. The float views
(``.data``) divide by 255, so frame values sit in [0, 1] and residual values in
[-1, 1]. Keeping the codec arithmetic in integers is what makes
prediction + residual reproduce the source exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from compfer.errors import DimensionError, ParseError

MAX_LEVEL = 255


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True, eq=False)
class Frame:
    """An RGB image of shape (height, width, 3) in 8-bit levels."""

    levels: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels)
        if lv.ndim != 3 or lv.shape[2] != 3:
            raise DimensionError(f"frame must be (h, w, 3), got {lv.shape}")
        if lv.dtype != np.uint8:
            if np.any(lv < 0) or np.any(lv > MAX_LEVEL):
                raise ValueError("frame levels out of [0, 255]")
            lv = lv.astype(np.uint8)
        object.__setattr__(self, "levels", lv)

    @classmethod
    def from_float(cls, values) -> "Frame":
        v = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("frame values must be finite")
        lv = _round_half_away(np.clip(v, 0.0, 1.0) * MAX_LEVEL)
        return cls(lv.astype(np.uint8))

    @classmethod
    def zeros(cls, height: int, width: int) -> "Frame":
        return cls(np.zeros((height, width, 3), dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.levels.shape[0]

    @property
    def width(self) -> int:
        return self.levels.shape[1]

    @property
    def channels(self) -> int:
        return 3

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.levels.shape

    @property
    def data(self) -> np.ndarray:
        return self.levels.astype(np.float32) / MAX_LEVEL

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.levels, other.levels))

    def __hash__(self):
        return hash((self.shape, self.levels.tobytes()))


@dataclass(frozen=True, eq=False)
class ResidualFrame:
    """Signed per-pixel correction added to a motion-compensated prediction."""

    levels: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels)
        if lv.ndim != 3 or lv.shape[2] != 3:
            raise DimensionError(f"residual must be (h, w, 3), got {lv.shape}")
        if np.any(lv < -MAX_LEVEL) or np.any(lv > MAX_LEVEL):
            raise ValueError("residual levels out of [-255, 255]")
        object.__setattr__(self, "levels", lv.astype(np.int16, copy=False))

    @property
    def height(self) -> int:
        return self.levels.shape[0]

    @property
    def width(self) -> int:
        return self.levels.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.levels.shape

    @property
    def data(self) -> np.ndarray:
        return self.levels.astype(np.float32) / MAX_LEVEL

    def __eq__(self, other):
        if not isinstance(other, ResidualFrame):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.levels, other.levels))


@dataclass(frozen=True, eq=False)
class MotionField:
    """Per-macroblock integer displacement (dy, dx).

    Vector ``v`` at a block means every pixel ``i`` in that block is predicted
    from pixel ``i - v`` of the previous frame.
    """

    vectors: np.ndarray
    block_size: int = 8

    def __post_init__(self):
        v = np.asarray(self.vectors)
        if v.ndim != 3 or v.shape[2] != 2:
            raise DimensionError(f"motion grid must be (gh, gw, 2), got {v.shape}")
        object.__setattr__(self, "vectors", v.astype(np.int16, copy=False))

    @classmethod
    def zeros(cls, height: int, width: int, block_size: int = 8) -> "MotionField":
        check_block_grid(height, width, block_size)
        return cls(np.zeros((height // block_size, width // block_size, 2), np.int16), block_size)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.vectors.shape[:2]

    @property
    def frame_shape(self) -> tuple[int, int]:
        gh, gw = self.grid_shape
        return gh * self.block_size, gw * self.block_size

    def max_magnitude(self) -> int:
        if self.vectors.size == 0:
            return 0
        return int(np.abs(self.vectors).max())

    def expand(self) -> np.ndarray:
        """Per-pixel (h, w, 2) field, constant inside each macroblock."""
        b = self.block_size
        return np.repeat(np.repeat(self.vectors, b, axis=0), b, axis=1)

    def __eq__(self, other):
        if not isinstance(other, MotionField):
            return NotImplemented
        return self.block_size == other.block_size and bool(
            np.array_equal(self.vectors, other.vectors)
        )


def check_block_grid(height: int, width: int, block_size: int) -> None:
    if block_size < 1:
        raise DimensionError("block_size must be positive")
    if height % block_size or width % block_size:
        raise DimensionError(
            f"frame {height}x{width} is not a multiple of block size {block_size}"
        )


def check_same_shape(*items) -> None:
    shapes = {tuple(x.shape) for x in items}
    if len(shapes) != 1:
        raise DimensionError(f"shape mismatch: {sorted(shapes)}")


# --- PPM (binary P6) ---------------------------------------------------------

def write_ppm(path, frame: Frame) -> None:
    path = Path(path)
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    path.write_bytes(header + np.ascontiguousarray(frame.levels).tobytes())


def _ppm_tokens(buf: bytes, count: int, path) -> tuple[list[int], int]:
    tokens: list[int] = []
    pos = 2
    while len(tokens) < count:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: malformed PPM header", start)
        tokens.append(int(buf[start:pos]))
    return tokens, pos + 1


def read_ppm(path) -> Frame:
    buf = Path(path).read_bytes()
    if buf[:2] != b"P6":
        raise ParseError(f"{path}: not a binary PPM (P6)", 0)
    (width, height, maxval), pos = _ppm_tokens(buf, 3, path)
    if maxval != 255:
        raise ParseError(f"{path}: only 8-bit PPM supported (maxval={maxval})", pos)
    n = width * height * 3
    if len(buf) - pos < n:
        raise ParseError(f"{path}: truncated pixel data", len(buf))
    levels = np.frombuffer(buf, dtype=np.uint8, count=n, offset=pos)
    return Frame(levels.reshape(height, width, 3).copy())


def read_image(path) -> Frame:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        return read_ppm(path)
    from PIL import Image

    with Image.open(path) as im:
        return Frame(np.asarray(im.convert("RGB"), dtype=np.uint8).copy())
