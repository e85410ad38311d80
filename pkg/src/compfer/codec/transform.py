"""8x8 orthonormal DCT-II, uniform scalar quantizer, zigzag scan."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from compfer.errors import ConfigError, DimensionError

N = 8


def _dct_matrix(n: int = N) -> np.ndarray:
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * x + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


DCT_MATRIX = _dct_matrix()


def _zigzag(n: int = N) -> np.ndarray:
    order = sorted(
        ((y, x) for y in range(n) for x in range(n)),
        key=lambda p: (p[0] + p[1], p[0] if (p[0] + p[1]) % 2 else p[1]),
    )
    return np.array([y * n + x for y, x in order], dtype=np.int64)


ZIGZAG = _zigzag()
INV_ZIGZAG = np.argsort(ZIGZAG)


def _check_blocks(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-2:] != (N, N):
        raise DimensionError(f"expected trailing 8x8 blocks, got {a.shape}")
    return a


def dct8x8(block) -> np.ndarray:
    """Orthonormal 2-D DCT-II of one (8, 8) block or a stack (..., 8, 8)."""
    x = _check_blocks(block)
    return DCT_MATRIX @ x @ DCT_MATRIX.T


def idct8x8(coeffs) -> np.ndarray:
    c = _check_blocks(coeffs)
    return DCT_MATRIX.T @ c @ DCT_MATRIX


@dataclass(frozen=True, eq=False)
class QuantizedBlock:
    coeffs: np.ndarray
    quantizer_step: int

    def __post_init__(self):
        if self.quantizer_step < 1:
            raise ConfigError(f"quantizer_step must be >= 1, got {self.quantizer_step}")
        c = np.asarray(self.coeffs)
        if c.shape[-2:] != (N, N):
            raise DimensionError(f"quantized block must be 8x8, got {c.shape}")
        if np.any(c < -32768) or np.any(c > 32767):
            raise ValueError("quantized coefficient outside 16-bit range")
        object.__setattr__(self, "coeffs", c.astype(np.int16))


def _check_step(step) -> int:
    if int(step) != step or step < 1:
        raise ConfigError(f"quantizer step must be an integer >= 1, got {step}")
    return int(step)


def quantize_array(coeffs, step: int) -> np.ndarray:
    """Round-half-away-from-zero of coeffs / step, as int16."""
    step = _check_step(step)
    x = np.asarray(coeffs, dtype=np.float64) / step
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return q.astype(np.int16)


def quantize(coeffs, step: int) -> QuantizedBlock:
    return QuantizedBlock(quantize_array(coeffs, step), _check_step(step))


def dequantize(q: QuantizedBlock) -> np.ndarray:
    return q.coeffs.astype(np.float64) * q.quantizer_step


def zigzag_scan(blocks: np.ndarray) -> np.ndarray:
    b = np.asarray(blocks)
    return b.reshape(*b.shape[:-2], N * N)[..., ZIGZAG]


def zigzag_unscan(seq: np.ndarray) -> np.ndarray:
    s = np.asarray(seq)
    return s[..., INV_ZIGZAG].reshape(*s.shape[:-1], N, N)


# --- residual planes <-> block stacks ---------------------------------------

def frame_to_blocks(levels: np.ndarray) -> np.ndarray:
    """(h, w, 3) -> (3 * h/8 * w/8, 8, 8), channel-major, raster order."""
    h, w, c = levels.shape
    if h % N or w % N:
        raise DimensionError(f"frame {h}x{w} is not a multiple of 8")
    b = levels.transpose(2, 0, 1).reshape(c, h // N, N, w // N, N)
    return b.transpose(0, 1, 3, 2, 4).reshape(-1, N, N)


def blocks_to_frame(blocks: np.ndarray, height: int, width: int) -> np.ndarray:
    b = blocks.reshape(3, height // N, width // N, N, N)
    return b.transpose(0, 1, 3, 2, 4).reshape(3, height, width).transpose(1, 2, 0)


def residual_to_qblocks(res_levels: np.ndarray, step: int) -> np.ndarray:
    return quantize_array(dct8x8(frame_to_blocks(res_levels)), step)


def qblocks_to_residual(qblocks: np.ndarray, step: int, height: int, width: int) -> np.ndarray:
    """Dequantize + inverse DCT, rounded back onto the integer level grid.

    All-zero blocks skip the transform.
    """
    out = np.zeros((qblocks.shape[0], N, N), dtype=np.int16)
    nz = np.flatnonzero(qblocks.reshape(qblocks.shape[0], -1).any(axis=1))
    if nz.size:
        pix = idct8x8(qblocks[nz].astype(np.float64) * step)
        pix = np.sign(pix) * np.floor(np.abs(pix) + 0.5)
        out[nz] = np.clip(pix, -255, 255).astype(np.int16)
    return blocks_to_frame(out, height, width)
