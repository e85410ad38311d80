"""Entropy coding of quantized 8x8 blocks.

Payload layout, MSB-first bit order:

    per block:  ue(nnz + 1), then nnz pairs of ue(zero_run), se(level)
    end:        ue(0), zero bits up to the next byte boundary

Coefficients are visited in zigzag order. ``ue``/``se`` are unsigned/signed
Exp-Golomb codes. An all-zero block costs 3 bits.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from compfer.codec.transform import N, zigzag_scan, zigzag_unscan
from compfer.errors import DimensionError, ParseError

_OK = 0
_ERRORS = {
    1: "truncated stream",
    2: "invalid Exp-Golomb prefix",
    3: "zero run past end of block",
    4: "zero level in run/level pair",
    5: "nonzero padding after end marker",
    6: "trailing bytes after end marker",
    7: "coefficient outside 16-bit range",
    8: "block count mismatch",
}
_MAX_PREFIX = 32


@njit(cache=True)
def _bit_length(v):
    n = 0
    while v:
        n += 1
        v >>= 1
    return n


@njit(cache=True)
def _put_ue(buf, pos, v):
    code = v + 1
    n = _bit_length(code)
    pos += n - 1
    for i in range(n - 1, -1, -1):
        if (code >> i) & 1:
            buf[pos >> 3] |= 0x80 >> (pos & 7)
        pos += 1
    return pos


@njit(cache=True)
def _encode(zz):
    nblk = zz.shape[0]
    buf = np.zeros(nblk * 360 + 8, dtype=np.uint8)
    pos = 0
    for b in range(nblk):
        nnz = 0
        for k in range(64):
            if zz[b, k] != 0:
                nnz += 1
        pos = _put_ue(buf, pos, nnz + 1)
        run = 0
        for k in range(64):
            lv = zz[b, k]
            if lv == 0:
                run += 1
            else:
                pos = _put_ue(buf, pos, run)
                pos = _put_ue(buf, pos, 2 * lv - 1 if lv > 0 else -2 * lv)
                run = 0
    pos = _put_ue(buf, pos, 0)
    return buf[: (pos + 7) >> 3]


@njit(cache=True)
def _get_ue(data, pos, nbits):
    # returns (value, new_pos, status)
    zeros = 0
    while True:
        if pos >= nbits:
            return 0, pos, 1
        bit = (data[pos >> 3] >> (7 - (pos & 7))) & 1
        pos += 1
        if bit:
            break
        zeros += 1
        if zeros > _MAX_PREFIX:
            return 0, pos, 2
    if pos + zeros > nbits:
        return 0, pos, 1
    val = 1
    for _ in range(zeros):
        val = (val << 1) | ((data[pos >> 3] >> (7 - (pos & 7))) & 1)
        pos += 1
    return val - 1, pos, 0


@njit(cache=True)
def _decode(data, expected):
    nbits = data.shape[0] * 8
    cap = expected if expected >= 0 else 16
    out = np.zeros((max(cap, 1), 64), dtype=np.int16)
    nblk = 0
    pos = 0
    while True:
        start = pos
        k, pos, st = _get_ue(data, pos, nbits)
        if st:
            return out[:nblk], st, start
        if k == 0:
            break
        if expected >= 0 and nblk >= expected:
            return out[:nblk], 8, start
        if nblk >= out.shape[0]:
            grown = np.zeros((out.shape[0] * 2, 64), dtype=np.int16)
            grown[:nblk] = out[:nblk]
            out = grown
        idx = 0
        for _ in range(k - 1):
            start = pos
            run, pos, st = _get_ue(data, pos, nbits)
            if st:
                return out[:nblk], st, start
            idx += run
            if idx >= 64:
                return out[:nblk], 3, start
            start = pos
            code, pos, st = _get_ue(data, pos, nbits)
            if st:
                return out[:nblk], st, start
            if code == 0:
                return out[:nblk], 4, start
            lv = (code + 1) // 2 if code & 1 else -(code // 2)
            if lv > 32767 or lv < -32768:
                return out[:nblk], 7, start
            out[nblk, idx] = lv
            idx += 1
        nblk += 1
    # end marker consumed; the rest of the current byte must be zero padding
    while pos & 7:
        if (data[pos >> 3] >> (7 - (pos & 7))) & 1:
            return out[:nblk], 5, pos
        pos += 1
    if pos < nbits:
        return out[:nblk], 6, pos
    if expected >= 0 and nblk != expected:
        return out[:nblk], 8, pos
    return out[:nblk], 0, pos


def entropy_encode(blocks) -> bytes:
    """Encode an (n, 8, 8) stack of quantized integer blocks."""
    b = np.asarray(blocks)
    if b.ndim == 2:
        b = b[None]
    if b.ndim != 3 or b.shape[1:] != (N, N):
        raise DimensionError(f"expected (n, 8, 8) blocks, got {b.shape}")
    if np.any(b < -32768) or np.any(b > 32767):
        raise ValueError("coefficient outside 16-bit range")
    zz = np.ascontiguousarray(zigzag_scan(b.astype(np.int64)))
    return _encode(zz).tobytes()


def entropy_decode(payload: bytes, n_blocks: int | None = None, base_offset: int = 0) -> np.ndarray:
    """Inverse of :func:`entropy_encode`; returns an int16 (n, 8, 8) stack.

    Raises ``ParseError`` carrying the absolute byte offset
    (``base_offset`` + offset inside the payload).
    """
    data = np.frombuffer(payload, dtype=np.uint8)
    blocks, status, bitpos = _decode(data, -1 if n_blocks is None else int(n_blocks))
    if status != _OK:
        raise ParseError(f"entropy payload: {_ERRORS[status]}", base_offset + bitpos // 8)
    return zigzag_unscan(blocks)
