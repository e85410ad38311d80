"""Miniature GOP video codec with compressed-domain access."""

from compfer.codec.bitstream import (
    Bitstream,
    CodecParams,
    Gop,
    GopView,
    PRecord,
    decode_video,
    encode_video,
    parse_bitstream,
    read_compressed,
    read_motion,
    serialize,
)
from compfer.codec.entropy import entropy_decode, entropy_encode
from compfer.codec.frames import Frame, MotionField, ResidualFrame, read_image, read_ppm, write_ppm
from compfer.codec.motion import compute_residual, motion_search, predict_levels, reconstruct
from compfer.codec.transform import QuantizedBlock, dct8x8, dequantize, idct8x8, quantize

__all__ = [
    "Bitstream", "CodecParams", "Gop", "GopView", "PRecord", "decode_video", "encode_video",
    "parse_bitstream", "read_compressed", "read_motion", "serialize", "entropy_decode", "entropy_encode",
    "Frame", "MotionField", "ResidualFrame", "read_image", "read_ppm", "write_ppm",
    "compute_residual", "motion_search", "predict_levels", "reconstruct", "QuantizedBlock",
    "dct8x8", "dequantize", "idct8x8", "quantize",
]
