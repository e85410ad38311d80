"""Regenerate the golden bitstream fixture used by the codec tests.

Run once; the outputs under tests/assets are frozen and checked in.

    python3 scripts/make_golden.py
"""

import json
from pathlib import Path

import numpy as np

from compfer.codec import decode_video, encode_video, write_ppm
from compfer.synthdata import generate_sequence

ASSETS = Path(__file__).resolve().parents[1] / "tests" / "assets"


def main() -> None:
    frames, _ = generate_sequence(identity_seed=42, label="surprise", T=10, jitter_seed=7, size=32)
    bs = encode_video(frames, gop_length=5, block_size=8, search_radius=4, quantizer_step=4)
    ASSETS.mkdir(parents=True, exist_ok=True)
    bs.save(ASSETS / "golden.rgop")
    decoded = decode_video(bs)
    for i, f in enumerate(decoded):
        write_ppm(ASSETS / f"golden_{i:02d}.ppm", f)
    err = max(int(np.abs(d.levels.astype(int) - s.levels).max()) for d, s in zip(decoded, frames))
    for i, f in enumerate(frames):
        write_ppm(ASSETS / f"source_{i:02d}.ppm", f)
    meta = {"frames": len(frames), "gop_length": 5, "quantizer_step": 4, "search_radius": 4,
            "max_abs_level_error": err}
    (ASSETS / "golden.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(json.dumps(meta))


if __name__ == "__main__":
    main()
