"""In-memory corpus: compressed-domain views plus the training-only extras."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from compfer.codec.bitstream import GopView, decode_video, read_compressed
from compfer.errors import ConfigError, ParseError
from compfer.synthdata.corpus import DatasetManifest


@dataclass(eq=False)
class CorpusData:
    """One entry per manifest record.

    ``views`` hold the first GOP of each sequence as read from the bitstream
    (this is all the classifier ever sees). ``apex_frames`` are decoded pixels,
    used only as the reconstruction target during training; ``apex`` is -1
    when the manifest has no annotation.
    """

    views: list[GopView]
    labels: np.ndarray
    subjects: list[str]
    apex: np.ndarray
    apex_frames: np.ndarray
    paths: list[str]
    sources: list[bytes]

    def __len__(self) -> int:
        return len(self.views)

    @property
    def i_frames(self) -> np.ndarray:
        return np.stack([v.i_frame.levels for v in self.views])

    @property
    def frame_shape(self) -> tuple[int, int]:
        f = self.views[0].i_frame
        return f.height, f.width

    def indices_for(self, subjects) -> np.ndarray:
        keep = set(subjects)
        return np.array([i for i, s in enumerate(self.subjects) if s in keep], dtype=np.int64)


def load_corpus(manifest_path) -> CorpusData:
    """Read every RGOP sequence named by a manifest."""
    manifest = DatasetManifest.read_csv(manifest_path)
    if not manifest.records:
        raise ConfigError(f"{manifest_path}: manifest has no records")
    views, apex_frames, apex, sources = [], [], [], []
    for rec in manifest.records:
        path = manifest.resolve(rec)
        if path.suffix.lower() != ".rgop":
            raise ParseError(f"{path}: training reads RGOP bitstreams; encode frame folders first", rec.row)
        try:
            blob = Path(path).read_bytes()
        except OSError as err:
            raise ParseError(f"{path}: {err.strerror}", rec.row) from None
        view = next(read_compressed(blob))
        if len(view) == 0:
            raise ParseError(f"{path}: first GOP has no P-frames", rec.row)
        a = -1 if rec.apex_index is None else rec.apex_index
        if a > len(view):
            raise ParseError(f"{path}: apex index {a} lies beyond the first GOP", rec.row)
        # the pixel target is training-only data, so a full decode is fine here
        frames = decode_video(blob)
        apex_frames.append(frames[max(a, 0)].levels)
        views.append(view)
        apex.append(a)
        sources.append(blob)
    return CorpusData(
        views=views,
        labels=np.array([r.label for r in manifest.records], dtype=np.int64),
        subjects=[r.subject for r in manifest.records],
        apex=np.array(apex, dtype=np.int64),
        apex_frames=np.stack(apex_frames),
        paths=[r.path for r in manifest.records],
        sources=sources,
    )
