"""Corpus generation, CSV manifests and the external-dataset loader."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from compfer.codec.bitstream import CodecParams, decode_video, encode_video
from compfer.codec.frames import Frame, read_image
from compfer.errors import ParseError
from compfer.synthdata.render import CLASSES, class_id, generate_sequence

MANIFEST_HEADER = ("path", "subject", "label", "apex_index", "frames")
IMAGE_SUFFIXES = (".ppm", ".png")


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    subject: str
    label: int
    apex_index: int | None
    frames: int = -1  # -1: unknown until the frames are read
    row: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.apex_index is not None and self.apex_index < 0:
            raise ValueError(f"negative apex index {self.apex_index}")
        if self.apex_index is not None and 0 <= self.frames <= self.apex_index:
            raise ValueError(f"apex index {self.apex_index} outside [0, {self.frames})")


@dataclass
class DatasetManifest:
    records: list[ManifestRecord] = field(default_factory=list)
    root: Path = Path(".")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def subjects(self) -> list[str]:
        return sorted({r.subject for r in self.records})

    def resolve(self, rec: ManifestRecord) -> Path:
        p = Path(rec.path)
        return p if p.is_absolute() else self.root / p

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MANIFEST_HEADER)
            for r in self.records:
                w.writerow([r.path, r.subject, CLASSES[r.label],
                            "" if r.apex_index is None else r.apex_index,
                            "" if r.frames < 0 else r.frames])

    @classmethod
    def read_csv(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            fh = path.open(newline="", encoding="utf-8")
        except OSError as err:
            raise ParseError(f"{path}: cannot open manifest ({err.strerror})", 0) from None
        records = []
        with fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return cls([], path.parent)
            header = [h.strip() for h in header]
            missing = {"path", "subject", "label"} - set(header)
            if missing:
                raise ParseError(f"{path}: manifest header lacks {sorted(missing)}", 1)
            col = {name: i for i, name in enumerate(header)}

            def cell(row, name):
                return row[col[name]].strip() if name in col else ""

            for rowno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise ParseError(f"{path}: expected {len(header)} columns, got {len(row)}", rowno)
                try:
                    apex, frames = cell(row, "apex_index"), cell(row, "frames")
                    if not cell(row, "path") or not cell(row, "subject"):
                        raise ValueError("empty path or subject")
                    records.append(ManifestRecord(
                        path=cell(row, "path"),
                        subject=cell(row, "subject"),
                        label=class_id(_label_value(cell(row, "label"))),
                        apex_index=int(apex) if apex else None,
                        frames=int(frames) if frames else -1,
                        row=rowno,
                    ))
                except ValueError as err:
                    raise ParseError(f"{path}: {err}", rowno) from None
        return cls(records, path.parent)


def _label_value(raw: str):
    raw = raw.strip()
    return int(raw) if raw.lstrip("-").isdigit() else raw


@dataclass
class LabeledSequence:
    frames: list[Frame]
    subject: str
    label: int
    apex: int | None


def subject_name(index: int) -> str:
    return f"s{index:03d}"


def identity_seed(master_seed: int, subject: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), 1, int(subject)]).generate_state(1)[0])


def jitter_seed(master_seed: int, subject: int, label: int, rep: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), 2, subject, label, rep]).generate_state(1)[0])


def build_corpus(n_subjects: int = 20, sequences_per_subject_per_class: int = 1, T: int = 16,
                 out_dir=None, master_seed: int = 0, size: int = 64, apex_policy: str = "last",
                 codec: CodecParams | None = None, folds: int | None = None) -> DatasetManifest:
    """Render, encode and write every sequence plus ``manifest.csv``.

    Output is a pure function of the arguments: re-running with the same
    master seed rewrites byte-identical files.
    """
    if n_subjects < 1 or sequences_per_subject_per_class < 1:
        raise ValueError("need at least one subject and one sequence per class")
    if folds is not None and n_subjects < folds:
        raise ValueError(f"{n_subjects} subjects cannot fill {folds} subject-independent folds")
    codec = codec or CodecParams(gop_length=max(T, 1))
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create corpus directory {out}: {err}") from err
    records = []
    for s in range(n_subjects):
        ident_seed = identity_seed(master_seed, s)
        for label, name in enumerate(CLASSES):
            for rep in range(sequences_per_subject_per_class):
                frames, apex = generate_sequence(ident_seed, label, T, apex_policy,
                                                 jitter_seed(master_seed, s, label, rep), size)
                bs = encode_video(frames, codec.gop_length, codec.block_size,
                                  codec.search_radius, codec.quantizer_step)
                rel = f"{subject_name(s)}_{name}_{rep}.rgop"
                try:
                    bs.save(out / rel)
                except OSError as err:
                    raise OSError(f"cannot write {out / rel}: {err}") from err
                records.append(ManifestRecord(rel, subject_name(s), label, apex, T, row=len(records) + 2))
    manifest = DatasetManifest(records, out)
    manifest.write_csv(out / "manifest.csv")
    meta = {
        "master_seed": master_seed, "n_subjects": n_subjects, "T": T, "size": size,
        "sequences_per_subject_per_class": sequences_per_subject_per_class,
        "apex_policy": apex_policy,
        "codec": {"gop_length": codec.gop_length, "block_size": codec.block_size,
                  "search_radius": codec.search_radius, "quantizer_step": codec.quantizer_step},
        "identity_seeds": {subject_name(s): identity_seed(master_seed, s) for s in range(n_subjects)},
    }
    (out / "corpus.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return manifest


def _read_frames(path: Path, rowno: int) -> list[Frame]:
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise ParseError(f"{path}: no PPM/PNG frames", rowno)
        return [read_image(p) for p in files]
    if path.suffix.lower() == ".rgop":
        try:
            return decode_video(path.read_bytes())
        except ParseError as err:
            raise ParseError(f"{path}: {err}", rowno) from None
    if not path.exists():
        raise ParseError(f"{path}: no such file or directory", rowno)
    raise ParseError(f"{path}: unsupported sequence format", rowno)


def load_external(manifest_path) -> Iterator[LabeledSequence]:
    """Yield labelled raw sequences named by a manifest CSV.

    Rows may point at a directory of PPM/PNG frames (sorted by filename) or
    at an RGOP bitstream. A blank ``apex_index`` yields ``apex=None``.
    """
    manifest = DatasetManifest.read_csv(manifest_path)
    for rec in manifest.records:
        rowno = rec.row
        frames = _read_frames(manifest.resolve(rec), rowno)
        if rec.frames >= 0 and len(frames) != rec.frames:
            raise ParseError(f"{rec.path}: manifest says {rec.frames} frames, found {len(frames)}", rowno)
        if rec.apex_index is not None and rec.apex_index >= len(frames):
            raise ParseError(f"{rec.path}: apex index {rec.apex_index} beyond {len(frames)} frames", rowno)
        yield LabeledSequence(frames, rec.subject, rec.label, rec.apex_index)
