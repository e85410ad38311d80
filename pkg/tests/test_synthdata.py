import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compfer.codec import decode_video, write_ppm
from compfer.errors import ParseError
from compfer.synthdata import (
    CLASSES,
    DatasetManifest,
    IdentityParams,
    build_corpus,
    generate_sequence,
    identity_seed,
    intensity_curve,
    load_external,
    oracle_classify,
    render_face,
    shift_frame,
)
from compfer.synthdata.corpus import jitter_seed
from compfer.synthdata.oracle import mouth_curvature_sign
from compfer.synthdata.render import IDENTITY_BOUNDS, jitter_offsets


@given(st.integers(0, 2**32 - 1))
def test_identity_params_in_bounds(seed):
    p = IdentityParams.from_seed(seed)
    assert p == IdentityParams.from_seed(seed)
    for key, (lo, hi) in IDENTITY_BOUNDS.items():
        vals = np.atleast_1d(getattr(p, key))
        assert np.all((lo <= vals) & (vals <= hi))


def test_neutral_is_class_independent():
    ident = IdentityParams.from_seed(5)
    frames = [render_face(ident, c, 0.0) for c in CLASSES]
    assert all(f == frames[0] for f in frames)


def test_render_deterministic():
    ident = IdentityParams.from_seed(9)
    assert render_face(ident, "fear", 0.7) == render_face(ident, "fear", 0.7)


def test_expression_changes_frame():
    ident = IdentityParams.from_seed(9)
    neutral = render_face(ident, "anger", 0.0)
    assert render_face(ident, "anger", 1.0) != neutral


@pytest.mark.parametrize("seed", range(10))
def test_mouth_curvature_sign_oracle(seed):
    ident = IdentityParams.from_seed(seed)
    assert mouth_curvature_sign(render_face(ident, "happiness", 1.0), ident) == 1
    assert mouth_curvature_sign(render_face(ident, "sadness", 1.0), ident) == -1


def test_intensity_policies():
    lam, apex = intensity_curve(16, "last")
    assert apex == 15 and lam[0] == 0 and lam[apex] == 1
    assert np.all(np.diff(lam) > 0)
    lam, apex = intensity_curve(11, "middle")
    assert apex == 5 and lam[0] == 0 and lam[5] == 1 and lam[-1] == 0
    with pytest.raises(ValueError):
        intensity_curve(1)


def test_generate_sequence():
    frames, apex = generate_sequence(77, "surprise", T=8, jitter_seed=3)
    assert len(frames) == 8 and apex == 7
    j = jitter_offsets(8, 3)
    assert np.abs(j).max() <= 1
    first = shift_frame(render_face(IdentityParams.from_seed(77), "surprise", 0.0), int(j[0, 0]), int(j[0, 1]))
    assert frames[0] == first
    _, apex = generate_sequence(77, "surprise", T=11, apex_policy="middle")
    assert apex == 5
    with pytest.raises(ValueError):
        generate_sequence(77, "surprise", T=1)


def test_corpus_manifest(corpus_dir):
    manifest = DatasetManifest.read_csv(corpus_dir / "manifest.csv")
    assert len(manifest) == 140
    assert len(manifest.subjects()) == 20
    counts = np.bincount([r.label for r in manifest], minlength=7)
    assert np.all(counts == 20)
    for rec in manifest:
        _, apex = intensity_curve(rec.frames, "last")
        assert rec.apex_index == apex


def test_corpus_is_byte_reproducible(corpus_dir, tmp_path):
    again = build_corpus(n_subjects=2, out_dir=tmp_path, master_seed=0)
    for rec in again:
        assert (tmp_path / rec.path).read_bytes() == (corpus_dir / rec.path).read_bytes()


def test_corpus_rejects_too_few_subjects(tmp_path):
    with pytest.raises(ValueError):
        build_corpus(n_subjects=3, out_dir=tmp_path, folds=10)


def test_oracle_labels_every_apex_frame(corpus_dir):
    manifest = DatasetManifest.read_csv(corpus_dir / "manifest.csv")
    meta_seeds = {f"s{i:03d}": identity_seed(0, i) for i in range(20)}
    wrong = []
    for rec in manifest:
        frames = decode_video((corpus_dir / rec.path).read_bytes())
        ident = IdentityParams.from_seed(meta_seeds[rec.subject])
        if oracle_classify(frames[rec.apex_index], ident) != CLASSES[rec.label]:
            wrong.append(rec.path)
    assert wrong == []


def test_load_external_matches_generator(corpus_dir):
    seqs = list(load_external(corpus_dir / "manifest.csv"))
    assert len(seqs) == 140
    s = seqs[8]  # subject 1, class 1
    frames, apex = generate_sequence(identity_seed(0, 1), 1, 16, "last", jitter_seed(0, 1, 1, 0))
    assert s.subject == "s001" and s.label == 1 and s.apex == apex
    decoded_max_err = max(int(np.abs(a.levels.astype(int) - b.levels).max()) for a, b in zip(s.frames, frames))
    assert s.frames[0] == frames[0]  # I-frames are lossless
    assert decoded_max_err <= 16


def test_load_external_frame_dirs(tmp_path):
    frames, _ = generate_sequence(1, "happiness", T=3, size=16)
    d = tmp_path / "seq"
    d.mkdir()
    for i, f in enumerate(frames):
        write_ppm(d / f"{i:03d}.ppm", f)
    (tmp_path / "m.csv").write_text("path,subject,label,apex_index,frames\nseq,a,3,,3\n")
    (seq,) = list(load_external(tmp_path / "m.csv"))
    assert seq.apex is None and seq.frames == frames and seq.label == 3


def test_load_external_empty_and_errors(tmp_path):
    (tmp_path / "empty.csv").write_text("path,subject,label,apex_index,frames\n")
    assert list(load_external(tmp_path / "empty.csv")) == []
    (tmp_path / "bad.csv").write_text("path,subject,label,apex_index,frames\nmissing,a,1,0,2\n")
    with pytest.raises(ParseError) as e:
        list(load_external(tmp_path / "bad.csv"))
    assert e.value.offset == 2
    (tmp_path / "cols.csv").write_text("path,subject,label,apex_index,frames\nx,a\n")
    with pytest.raises(ParseError) as e:
        list(load_external(tmp_path / "cols.csv"))
    assert e.value.offset == 2
    with pytest.raises(ParseError):
        list(load_external(tmp_path / "nope.csv"))


def test_manifest_csv_round_trip(corpus_dir, tmp_path):
    manifest = DatasetManifest.read_csv(corpus_dir / "manifest.csv")
    manifest.write_csv(tmp_path / "copy.csv")
    with open(tmp_path / "copy.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["path", "subject", "label", "apex_index", "frames"]
    again = DatasetManifest.read_csv(tmp_path / "copy.csv")
    assert again.records == manifest.records
