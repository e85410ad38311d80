"""Deterministic synthetic expression videos and dataset manifests."""

from compfer.synthdata.corpus import (
    DatasetManifest,
    LabeledSequence,
    ManifestRecord,
    build_corpus,
    identity_seed,
    load_external,
)
from compfer.synthdata.oracle import oracle_classify
from compfer.synthdata.render import (
    CLASSES,
    IdentityParams,
    class_id,
    generate_sequence,
    intensity_curve,
    render_face,
    shift_frame,
)

__all__ = [
    "DatasetManifest", "LabeledSequence", "ManifestRecord", "build_corpus", "identity_seed",
    "load_external", "oracle_classify", "CLASSES", "IdentityParams", "class_id",
    "generate_sequence", "intensity_curve", "render_face", "shift_frame",
]
