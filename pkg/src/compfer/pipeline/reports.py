"""Report files: fold CSV, confusion CSV, JSON summary and checkpoints."""

from __future__ import annotations

import csv
import json
import subprocess
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from compfer.autodiff.checkpoint import save_checkpoint
from compfer.model.config import ModelConfig
from compfer.pipeline.evaluate import CrossValidation, normalize_rows


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


@dataclass
class EvalReport:
    fold_accuracy: dict[int, float]
    confusion: np.ndarray
    counts: np.ndarray
    config: dict
    seeds: dict
    fold_plan: str
    compressed_fps: float | None = None
    decoded_fps: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(list(self.fold_accuracy.values())))

    @classmethod
    def from_folds(cls, fold_accuracy: dict[int, float], counts: np.ndarray, config: dict,
                   seeds: dict, fold_plan: str, **extra) -> "EvalReport":
        counts = np.asarray(counts)
        return cls(dict(fold_accuracy), normalize_rows(counts), counts, config, seeds, fold_plan, extra=extra)

    @classmethod
    def from_cv(cls, cv: CrossValidation) -> "EvalReport":
        return cls.from_folds(
            {f.fold: f.accuracy for f in cv.folds}, cv.counts, cv.config.to_dict(),
            {"run": cv.config.seed, "folds": cv.plan.seed}, cv.plan.digest(),
            identity_encoder=cv.identity_digest,
            heldout_feature_correlation={str(f.fold): c for f, c in zip(cv.folds, cv.correlations)},
        )

    def summary(self) -> dict:
        out = {
            "mean_accuracy": self.mean_accuracy,
            "fold_accuracy": {str(k): v for k, v in sorted(self.fold_accuracy.items())},
            "confusion": self.confusion.tolist(),
            "counts": self.counts.tolist(),
            "config": self.config,
            "seeds": self.seeds,
            "fold_plan": self.fold_plan,
            "git_describe": git_describe(),
            **self.extra,
        }
        if self.compressed_fps is not None:
            out.update(compressed_fps=self.compressed_fps, decoded_fps=self.decoded_fps,
                       ratio=self.compressed_fps / self.decoded_fps)
        return out

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"folds": out / "folds.csv", "confusion": out / "confusion.csv", "summary": out / "summary.json"}
        with paths["folds"].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "accuracy"])
            for k, v in sorted(self.fold_accuracy.items()):
                w.writerow([k, repr(float(v))])
        with paths["confusion"].open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in self.confusion:
                w.writerow([repr(float(v)) for v in row])
        write_json(paths["summary"], self.summary())
        return paths


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_fold_checkpoints(cv: CrossValidation, out_dir) -> dict[int, str]:
    """One RPRM checkpoint (plus JSON manifest) per fold; returns fold -> sha256."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for res in cv.results:
        manifest = {
            "fold": res.fold, "k": cv.plan.k, "fold_plan": cv.plan.digest(),
            "assignment": cv.plan.assignment, "plan_seed": cv.plan.seed,
            "config": cv.config.to_dict(), "log": res.log,
        }
        hashes[res.fold] = save_checkpoint(out / f"fold{res.fold}.rprm", res.params, manifest)
    return hashes


def model_from_manifest(manifest: dict) -> ModelConfig:
    return ModelConfig.from_dict(manifest["config"]["model"])


def as_jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return as_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): as_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [as_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj
