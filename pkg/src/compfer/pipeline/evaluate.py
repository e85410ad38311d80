"""Fold evaluation through the compressed-domain test path, and k-fold driving."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from compfer.autodiff.tensor import ParamStore
from compfer.errors import ConfigError
from compfer.model.config import ModelConfig
from compfer.model.network import expression_feature, init_params, predict
from compfer.pipeline.config import FoldPlan, RunConfig
from compfer.pipeline.data import CorpusData
from compfer.pipeline.train import FoldResult, IdentityEncoder, corpus_inputs, fit_identity_encoder, train_fold


@dataclass
class FoldEval:
    fold: int
    accuracy: float
    counts: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray
    test_index: np.ndarray


def check_params(params: ParamStore, model: ModelConfig) -> None:
    """Raise ConfigError unless ``params`` has exactly the shapes ``model`` implies."""
    ref = init_params(model, 0)
    missing = [n for n in ref if n not in params]
    if missing:
        raise ConfigError(f"checkpoint lacks parameters {missing[:4]}")
    for name, t in ref.items():
        if params[name].shape != t.shape:
            what = "label space" if name.startswith("cls.") else "architecture"
            raise ConfigError(f"checkpoint {what} mismatch at {name}: {params[name].shape} vs {t.shape}")


def confusion_counts(labels, predictions, n_classes: int) -> np.ndarray:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(labels), np.asarray(predictions)), 1)
    return counts


def normalize_rows(counts: np.ndarray) -> np.ndarray:
    """Row-normalised confusion; rows without samples stay all zero."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)


def evaluate(params: ParamStore, model: ModelConfig, data: CorpusData, plan: FoldPlan, fold: int) -> FoldEval:
    """Accuracy and confusion counts on the fold's test subjects, via ``predict`` only."""
    check_params(params, model)
    n_classes = model.fer.n_classes
    test_idx = data.indices_for(plan.test_subjects(fold))
    if len(test_idx) and data.labels[test_idx].max() >= n_classes:
        raise ConfigError(f"corpus labels exceed the model's {n_classes} classes")
    preds = np.array([predict(data.views[i], params, model) for i in test_idx], dtype=np.int64)
    labels = data.labels[test_idx]
    counts = confusion_counts(labels, preds, n_classes)
    acc = float(np.trace(counts) / counts.sum()) if counts.sum() else float("nan")
    return FoldEval(fold, acc, counts, preds, labels, test_idx)


def feature_correlation(z_e: np.ndarray, z_i: np.ndarray, eps: float = 1e-5) -> float:
    """Mean absolute Pearson correlation over every (expression dim, identity dim) pair."""
    def std(z):
        z = np.asarray(z, np.float64)
        d = z - z.mean(axis=0)
        return d / np.sqrt((d * d).mean(axis=0) + eps)

    c = std(z_e).T @ std(z_i) / len(z_e)
    return float(np.abs(c).mean())


def expression_features(params: ParamStore, model: ModelConfig, data: CorpusData, index) -> np.ndarray:
    inputs = corpus_inputs(data, model)
    return np.concatenate([expression_feature(inputs[i][None], params, model).data for i in index])


@dataclass
class CrossValidation:
    """Everything a k-fold run produces (before it is written to disk)."""

    config: RunConfig
    plan: FoldPlan
    folds: list[FoldEval]
    results: list[FoldResult]
    identity_digest: str
    correlations: list[float] = field(default_factory=list)

    @property
    def fold_accuracy(self) -> list[float]:
        return [f.accuracy for f in self.folds]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.fold_accuracy))

    @property
    def counts(self) -> np.ndarray:
        return sum(f.counts for f in self.folds)

    @property
    def confusion(self) -> np.ndarray:
        return normalize_rows(self.counts)

    @property
    def mean_correlation(self) -> float:
        return float(np.mean(self.correlations))


def cross_validate(data: CorpusData, plan: FoldPlan, cfg: RunConfig, identity: IdentityEncoder | None = None,
                   folds=None) -> CrossValidation:
    """Train and evaluate each fold; also records held-out expression/identity feature correlation."""
    if identity is None:
        identity = fit_identity_encoder(data, cfg.model, cfg.seed, cfg.id_epochs)
    folds = range(plan.k) if folds is None else folds
    evals, results, corrs = [], [], []
    for fold in folds:
        res = train_fold(data, plan, fold, cfg, identity)
        ev = evaluate(res.params, cfg.model, data, plan, fold)
        z_e = expression_features(res.params, cfg.model, data, ev.test_index)
        corrs.append(feature_correlation(z_e, identity.z[ev.test_index]))
        evals.append(ev)
        results.append(res)
    return CrossValidation(cfg, plan, evals, results, identity.digest, corrs)
