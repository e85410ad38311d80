"""Ablation runner: base, without reconstruction, and with motion input."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from compfer.pipeline.bench import bench_throughput
from compfer.pipeline.config import TAGS, FoldPlan, RunConfig
from compfer.pipeline.data import CorpusData
from compfer.pipeline.evaluate import CrossValidation, cross_validate
from compfer.pipeline.train import IdentityEncoder, fit_identity_encoder

ABLATION_HEADER = ("tag", "seeds", "mean_accuracy", "seed_accuracies", "compressed_fps",
                   "decoded_fps", "ratio", "fold_plan")


@dataclass
class AblationRow:
    tag: str
    seeds: tuple[int, ...]
    accuracies: tuple[float, ...]
    compressed_fps: float
    decoded_fps: float
    fold_plan: str

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def ratio(self) -> float:
        return self.compressed_fps / self.decoded_fps


def run_ablations(data: CorpusData, plan: FoldPlan, base: RunConfig, seeds=(0,), bench_repeats: int = 5,
                  cache: dict | None = None, min_bench_sequences: int = 100) -> list[AblationRow]:
    """Run the three tagged configs with shared folds and seeds.

    ``cache`` maps a RunConfig to a finished :class:`CrossValidation` and is
    filled in as runs complete, so callers can share runs across experiments.
    fps is measured with the first seed's fold-0 model of each tag.
    """
    cache = {} if cache is None else cache
    identities: dict[int, IdentityEncoder] = {}
    rows = []
    for tag in TAGS:
        accs, cv0 = [], None
        for seed in seeds:
            cfg = replace(base.with_tag(tag), seed=seed)
            if cfg not in cache:
                if seed not in identities:
                    identities[seed] = fit_identity_encoder(data, cfg.model, seed, cfg.id_epochs)
                cache[cfg] = cross_validate(data, plan, cfg, identities[seed])
            cv: CrossValidation = cache[cfg]
            accs.append(cv.mean_accuracy)
            cv0 = cv0 or cv
        res = cv0.results[0]
        b = bench_throughput(data.sources, res.params, cv0.config.model, bench_repeats, min_bench_sequences)
        rows.append(AblationRow(tag, tuple(seeds), tuple(accs), b.compressed_fps, b.decoded_fps, plan.digest()))
    return rows


def write_ablation_csv(rows: list[AblationRow], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATION_HEADER)
        for r in rows:
            w.writerow([r.tag, " ".join(map(str, r.seeds)), repr(r.mean_accuracy),
                        " ".join(repr(a) for a in r.accuracies), f"{r.compressed_fps:.1f}",
                        f"{r.decoded_fps:.1f}", f"{r.ratio:.3f}", r.fold_plan])
