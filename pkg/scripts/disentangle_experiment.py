"""Does the independence penalty lower held-out expression/identity feature correlation?

Trains alpha=0.1 and alpha=0 on the same folds and seeds and reports, per run:
  perfold  mean over folds of the held-out feature correlation (the acceptance metric)
  pooled   one correlation over all held-out sequences, each embedded by its own fold model
  train0   fold-0 model on its own training sequences
  floor    expected mean |r| of independent Gaussians at the pooled sample size
"""

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from compfer.pipeline import cross_validate, default_config, feature_correlation, fit_identity_encoder, load_corpus, make_folds
from compfer.pipeline.evaluate import expression_features

from run_cv import ensure_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--corpus", type=Path, default=Path("/tmp/corpus"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.1, 0.0])
    args = ap.parse_args()

    data = load_corpus(ensure_corpus(args.corpus))
    base = default_config()
    plan = make_folds(data.subjects, base.k, 0)
    n = len(data.labels)
    floor = float(np.sqrt(2 / np.pi) / np.sqrt(n - 1))
    for seed in args.seeds:
        ident = fit_identity_encoder(data, base.model, seed, base.id_epochs)
        for alpha in args.alphas:
            cfg = replace(base, alpha=alpha, seed=seed)
            t0 = time.perf_counter()
            cv = cross_validate(data, plan, cfg, ident)
            z_e = np.zeros((n, base.model.fer.z_dim))
            for res, ev in zip(cv.results, cv.folds):
                z_e[ev.test_index] = expression_features(res.params, cfg.model, data, ev.test_index)
            tr = cv.results[0].train_index
            train0 = feature_correlation(expression_features(cv.results[0].params, cfg.model, data, tr), ident.z[tr])
            print(json.dumps({
                "seed": seed, "alpha": alpha, "accuracy": round(cv.mean_accuracy, 4),
                "perfold": round(cv.mean_correlation, 4), "pooled": round(feature_correlation(z_e, ident.z), 4),
                "train0": round(train0, 4), "floor": round(floor, 4),
                "seconds": round(time.perf_counter() - t0, 1),
            }), flush=True)


if __name__ == "__main__":
    main()
