"""Subject-independent cross validation for one config.

    python3 scripts/run_cv.py --corpus /tmp/corpus --seed 0 --alpha 0.1
"""

import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from compfer.pipeline import cross_validate, default_config, load_corpus, make_folds
from compfer.synthdata import build_corpus


def ensure_corpus(root: Path, subjects: int = 20) -> Path:
    manifest = root / "manifest.csv"
    if not manifest.exists():
        build_corpus(n_subjects=subjects, out_dir=root, master_seed=0)
    return manifest


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--corpus", type=Path, default=Path("/tmp/corpus"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--tag", choices=("base", "no_apex", "plus_motion"), default="base")
    args = ap.parse_args()

    data = load_corpus(ensure_corpus(args.corpus))
    cfg = replace(default_config().with_tag(args.tag), seed=args.seed)
    if args.alpha is not None:
        cfg = replace(cfg, alpha=args.alpha)
    if args.beta is not None:
        cfg = replace(cfg, beta=args.beta)
    t0 = time.perf_counter()
    cv = cross_validate(data, make_folds(data.subjects, cfg.k, 0), cfg)
    print(json.dumps({
        "tag": args.tag, "seed": cfg.seed, "alpha": cfg.alpha, "beta": cfg.beta,
        "mean_accuracy": cv.mean_accuracy, "fold_accuracy": cv.fold_accuracy,
        "mean_correlation": cv.mean_correlation, "seconds": round(time.perf_counter() - t0, 1),
    }, indent=2))


if __name__ == "__main__":
    main()
