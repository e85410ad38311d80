"""base / no_apex / plus_motion over several seeds, plus throughput, written as CSV.

    python3 scripts/run_ablations.py --seeds 0 1 2 --out ablation.csv
"""

import argparse
from pathlib import Path

from compfer.pipeline import default_config, load_corpus, make_folds, run_ablations, write_ablation_csv

from run_cv import ensure_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--corpus", type=Path, default=Path("/tmp/corpus"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("ablation.csv"))
    args = ap.parse_args()

    data = load_corpus(ensure_corpus(args.corpus))
    cfg = default_config()
    rows = run_ablations(data, make_folds(data.subjects, cfg.k, 0), cfg, seeds=tuple(args.seeds),
                         bench_repeats=args.repeats)
    write_ablation_csv(rows, args.out)
    for r in rows:
        print(f"{r.tag:12s} acc {r.mean_accuracy:.4f}  compressed {r.compressed_fps:7.1f} fps  "
              f"decoded {r.decoded_fps:7.1f} fps  ratio {r.ratio:.2f}")


if __name__ == "__main__":
    main()
