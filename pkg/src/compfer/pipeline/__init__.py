"""Training, subject-independent cross validation, ablations and benchmarks."""

from compfer.pipeline.ablation import AblationRow, run_ablations, write_ablation_csv
from compfer.pipeline.bench import BenchResult, bench_throughput, compressed_predictions, decoded_predictions
from compfer.pipeline.config import TAGS, FoldPlan, RunConfig, default_config, make_folds
from compfer.pipeline.data import CorpusData, load_corpus
from compfer.pipeline.evaluate import (
    CrossValidation,
    FoldEval,
    confusion_counts,
    cross_validate,
    evaluate,
    feature_correlation,
    normalize_rows,
)
from compfer.pipeline.reports import EvalReport, git_describe, save_fold_checkpoints
from compfer.pipeline.train import (
    FoldResult,
    IdentityEncoder,
    TrainingDiverged,
    fit_identity_encoder,
    train_fold,
)

__all__ = [
    "AblationRow", "run_ablations", "write_ablation_csv", "BenchResult", "bench_throughput",
    "compressed_predictions", "decoded_predictions", "TAGS", "FoldPlan", "RunConfig",
    "default_config", "make_folds", "CorpusData", "load_corpus", "CrossValidation", "FoldEval",
    "confusion_counts", "cross_validate", "evaluate", "feature_correlation", "normalize_rows",
    "EvalReport", "git_describe", "save_fold_checkpoints", "FoldResult", "IdentityEncoder",
    "TrainingDiverged", "fit_identity_encoder", "train_fold",
]
