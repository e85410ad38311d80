from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from compfer.codec import Frame
from compfer.synthdata import build_corpus

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

ASSETS = Path(__file__).parent / "assets"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_frame(rng, h=32, w=32) -> Frame:
    return Frame(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """The default synthetic corpus: 20 subjects, 7 classes, T=16, 64x64."""
    out = tmp_path_factory.mktemp("corpus")
    build_corpus(n_subjects=20, out_dir=out, master_seed=0)
    return out


@pytest.fixture(scope="session")
def corpus(corpus_dir):
    from compfer.pipeline import load_corpus

    return load_corpus(corpus_dir / "manifest.csv")


@pytest.fixture(scope="session")
def run_cache():
    """Finished cross-validation runs keyed by RunConfig, shared across test modules."""
    return {}


@pytest.fixture(scope="session")
def identity_encoders(corpus):
    """Frozen identity encoders per seed, fitted lazily."""
    from compfer.pipeline import default_config, fit_identity_encoder

    cache = {}

    def get(seed: int):
        if seed not in cache:
            cfg = default_config()
            cache[seed] = fit_identity_encoder(corpus, cfg.model, seed, cfg.id_epochs)
        return cache[seed]

    return get


@pytest.fixture(scope="session")
def fold_plan(corpus):
    from compfer.pipeline import make_folds

    return make_folds(corpus.subjects, k=10, seed=0)


@pytest.fixture(scope="session")
def cross_validation(corpus, fold_plan, run_cache, identity_encoders):
    """cross_validation(cfg) -> CrossValidation, each config trained once per session."""
    from compfer.pipeline import cross_validate

    def run(cfg):
        if cfg not in run_cache:
            run_cache[cfg] = cross_validate(corpus, fold_plan, cfg, identity_encoders(cfg.seed))
        return run_cache[cfg]

    return run


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
