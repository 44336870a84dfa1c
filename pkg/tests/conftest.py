import numpy as np
import pytest

from docforge.builder import BuildConfig, build_dataset, read_manifest
from docforge.patterns import CaseKey
from docforge.synth import make_receipt


@pytest.fixture(scope="session")
def corpus6():
    return [make_receipt(f"doc_{i:02d}", seed=100 + i) for i in range(6)]


@pytest.fixture(scope="session")
def receipt(corpus6):
    return corpus6[0]


@pytest.fixture(scope="session")
def small_dataset(corpus6, tmp_path_factory):
    """A 27-entry dataset (2 train / 1 test per case) shared across tests."""
    out = tmp_path_factory.mktemp("small_dataset")
    config = BuildConfig(
        case_counts={c: (2, 1) for c in CaseKey.all_cases()}, master_seed=7
    )
    manifest = build_dataset(config, corpus6, out)
    return config, manifest, out


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def reload_manifest(small_dataset):
    _, _, out = small_dataset
    return read_manifest(out / "manifest.jsonl")
