"""Shared fixtures. Datasets are produced by invoking the generator CLI
as a subprocess, so the trainer is exercised strictly through the file
formats it consumes in production.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

CASES = [
    "text_removal/copy_move",
    "text_removal/generative",
    "text_replacement/copy_move",
    "text_replacement/mix",
    "text_replacement/generative",
    "background_addition/copy_move",
    "background_addition/generative",
    "text_addition/copy_move",
    "text_addition/generative",
]


def run_generator(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "docforge.cli", *args],
        capture_output=True,
        text=True,
        check=True,
    )


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory) -> Path:
    """A small generated dataset: 3 train + 2 test per case (27/18)."""
    root = tmp_path_factory.mktemp("gen")
    corpus = root / "corpus"
    out = root / "ds"
    run_generator("make-corpus", "--out", str(corpus), "--n", "10", "--seed", "41")
    counts = [f"--count={c}=3,2" for c in CASES]
    run_generator(
        "generate", "--corpus", str(corpus), "--out", str(out), "--seed", "500",
        "--jobs", "4", "--quiet", *counts,
    )
    return out


@pytest.fixture(scope="session")
def manifest_path(dataset_dir) -> Path:
    return dataset_dir / "manifest.jsonl"


@pytest.fixture(scope="session")
def corpus_pngs(dataset_dir) -> Path:
    """Directory of plain PNGs (the dataset's source documents)."""
    return dataset_dir / "originals"


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def rewrite_manifest(src: Path, dst: Path, keep) -> Path:
    """Copy a manifest, keeping entries that pass the predicate."""
    lines = src.read_text(encoding="utf-8").splitlines()
    header = json.loads(lines[0])
    kept = [l for l in lines[1:] if l.strip() and keep(json.loads(l))]
    header["n_entries"] = len(kept)
    dst.write_text(
        "\n".join([json.dumps(header, sort_keys=True, separators=(",", ":"))] + kept) + "\n",
        encoding="utf-8",
    )
    return dst
