"""Shared fixtures: seeded synthetic corpora, cached across test runs.

Corpus generation is deterministic per spec, so the cache key is the spec plus
a hash of the generator source; editing the generator invalidates the cache.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

import panelinspect.synthgen as synthgen
from panelinspect.synthgen import CorpusSpec, PanelSpec, gen_background, gen_dataset, load_manifest
from panelinspect.types import InspectionImage

_CACHE_ROOT = Path("/tmp/panelinspect-test-corpora")


def corpus_cached(spec: CorpusSpec):
    src_hash = hashlib.sha256(Path(synthgen.__file__).read_bytes()).hexdigest()[:12]
    spec_key = hashlib.sha256(
        json.dumps(dataclasses.asdict(spec), sort_keys=True, default=str).encode()
    ).hexdigest()[:12]
    out = _CACHE_ROOT / f"{src_hash}-{spec_key}"
    if not (out / "manifest.jsonl").exists():
        out.mkdir(parents=True, exist_ok=True)
        gen_dataset(spec, out)
    return load_manifest(out)


@pytest.fixture(scope="session")
def corpus500():
    """The standard 500-image corpus used by the acceptance criteria."""
    return corpus_cached(CorpusSpec(n_images=500, seed=0))


@pytest.fixture(scope="session")
def confound_corpus():
    """Corpus whose training backgrounds are correlated with the defect class."""
    return corpus_cached(
        CorpusSpec(n_images=600, seed=2, confound="background-bias", defect_fraction=0.8)
    )


@pytest.fixture(scope="session")
def small_corpus():
    """40 images for fast per-module tests."""
    return corpus_cached(CorpusSpec(n_images=40, seed=7))


@pytest.fixture(scope="session")
def clean_image() -> InspectionImage:
    """Noiseless defect-free panel image, T=128."""
    return gen_background(PanelSpec(T=128, C=8, noise_sigma=0.0, seed=3))


@pytest.fixture(scope="session")
def noisy_clean_image() -> InspectionImage:
    return gen_background(PanelSpec(T=96, C=10, noise_sigma=2.0, seed=11))


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
