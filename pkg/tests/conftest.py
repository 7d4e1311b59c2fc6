"""Shared fixtures. The 20-dataset synthetic corpus and its ICA fits are
session-scoped because the acceptance suite reuses them across criteria."""

import numpy as np
import pytest

from ictriage.ica import fit_extended_infomax, fit_fastica
from ictriage.recording import Montage, Recording
from ictriage.synth import default_corpus_specs, generate_dataset

CORPUS_SIZE = 20
CORPUS_DURATION = 120.0
CORPUS_SFREQ = 250.0


def small_recording(data, sfreq=250.0, names=None):
    data = np.asarray(data, dtype=np.float64)
    if names is None:
        names = ["Fp1", "Fp2", "C3", "C4", "O1", "O2", "F3", "F4"][: data.shape[0]]
    return Recording(
        data=data,
        sfreq=sfreq,
        channel_names=names,
        montage=Montage.standard_1020(names),
        meta={"dataset_id": "test"},
    )


@pytest.fixture(scope="session")
def corpus20():
    """Seeded synthetic corpus: 20 datasets, 4-8 sources, 19 ch, 120 s, 250 Hz."""
    out = []
    for i in range(CORPUS_SIZE):
        specs = default_corpus_specs(0, i)
        out.append(
            generate_dataset(
                specs,
                sfreq=CORPUS_SFREQ,
                duration=CORPUS_DURATION,
                seed=i,
                dataset_id=f"acc{i:02d}",
            )
        )
    return out


def _timed_fits(corpus, fit):
    import time

    fits = []
    for rec, truth in corpus:
        t0 = time.perf_counter()
        model = fit(rec, n_components=truth.n_sources, seed=0)
        fits.append((model, time.perf_counter() - t0))
    return fits


@pytest.fixture(scope="session")
def fastica_fits(corpus20):
    return _timed_fits(corpus20, fit_fastica)


@pytest.fixture(scope="session")
def infomax_fits(corpus20):
    return _timed_fits(corpus20, fit_extended_infomax)
