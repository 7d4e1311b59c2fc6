"""Synthetic multichannel EEG with known source composition.

Each source is a deterministic waveform (seeded), projected through a smooth
spatial pattern on the montage sphere, summed with white sensor noise. The
returned GroundTruth keeps every ingredient so downstream stages can be
scored against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps
from scipy.optimize import linear_sum_assignment

from .errors import CapacityError, ParameterError
from .ica import IcaModel, activations
from .recording import Montage, Recording, canonical_position

KIND_TO_LABEL = {
    "alpha_brain": "brain",
    "blink_eye": "eye",
    "ecg_heart": "heart",
    "emg_muscle": "muscle",
    "line_noise": "line_noise",
    "dead_channel_noise": "channel_noise",
}

KIND_DEFAULTS = {
    "alpha_brain": {"freq": 10.0},
    "blink_eye": {"rate": 0.25, "width_s": 0.30},
    "ecg_heart": {"rr_s": 0.9, "qrs_width_s": 0.08},
    "emg_muscle": {"band_lo": 20.0, "band_hi": 100.0, "burst_period_s": 3.0},
    "line_noise": {"freq": 60.0},
    "dead_channel_noise": {},
}

DEFAULT_TARGETS = {
    "alpha_brain": "Oz",
    "blink_eye": "Fpz",
    "ecg_heart": "T7",
    "emg_muscle": "T8",
    "line_noise": "Cz",
    "dead_channel_noise": "F8",
}

# Spatial spread (radians) of the Gaussian bump per kind. The cardiac field
# is a broad lateral gradient; line noise couples diffusely. The two widths
# are kept apart so their mixing columns stay identifiable under the noise
# floor instead of collapsing into one near-parallel direction.
KIND_SIGMA = {
    "alpha_brain": 0.5,
    "blink_eye": 0.5,
    "ecg_heart": 1.0,
    "emg_muscle": 0.5,
    "line_noise": 1.5,
    "dead_channel_noise": None,  # exact single-channel pattern
}

MATCH_MIN_CORRELATION = 0.4
UNMATCHED_LABEL = "other_artifact"


@dataclass
class SourceSpec:
    kind: str
    amplitude_uv: float
    spatial_target: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KIND_TO_LABEL:
            raise ParameterError(f"unknown source kind {self.kind!r}")
        if self.amplitude_uv <= 0:
            raise ParameterError(f"amplitude must be positive, got {self.amplitude_uv}")
        merged = dict(KIND_DEFAULTS[self.kind])
        merged.update(self.params)
        self.params = merged
        if self.spatial_target is None:
            self.spatial_target = DEFAULT_TARGETS[self.kind]

    @property
    def label(self) -> str:
        return KIND_TO_LABEL[self.kind]


@dataclass
class GroundTruth:
    recording: "Recording"
    sources: np.ndarray          # (n_sources, n_samples) true waveforms
    mixing: np.ndarray           # (n_channels, n_sources)
    kinds: list[str]
    labels: list[str]            # canonical label per source
    specs: list[SourceSpec]
    seed: int
    dataset_id: str

    @property
    def n_sources(self) -> int:
        return self.sources.shape[0]


def _alpha(rng, n, sfreq, p):
    t = np.arange(n) / sfreq
    phase = rng.uniform(0, 2 * np.pi)
    freq = p["freq"]
    if freq >= sfreq / 2:
        raise ParameterError(f"alpha frequency {freq} at or above Nyquist")
    return np.sin(2 * np.pi * freq * t + phase)


def _blink(rng, n, sfreq, p):
    out = np.zeros(n)
    width = int(round(p["width_s"] * sfreq))
    half = max(width // 2, 1)
    kernel = np.exp(-0.5 * (np.arange(-half, half + 1) / (width / 4.0)) ** 2)
    t = rng.uniform(0.5, 1.5) / p["rate"]
    while t * sfreq < n:
        center = int(t * sfreq)
        lo = max(center - half, 0)
        hi = min(center + half + 1, n)
        out[lo:hi] += kernel[lo - (center - half) : hi - (center - half)]
        t += (0.7 + 0.6 * rng.uniform()) / p["rate"]
    return out


def _qrs_template(width: int) -> np.ndarray:
    """Piecewise-linear QRS: small Q dip, tall R spike, small S dip."""
    q = max(width // 5, 1)
    r = max(width // 3, 2)
    s = max(width // 4, 1)
    parts = [
        np.linspace(0, -0.2, q, endpoint=False),
        np.linspace(-0.2, 1.0, r, endpoint=False),
        np.linspace(1.0, -0.3, s, endpoint=False),
    ]
    tail = width - (q + r + s)
    if tail > 0:
        parts.append(np.linspace(-0.3, 0.0, tail))
    return np.concatenate(parts)[:width]


def _ecg(rng, n, sfreq, p):
    out = np.zeros(n)
    width = max(int(round(p["qrs_width_s"] * sfreq)), 4)
    template = _qrs_template(width)
    rr = p["rr_s"]
    if rr <= 0:
        raise ParameterError("RR interval must be positive")
    start = rng.uniform(0.1, rr)
    t = start
    while t * sfreq + width < n:
        lo = int(round(t * sfreq))
        out[lo : lo + width] += template
        t += rr
    return out


def _emg(rng, n, sfreq, p):
    lo, hi = p["band_lo"], p["band_hi"]
    hi = min(hi, 0.95 * sfreq / 2)
    if not (0 < lo < hi):
        raise ParameterError(f"bad EMG band ({lo}, {hi}) at sfreq {sfreq}")
    noise = rng.standard_normal(n)
    sos = sps.butter(4, [lo, hi], btype="band", fs=sfreq, output="sos")
    band = sps.sosfiltfilt(sos, noise)
    # Burst envelope keeps the source strongly non-Gaussian, as real EMG is.
    period = max(int(p["burst_period_s"] * sfreq), 4)
    n_periods = n // period + 2
    gate = (rng.uniform(size=n_periods) < 0.5).astype(np.float64)
    gate = np.maximum(gate, 0.15)
    envelope = np.repeat(gate, period)[:n]
    smooth = max(int(0.1 * sfreq), 3)
    kernel = np.hanning(smooth)
    kernel /= kernel.sum()
    envelope = np.convolve(envelope, kernel, mode="same")
    return band * envelope


def _line(rng, n, sfreq, p):
    freq = p["freq"]
    if freq >= sfreq / 2:
        raise ParameterError(f"line frequency {freq} at or above Nyquist")
    t = np.arange(n) / sfreq
    phase = rng.uniform(0, 2 * np.pi)
    return np.sin(2 * np.pi * freq * t + phase)


def _dead_channel(rng, n, sfreq, p):
    return rng.standard_normal(n)


_WAVEFORMS = {
    "alpha_brain": _alpha,
    "blink_eye": _blink,
    "ecg_heart": _ecg,
    "emg_muscle": _emg,
    "line_noise": _line,
    "dead_channel_noise": _dead_channel,
}


def _target_vector(montage: Montage, target: str) -> np.ndarray:
    pos = canonical_position(target)
    if pos is not None:
        return pos
    try:
        return montage.position_of(target)
    except KeyError:
        raise ParameterError(f"unknown spatial target {target!r}") from None


def spatial_pattern(montage: Montage, spec: SourceSpec) -> np.ndarray:
    """Mixing column for a source: Gaussian bump on the sphere (max weight 1)
    or, for dead channels, an exact single-channel pattern."""
    sigma = KIND_SIGMA[spec.kind]
    if sigma is None:
        pattern = np.zeros(len(montage))
        pattern[montage.index_of(spec.spatial_target)] = 1.0
        return pattern
    center = _target_vector(montage, spec.spatial_target)
    cosang = np.clip(montage.positions @ center, -1.0, 1.0)
    ang = np.arccos(cosang)
    pattern = np.exp(-0.5 * (ang / sigma) ** 2)
    return pattern / pattern.max()


def generate_dataset(
    specs: list[SourceSpec],
    montage: Montage | None = None,
    sfreq: float = 250.0,
    duration: float = 120.0,
    noise_floor_uv: float = 2.0,
    seed: int = 0,
    dataset_id: str | None = None,
) -> tuple[Recording, GroundTruth]:
    """Synthesize a recording plus its ground truth.

    Every source waveform is normalized to zero mean and std equal to its
    amplitude_uv, so planted variances are exact by construction.
    """
    if montage is None:
        montage = Montage.standard_1020()
    n_channels = len(montage)
    if len(specs) > n_channels - 1:
        raise CapacityError(
            f"{len(specs)} sources exceed capacity {n_channels - 1} "
            f"for a {n_channels}-channel montage"
        )
    if not specs:
        raise ParameterError("need at least one source spec")
    if duration < 10.0:
        raise ParameterError(f"duration must be at least 10 s, got {duration}")

    n = int(round(duration * sfreq))
    sources = np.zeros((len(specs), n))
    mixing = np.zeros((n_channels, len(specs)))
    for i, spec in enumerate(specs):
        rng = np.random.default_rng([seed, i])
        wave = _WAVEFORMS[spec.kind](rng, n, sfreq, spec.params)
        wave = wave - wave.mean()
        std = wave.std()
        if std == 0:
            raise ParameterError(f"source {i} ({spec.kind}) generated a constant waveform")
        sources[i] = wave * (spec.amplitude_uv / std)
        mixing[:, i] = spatial_pattern(montage, spec)

    noise_rng = np.random.default_rng([seed, 999_983])
    data = mixing @ sources
    if noise_floor_uv > 0:
        data = data + noise_floor_uv * noise_rng.standard_normal(data.shape)

    if dataset_id is None:
        dataset_id = f"synth{seed:04d}"
    rec = Recording(
        data=data,
        sfreq=sfreq,
        channel_names=list(montage.labels),
        montage=montage,
        meta={
            "dataset_id": dataset_id,
            "seed": str(seed),
            "n_sources": str(len(specs)),
            "noise_floor_uv": repr(float(noise_floor_uv)),
        },
    )
    truth = GroundTruth(
        recording=rec,
        sources=sources,
        mixing=mixing,
        kinds=[s.kind for s in specs],
        labels=[s.label for s in specs],
        specs=list(specs),
        seed=seed,
        dataset_id=dataset_id,
    )
    return rec, truth


def source_component_correlations(model: IcaModel, truth: GroundTruth) -> np.ndarray:
    """|correlation| matrix, components x sources, on the fit data."""
    acts = activations(model, truth.recording).data
    a = acts - acts.mean(axis=1, keepdims=True)
    s = truth.sources - truth.sources.mean(axis=1, keepdims=True)
    a_norm = np.linalg.norm(a, axis=1)
    s_norm = np.linalg.norm(s, axis=1)
    corr = (a @ s.T) / np.outer(np.maximum(a_norm, 1e-300), np.maximum(s_norm, 1e-300))
    return np.abs(corr)


def match_sources(
    model: IcaModel, truth: GroundTruth
) -> list[tuple[int, int, float]]:
    """Optimal one-to-one matching of components to true sources.

    Returns (component_index, source_index, |correlation|) triples, one per
    source when components are plentiful, maximizing total |correlation|.
    """
    corr = source_component_correlations(model, truth)
    rows, cols = linear_sum_assignment(-corr)
    return [(int(r), int(c), float(corr[r, c])) for r, c in zip(rows, cols)]


def match_components(
    model: IcaModel, truth: GroundTruth, min_correlation: float = MATCH_MIN_CORRELATION
) -> dict[int, str]:
    """Map every component index to its best-matching true label.

    Assignment maximizes total |correlation|; components matching nothing
    above ``min_correlation`` are labeled other_artifact.
    """
    labels = {i: UNMATCHED_LABEL for i in range(model.n_components)}
    for comp, src, corr in match_sources(model, truth):
        if corr >= min_correlation:
            labels[comp] = truth.labels[src]
    return labels


def save_ground_truth(truth: GroundTruth, path) -> None:
    """Persist ground truth as a JSON sidecar (waveforms float32 base64)."""
    import base64

    from .util import canonical_json

    doc = {
        "dataset_id": truth.dataset_id,
        "seed": truth.seed,
        "kinds": truth.kinds,
        "labels": truth.labels,
        "specs": [
            {
                "kind": s.kind,
                "amplitude_uv": s.amplitude_uv,
                "spatial_target": s.spatial_target,
                "params": s.params,
            }
            for s in truth.specs
        ],
        "mixing": {
            "shape": list(truth.mixing.shape),
            "data_b64": base64.b64encode(
                np.ascontiguousarray(truth.mixing, dtype="<f8").tobytes()
            ).decode("ascii"),
        },
        "sources": {
            "shape": list(truth.sources.shape),
            "data_b64": base64.b64encode(
                np.ascontiguousarray(truth.sources, dtype="<f4").tobytes()
            ).decode("ascii"),
        },
    }
    with open(path, "w", encoding="ascii") as f:
        f.write(canonical_json(doc))


def load_ground_truth(path, recording: Recording) -> GroundTruth:
    import base64
    import json

    with open(path, "r", encoding="ascii") as f:
        doc = json.load(f)
    mixing = np.frombuffer(base64.b64decode(doc["mixing"]["data_b64"]), dtype="<f8")
    mixing = mixing.reshape(doc["mixing"]["shape"]).copy()
    sources = np.frombuffer(base64.b64decode(doc["sources"]["data_b64"]), dtype="<f4")
    sources = sources.reshape(doc["sources"]["shape"]).astype(np.float64)
    specs = [
        SourceSpec(
            kind=s["kind"],
            amplitude_uv=s["amplitude_uv"],
            spatial_target=s["spatial_target"],
            params=s["params"],
        )
        for s in doc["specs"]
    ]
    return GroundTruth(
        recording=recording,
        sources=sources,
        mixing=mixing,
        kinds=list(doc["kinds"]),
        labels=list(doc["labels"]),
        specs=specs,
        seed=int(doc["seed"]),
        dataset_id=doc["dataset_id"],
    )


def default_corpus_specs(seed: int, index: int) -> list[SourceSpec]:
    """Deterministic recipe for one corpus dataset: 4 to 8 mixed sources."""
    rng = np.random.default_rng([seed, index, 7])
    n_sources = int(rng.integers(4, 9))

    def amp(base):
        return float(base * rng.uniform(0.8, 1.2))

    specs = [
        SourceSpec("alpha_brain", amp(20.0)),
        SourceSpec("blink_eye", amp(80.0)),
        SourceSpec("emg_muscle", amp(25.0)),
        SourceSpec("ecg_heart", amp(15.0)),
    ]
    extras = [
        SourceSpec("dead_channel_noise", amp(30.0)),
        SourceSpec("line_noise", amp(15.0)),
        SourceSpec("alpha_brain", amp(15.0), spatial_target="Pz", params={"freq": 11.0}),
        SourceSpec("emg_muscle", amp(20.0), spatial_target="T7"),
    ]
    return specs + extras[: n_sources - 4]


def make_default_corpus(
    n_datasets: int = 5,
    seed: int = 0,
    sfreq: float = 250.0,
    duration: float = 120.0,
    noise_floor_uv: float = 2.0,
) -> list[tuple[Recording, GroundTruth]]:
    """Seeded desk-scale corpus of synthetic datasets."""
    out = []
    for i in range(n_datasets):
        specs = default_corpus_specs(seed, i)
        out.append(
            generate_dataset(
                specs,
                sfreq=sfreq,
                duration=duration,
                noise_floor_uv=noise_floor_uv,
                seed=seed * 100_000 + i,
                dataset_id=f"synth{seed:02d}_{i:02d}",
            )
        )
    return out
