"""Core EEG data model: Recording, Montage, Epochs.

Data is held channels-major as float64 microvolts. Montage positions live on
the unit sphere with +x toward the right ear, +y toward the nasion and +z up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

# Idealized 10-20 positions on the unit sphere. Outer ring sits on the
# equator, the intermediate ring at 45 degrees elevation, Cz at the vertex.
def _ring(az_deg: float, elev_deg: float) -> tuple[float, float, float]:
    az = np.deg2rad(az_deg)
    el = np.deg2rad(elev_deg)
    return (float(np.cos(el) * np.sin(az)), float(np.cos(el) * np.cos(az)), float(np.sin(el)))


CANONICAL_1020 = {
    "Fpz": _ring(0, 0),
    "Fp1": _ring(-18, 0),
    "Fp2": _ring(18, 0),
    "F7": _ring(-54, 0),
    "F8": _ring(54, 0),
    "T7": _ring(-90, 0),
    "T8": _ring(90, 0),
    "P7": _ring(-126, 0),
    "P8": _ring(126, 0),
    "O1": _ring(-162, 0),
    "O2": _ring(162, 0),
    "Oz": _ring(180, 0),
    "Fz": _ring(0, 45),
    "F3": _ring(-45, 45),
    "F4": _ring(45, 45),
    "C3": _ring(-90, 45),
    "C4": _ring(90, 45),
    "P3": _ring(-135, 45),
    "P4": _ring(135, 45),
    "Pz": _ring(180, 45),
    "Cz": (0.0, 0.0, 1.0),
}

# Older nomenclature maps onto the modern labels.
LABEL_ALIASES = {"T3": "T7", "T4": "T8", "T5": "P7", "T6": "P8"}

STANDARD_19 = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8",
    "T7", "C3", "Cz", "C4", "T8",
    "P7", "P3", "Pz", "P4", "P8", "O1", "O2",
]


def canonical_position(label: str) -> np.ndarray | None:
    """Unit-sphere position for a standard 10-20 label, or None if unknown."""
    name = LABEL_ALIASES.get(label, label)
    pos = CANONICAL_1020.get(name)
    if pos is None:
        return None
    return np.asarray(pos, dtype=np.float64)


@dataclass
class Montage:
    """Per-channel electrode positions on the unit sphere."""

    labels: list[str]
    positions: np.ndarray  # (n_channels, 3) float64, unit norm

    def __post_init__(self):
        self.labels = list(self.labels)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ParameterError(f"positions must be (n, 3), got {self.positions.shape}")
        if len(self.labels) != self.positions.shape[0]:
            raise ParameterError(
                f"{len(self.labels)} labels for {self.positions.shape[0]} positions"
            )
        if len(set(self.labels)) != len(self.labels):
            dupes = sorted({l for l in self.labels if self.labels.count(l) > 1})
            raise ParameterError(f"duplicate montage labels: {dupes}")
        norms = np.linalg.norm(self.positions, axis=1)
        if np.any(norms == 0):
            raise ParameterError("montage position at the origin cannot be normalized")
        self.positions = self.positions / norms[:, None]
        self._index = {l: i for i, l in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        name = LABEL_ALIASES.get(label, label)
        if name in self._index:
            return self._index[name]
        if label in self._index:
            return self._index[label]
        raise KeyError(f"channel {label!r} not in montage")

    def position_of(self, label: str) -> np.ndarray:
        return self.positions[self.index_of(label)]

    @classmethod
    def standard_1020(cls, labels: list[str] | None = None) -> "Montage":
        """Montage for the given 10-20 labels (defaults to the 19-channel set).

        Labels missing from the canonical table are spread deterministically on
        a low ring so that every channel still has a usable position.
        """
        if labels is None:
            labels = list(STANDARD_19)
        positions = []
        n_unknown = sum(1 for l in labels if canonical_position(l) is None)
        unknown_seen = 0
        for label in labels:
            pos = canonical_position(label)
            if pos is None:
                # 20 degree elevation ring, evenly spaced by first appearance
                az = 2 * np.pi * unknown_seen / max(n_unknown, 1)
                el = np.deg2rad(20.0)
                pos = np.array(
                    [np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), np.sin(el)]
                )
                unknown_seen += 1
            positions.append(pos)
        return cls(labels=list(labels), positions=np.array(positions))


@dataclass
class Recording:
    """Multichannel EEG segment: (n_channels, n_samples) float64 microvolts."""

    data: np.ndarray
    sfreq: float
    channel_names: list[str]
    montage: Montage
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ParameterError(f"data must be 2-D (channels, samples), got {self.data.shape}")
        self.sfreq = float(self.sfreq)
        if self.sfreq <= 0:
            raise ParameterError(f"sfreq must be positive, got {self.sfreq}")
        self.channel_names = list(self.channel_names)
        if len(self.channel_names) != self.data.shape[0]:
            raise ParameterError(
                f"{self.data.shape[0]} data rows but {len(self.channel_names)} channel names"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ParameterError("channel names must be unique")
        if len(self.montage) != len(self.channel_names):
            raise ParameterError(
                f"montage has {len(self.montage)} positions for "
                f"{len(self.channel_names)} channels"
            )
        if not np.all(np.isfinite(self.data)):
            raise ParameterError("recording contains non-finite samples")
        self.meta = {str(k): str(v) for k, v in self.meta.items()}

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sfreq

    def with_data(self, data: np.ndarray, extra_meta: dict[str, str] | None = None) -> "Recording":
        """New Recording with replaced samples; names/montage/meta carried over."""
        meta = dict(self.meta)
        if extra_meta:
            meta.update(extra_meta)
        return Recording(
            data=data,
            sfreq=self.sfreq,
            channel_names=list(self.channel_names),
            montage=self.montage,
            meta=meta,
        )

    def channel_index(self, label: str) -> int:
        try:
            return self.channel_names.index(label)
        except ValueError:
            alias = LABEL_ALIASES.get(label)
            if alias is not None and alias in self.channel_names:
                return self.channel_names.index(alias)
            raise KeyError(f"channel {label!r} not in recording")


@dataclass
class Epochs:
    """Fixed-length consecutive segments cut from one Recording."""

    data: np.ndarray  # (n_epochs, n_channels, n_samples_per_epoch)
    epoch_length: float
    sfreq: float
    source_meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ParameterError(f"epochs data must be 3-D, got {self.data.shape}")
        if self.data.shape[0] < 1:
            raise ParameterError("need at least one epoch")
        expected = int(np.floor(self.epoch_length * self.sfreq))
        if self.data.shape[2] != expected:
            raise ParameterError(
                f"epoch_length {self.epoch_length} s at {self.sfreq} Hz implies "
                f"{expected} samples per epoch, got {self.data.shape[2]}"
            )

    @property
    def n_epochs(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples_per_epoch(self) -> int:
        return self.data.shape[2]
