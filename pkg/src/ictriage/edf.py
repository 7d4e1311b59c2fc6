"""EDF import: 256-byte fixed header, 256 bytes per signal header, 16-bit
little-endian two's-complement samples grouped in data records.

Digital counts are mapped to physical units with the calibration stored per
signal:

    physical = physical_min + (digital - digital_min)
               * (physical_max - physical_min) / (digital_max - digital_min)

Only recordings where every signal shares one sampling rate are accepted;
mixed-rate files do not fit the single-matrix Recording model.
"""

from __future__ import annotations

import numpy as np

from .errors import CalibrationError, EdfParseError
from .recording import Montage, Recording


def _numeric(text: str, kind, what: str):
    try:
        return kind(text.strip())
    except (TypeError, ValueError) as exc:
        raise EdfParseError(f"non-numeric EDF header field {what}: {text.strip()!r}") from exc


def _clean_label(raw: str) -> str:
    """Normalize an EDF signal label to a bare channel name."""
    label = raw.strip()
    for prefix in ("EEG ", "eeg "):
        if label.startswith(prefix):
            label = label[len(prefix) :]
    if "-" in label:
        label = label.split("-", 1)[0]
    return label.strip() or raw.strip()


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, width: int) -> str:
        chunk = self.blob[self.pos : self.pos + width]
        self.pos += width
        return chunk.decode("ascii", errors="replace")

    def take_each(self, width: int, count: int) -> list[str]:
        return [self.take(width) for _ in range(count)]


def load_edf(path) -> Recording:
    """Parse an EDF file into a Recording (values in the file's physical unit)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 256:
        raise EdfParseError(f"{path}: file shorter than the 256-byte EDF header")

    r = _Reader(blob)
    r.take(8)  # version
    patient_id = r.take(80).strip()
    recording_id = r.take(80).strip()
    r.take(8)  # start date
    r.take(8)  # start time
    header_bytes = _numeric(r.take(8), int, "header bytes")
    r.take(44)  # reserved
    n_records = _numeric(r.take(8), int, "record count")
    record_duration = _numeric(r.take(8), float, "record duration")
    n_signals = _numeric(r.take(4), int, "signal count")

    if n_signals < 1:
        raise EdfParseError(f"{path}: header declares {n_signals} signals")
    if record_duration <= 0:
        raise EdfParseError(f"{path}: record duration {record_duration} must be positive")
    expected_header = 256 + 256 * n_signals
    if header_bytes != expected_header:
        raise EdfParseError(
            f"{path}: header size field says {header_bytes}, "
            f"expected {expected_header} for {n_signals} signals"
        )
    if len(blob) < expected_header:
        raise EdfParseError(f"{path}: truncated signal headers")

    labels_raw = r.take_each(16, n_signals)
    r.take_each(80, n_signals)  # transducer
    r.take_each(8, n_signals)  # physical dimension
    physical_min = [_numeric(t, float, "physical_min") for t in r.take_each(8, n_signals)]
    physical_max = [_numeric(t, float, "physical_max") for t in r.take_each(8, n_signals)]
    digital_min = [_numeric(t, int, "digital_min") for t in r.take_each(8, n_signals)]
    digital_max = [_numeric(t, int, "digital_max") for t in r.take_each(8, n_signals)]
    r.take_each(80, n_signals)  # prefiltering
    samples_per_record = [
        _numeric(t, int, "samples per record") for t in r.take_each(8, n_signals)
    ]
    r.take_each(32, n_signals)  # reserved

    if len(set(samples_per_record)) != 1:
        raise EdfParseError(
            f"{path}: signals disagree on samples per record {sorted(set(samples_per_record))}; "
            "mixed sampling rates are not supported"
        )
    spr = samples_per_record[0]
    if spr < 1:
        raise EdfParseError(f"{path}: non-positive samples per record {spr}")
    for i in range(n_signals):
        if digital_max[i] == digital_min[i]:
            raise EdfParseError(f"{path}: signal {i} has degenerate digital range")
        if physical_max[i] == physical_min[i]:
            raise CalibrationError(
                f"{path}: signal {i} ({labels_raw[i].strip()!r}) has "
                f"physical_max == physical_min == {physical_max[i]}"
            )

    body = blob[expected_header:]
    expected_body = 2 * spr * n_signals * n_records
    if len(body) != expected_body:
        raise EdfParseError(
            f"{path}: data section holds {len(body)} bytes, expected {expected_body} "
            f"({n_records} records x {n_signals} signals x {spr} samples x 2)"
        )

    raw = np.frombuffer(body, dtype="<i2").reshape(n_records, n_signals, spr)
    digital = raw.transpose(1, 0, 2).reshape(n_signals, n_records * spr).astype(np.float64)

    pmin = np.array(physical_min)
    pmax = np.array(physical_max)
    dmin = np.array(digital_min, dtype=np.float64)
    dmax = np.array(digital_max, dtype=np.float64)
    scale = (pmax - pmin) / (dmax - dmin)
    physical = pmin[:, None] + (digital - dmin[:, None]) * scale[:, None]

    labels = [_clean_label(l) for l in labels_raw]
    # Disambiguate duplicate labels deterministically.
    seen: dict[str, int] = {}
    names = []
    for label in labels:
        if label in seen:
            seen[label] += 1
            names.append(f"{label}_{seen[label]}")
        else:
            seen[label] = 0
            names.append(label)

    return Recording(
        data=physical,
        sfreq=spr / record_duration,
        channel_names=names,
        montage=Montage.standard_1020(names),
        meta={"source_format": "edf", "patient_id": patient_id, "recording_id": recording_id},
    )


def write_edf(
    path,
    data: np.ndarray,
    sfreq: float,
    labels: list[str],
    physical_range: tuple[float, float] = (-1000.0, 1000.0),
    digital_range: tuple[int, int] = (-32768, 32767),
    record_duration: float = 1.0,
    patient_id: str = "X",
    recording_id: str = "synthetic",
) -> None:
    """Write a minimal EDF file (one common rate, no annotations).

    Intended for fixtures and interchange tests; values are quantized to the
    digital range, so the round trip is only as exact as the calibration.
    """
    data = np.asarray(data, dtype=np.float64)
    n_signals, n_samples = data.shape
    spr = int(round(sfreq * record_duration))
    if spr < 1:
        raise EdfParseError("record duration too short for this sampling rate")
    if n_samples % spr != 0:
        raise EdfParseError(
            f"{n_samples} samples do not divide into {record_duration} s records at {sfreq} Hz"
        )
    n_records = n_samples // spr
    pmin, pmax = float(physical_range[0]), float(physical_range[1])
    dmin, dmax = int(digital_range[0]), int(digital_range[1])
    if pmax == pmin or dmax == dmin:
        raise EdfParseError("degenerate calibration range")

    gain = (dmax - dmin) / (pmax - pmin)
    digital = np.rint((data - pmin) * gain + dmin)
    digital = np.clip(digital, dmin, dmax).astype("<i2")

    def fixed(text: str, width: int) -> bytes:
        b = text.encode("ascii", errors="replace")[:width]
        return b + b" " * (width - len(b))

    header = b"".join(
        [
            fixed("0", 8),
            fixed(patient_id, 80),
            fixed(recording_id, 80),
            fixed("01.01.20", 8),
            fixed("00.00.00", 8),
            fixed(str(256 + 256 * n_signals), 8),
            fixed("", 44),
            fixed(str(n_records), 8),
            fixed(f"{record_duration:g}", 8),
            fixed(str(n_signals), 4),
        ]
    )
    sig = b"".join(
        [
            b"".join(fixed(l, 16) for l in labels),
            b"".join(fixed("", 80) for _ in range(n_signals)),
            b"".join(fixed("uV", 8) for _ in range(n_signals)),
            b"".join(fixed(f"{pmin:g}", 8) for _ in range(n_signals)),
            b"".join(fixed(f"{pmax:g}", 8) for _ in range(n_signals)),
            b"".join(fixed(str(dmin), 8) for _ in range(n_signals)),
            b"".join(fixed(str(dmax), 8) for _ in range(n_signals)),
            b"".join(fixed("", 80) for _ in range(n_signals)),
            b"".join(fixed(str(spr), 8) for _ in range(n_signals)),
            b"".join(fixed("", 32) for _ in range(n_signals)),
        ]
    )
    records = digital.reshape(n_signals, n_records, spr).transpose(1, 0, 2)
    with open(path, "wb") as f:
        f.write(header)
        f.write(sig)
        f.write(np.ascontiguousarray(records).tobytes())
