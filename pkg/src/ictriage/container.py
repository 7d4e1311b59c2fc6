"""Native recording container (.icvrec).

Layout, in order:
  - 8-byte magic ``ICVREC01``
  - uint64 little-endian header length
  - UTF-8 JSON header (canonical encoding: sorted keys, no whitespace)
  - float32 little-endian samples, channel-major (C order of the data matrix)

The header stores channel names, sfreq, montage, meta and the sample count,
so truncation is detectable and the file round-trips byte-for-byte.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError, IntegrityError
from .recording import Montage, Recording
from .util import canonical_json

MAGIC = b"ICVREC01"


def _header_dict(rec: Recording) -> dict:
    return {
        "channel_names": list(rec.channel_names),
        "sfreq": rec.sfreq,
        "n_samples": rec.n_samples,
        "montage": {
            "labels": list(rec.montage.labels),
            "positions": [[float(v) for v in row] for row in rec.montage.positions],
        },
        "meta": dict(rec.meta),
    }


def save_container(rec: Recording, path) -> None:
    """Write a Recording to ``path``. Samples are stored as float32."""
    header = canonical_json(_header_dict(rec)).encode("utf-8")
    body = np.ascontiguousarray(rec.data, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        f.write(body)


def load_container(path) -> Recording:
    """Read a Recording written by save_container.

    Raises FormatError for unrecognized or malformed headers and
    IntegrityError when the declared shape disagrees with the byte count.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 8:
        raise FormatError(f"{path}: too short to hold a container header")
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}, expected {MAGIC!r}")
    (header_len,) = struct.unpack("<Q", blob[len(MAGIC) : len(MAGIC) + 8])
    header_start = len(MAGIC) + 8
    if header_start + header_len > len(blob):
        raise FormatError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(blob[header_start : header_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: header is not valid JSON ({exc})") from exc
    for key in ("channel_names", "sfreq", "n_samples", "montage", "meta"):
        if key not in header:
            raise FormatError(f"{path}: header missing field {key!r}")

    names = header["channel_names"]
    n_channels = len(names)
    n_samples = int(header["n_samples"])
    montage_doc = header["montage"]
    if len(montage_doc.get("labels", [])) != n_channels:
        raise IntegrityError(
            f"{path}: header declares {n_channels} channels but montage has "
            f"{len(montage_doc.get('labels', []))} positions"
        )

    body = blob[header_start + header_len :]
    expected_bytes = n_channels * n_samples * 4
    if len(body) != expected_bytes:
        raise IntegrityError(
            f"{path}: data section holds {len(body)} bytes, expected {expected_bytes} "
            f"({n_channels} channels x {n_samples} samples x 4)"
        )
    data = np.frombuffer(body, dtype="<f4").reshape(n_channels, n_samples).astype(np.float64)
    montage = Montage(labels=montage_doc["labels"], positions=np.array(montage_doc["positions"]))
    return Recording(
        data=data,
        sfreq=float(header["sfreq"]),
        channel_names=names,
        montage=montage,
        meta={str(k): str(v) for k, v in header["meta"].items()},
    )


def sniff_container(path) -> bool:
    """True when the file starts with the container magic."""
    try:
        with open(path, "rb") as f:
            return f.read(len(MAGIC)) == MAGIC
    except OSError:
        return False
