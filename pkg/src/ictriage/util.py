"""Small shared helpers: canonical JSON and content hashing."""

from __future__ import annotations

import hashlib
import json


def canonical_json(obj) -> str:
    """Serialize to a canonical JSON string (sorted keys, no whitespace).

    The same logical object always produces the same bytes, which makes the
    output safe to hash and to compare across runs.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_of_obj(obj) -> str:
    return sha256_hex(canonical_json(obj).encode("ascii"))


def sha256_of_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
