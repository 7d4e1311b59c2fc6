#!/usr/bin/env python3
"""The classification client's plumbing, demonstrated with mock transports:
batching, bounded concurrency, input-order results under random completion
order, retry with backoff on transient failures, and transcript replay.

No network access is needed; the HTTP backend speaks the same wire format.
"""

import json
import tempfile
import threading
import time
from pathlib import Path

import numpy as np

from ictriage.client import (
    BackendConfig,
    ClassificationFailure,
    OracleTransport,
    TranscriptRecorder,
    TranscriptReplayer,
    build_prompt,
    classify_all,
)
from ictriage.errors import RateLimitedError


class Dash:
    def __init__(self, index):
        self.component_index = index

    def png_bytes(self):
        return b"png-placeholder-" + str(self.component_index).encode()


print("prompt sent with every batch:\n")
print(build_prompt(BackendConfig())[:200] + "...\n")

# --- batching and ordering under random latency ---------------------------
class SlowOracle:
    def __init__(self, inner):
        self.inner = inner
        self.rng = np.random.default_rng(1)
        self.lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0

    def send(self, request):
        with self.lock:
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            delay = float(self.rng.uniform(0.0, 0.03))
        time.sleep(delay)
        try:
            return self.inner.send(request)
        finally:
            with self.lock:
                self.in_flight -= 1


truth = {i: ["brain", "eye", "muscle", "heart"][i % 4] for i in range(25)}
transport = SlowOracle(OracleTransport(truth))
config = BackendConfig(kind="oracle_mock", batch_size=10, max_in_flight=4)
results = classify_all([Dash(i) for i in range(25)], config, transport=transport)
print(f"25 dashboards at batch size 10 -> 3 requests; "
      f"max in flight observed: {transport.max_in_flight}")
print(f"results in input order: {[r.component_index for r in results] == list(range(25))}")
print(f"total metered cost: ${sum(r.usd_cost for r in results):.4f}\n")

# --- retry on transient failures -------------------------------------------
class FlakyOracle:
    def __init__(self, inner, failures=2):
        self.inner = inner
        self.remaining = failures

    def send(self, request):
        if self.remaining > 0:
            self.remaining -= 1
            raise RateLimitedError("429 slow down")
        return self.inner.send(request)


sleeps = []
config = BackendConfig(kind="oracle_mock", batch_size=10, backoff_base_s=0.2)
results = classify_all([Dash(i) for i in range(5)],
                       config,
                       transport=FlakyOracle(OracleTransport(truth)),
                       sleep_fn=sleeps.append)
print(f"two 429s injected -> backoff sleeps {['%.2fs' % s for s in sleeps]}, "
      f"then success: {all(not isinstance(r, ClassificationFailure) for r in results)}\n")

# --- transcript record and replay ------------------------------------------
work = Path(tempfile.mkdtemp(prefix="ictriage_client_"))
log = work / "transcript.jsonl"
config = BackendConfig(kind="oracle_mock", batch_size=10)
recorded = classify_all([Dash(i) for i in range(8)], config,
                        transport=TranscriptRecorder(OracleTransport(truth), log))
replayed = classify_all([Dash(i) for i in range(8)], config,
                        transport=TranscriptReplayer(log))
same = [r.label for r in recorded] == [r.label for r in replayed]
print(f"transcript log at {log} holds "
      f"{len(log.read_text().splitlines())} request/response pairs; "
      f"replay reproduces labels: {same}")
print("\nwire format per component:",
      json.dumps({"label": "muscle", "confidence": 0.93, "reason": "..."}))
