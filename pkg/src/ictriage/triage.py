"""Keep / reject / flag decisions over component classifications.

Default policy: an artifact label is rejected when its confidence reaches the
rejection threshold and flagged for review below it; a brain label is kept
unless its confidence is low enough to warrant review. A component labeled
brain is never auto-rejected by policy, at any confidence.

A literal-thresholds variant is kept behind a flag for auditors: it rejects
LOW-confidence artifacts and flags HIGH-confidence brain, which reads oddly
but matches one published wording of the rule; it is not the default.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

from .client import LABELS, ClassificationFailure, ComponentClassification
from .errors import OverrideError, ParameterError
from .util import canonical_json, sha256_hex

ARTIFACT_LABELS = frozenset(l for l in LABELS if l != "brain")

VERDICTS = ("keep", "reject", "flag")


@dataclass(frozen=True)
class TriagePolicy:
    artifact_reject_min_confidence: float = 0.80
    brain_flag_max_confidence: float = 0.40
    labels_considered_artifact: frozenset = ARTIFACT_LABELS
    literal_thresholds: bool = False

    def __post_init__(self):
        for name in ("artifact_reject_min_confidence", "brain_flag_max_confidence"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ParameterError(f"{name} must be in [0, 1], got {value}")
        object.__setattr__(
            self, "labels_considered_artifact", frozenset(self.labels_considered_artifact)
        )

    def snapshot(self) -> dict:
        return {
            "artifact_reject_min_confidence": self.artifact_reject_min_confidence,
            "brain_flag_max_confidence": self.brain_flag_max_confidence,
            "labels_considered_artifact": sorted(self.labels_considered_artifact),
            "literal_thresholds": self.literal_thresholds,
        }


@dataclass
class TriageDecision:
    component_index: int
    verdict: str
    rule_fired: str
    source: str = "policy"
    note: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ParameterError(f"verdict must be one of {VERDICTS}, got {self.verdict!r}")
        if self.source not in ("policy", "override"):
            raise ParameterError(f"source must be policy or override, got {self.source!r}")

    def to_dict(self) -> dict:
        return {
            "component_index": self.component_index,
            "verdict": self.verdict,
            "rule_fired": self.rule_fired,
            "source": self.source,
            "note": self.note,
        }


def decide(c: ComponentClassification, p: TriagePolicy) -> TriageDecision:
    """One decision per classification; total over (label, confidence)."""
    if p.literal_thresholds:
        return _decide_literal(c, p)
    reject_at = p.artifact_reject_min_confidence
    flag_below = p.brain_flag_max_confidence
    if c.label in p.labels_considered_artifact:
        if c.confidence >= reject_at:
            verdict, rule = "reject", f"artifact >= {reject_at:.2f}"
        else:
            verdict, rule = "flag", f"artifact < {reject_at:.2f}"
    elif c.label == "brain":
        if c.confidence < flag_below:
            verdict, rule = "flag", f"brain < {flag_below:.2f}"
        else:
            verdict, rule = "keep", f"brain >= {flag_below:.2f}"
    else:
        # Label outside the artifact set and not brain: keep conservatively.
        verdict, rule = "flag", "label outside policy sets"
    return TriageDecision(component_index=c.component_index, verdict=verdict, rule_fired=rule)


def _decide_literal(c: ComponentClassification, p: TriagePolicy) -> TriageDecision:
    reject_at = p.artifact_reject_min_confidence
    flag_above = p.brain_flag_max_confidence
    if c.label in p.labels_considered_artifact:
        if c.confidence <= reject_at:
            verdict, rule = "reject", f"literal: artifact <= {reject_at:.2f}"
        else:
            verdict, rule = "flag", f"literal: artifact > {reject_at:.2f}"
    elif c.label == "brain":
        if c.confidence > flag_above:
            verdict, rule = "flag", f"literal: brain > {flag_above:.2f}"
        else:
            verdict, rule = "keep", f"literal: brain <= {flag_above:.2f}"
    else:
        verdict, rule = "flag", "label outside policy sets"
    return TriageDecision(component_index=c.component_index, verdict=verdict, rule_fired=rule)


def decide_all(results: list, p: TriagePolicy) -> list[TriageDecision]:
    """Decisions for a mixed list of classifications and failures.

    Failed classifications are always flagged for manual review; every input
    yields exactly one decision.
    """
    decisions = []
    for r in results:
        if isinstance(r, ClassificationFailure):
            decisions.append(
                TriageDecision(
                    component_index=r.component_index,
                    verdict="flag",
                    rule_fired="unparseable response",
                    note=r.error,
                )
            )
        else:
            decisions.append(decide(r, p))
    return decisions


def parse_overrides(path) -> list[tuple[int, str, str]]:
    """Override file: one ``component_index, verdict, note`` line each.

    Blank lines and lines starting with # are skipped.
    """
    entries = []
    with open(str(path), "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",", 2)]
            if len(parts) < 2:
                raise OverrideError(f"line {lineno}: expected 'index, verdict[, note]'")
            try:
                idx = int(parts[0])
            except ValueError:
                raise OverrideError(f"line {lineno}: bad component index {parts[0]!r}") from None
            verdict = parts[1].lower()
            if verdict not in VERDICTS:
                raise OverrideError(
                    f"line {lineno}: verdict {parts[1]!r} not one of {VERDICTS}"
                )
            note = parts[2] if len(parts) > 2 else ""
            entries.append((idx, verdict, note))
    return entries


def apply_overrides(
    decisions: list[TriageDecision], overrides: list[tuple[int, str, str]]
) -> list[TriageDecision]:
    """Replace policy verdicts with reviewer verdicts.

    Unknown component references abort with an OverrideError naming every
    offender; the input list is never modified.
    """
    known = {d.component_index for d in decisions}
    unknown = sorted({idx for idx, _, _ in overrides} - known)
    if unknown:
        raise OverrideError(f"overrides reference unknown components: {unknown}")
    by_index = {idx: (verdict, note) for idx, verdict, note in overrides}
    out = []
    for d in decisions:
        if d.component_index in by_index:
            verdict, note = by_index[d.component_index]
            out.append(
                TriageDecision(
                    component_index=d.component_index,
                    verdict=verdict,
                    rule_fired=f"override (was {d.verdict}: {d.rule_fired})",
                    source="override",
                    note=note,
                )
            )
        else:
            out.append(replace(d))
    return out


def verdict_counts(decisions: list[TriageDecision]) -> dict[str, int]:
    counts = {v: 0 for v in VERDICTS}
    for d in decisions:
        counts[d.verdict] += 1
    return counts


def consistency_record(
    decisions: list[TriageDecision],
    model_hash: str,
    policy: TriagePolicy,
    backend_id: str,
    input_hashes: dict[str, str] | None = None,
) -> dict:
    """Deterministic audit record; identical runs produce identical hashes."""
    body = {
        "model_hash": model_hash,
        "backend_id": backend_id,
        "policy": policy.snapshot(),
        "input_hashes": dict(input_hashes or {}),
        "decisions": [d.to_dict() for d in decisions],
    }
    record_hash = sha256_hex(canonical_json(body).encode("ascii"))
    return {"record_hash": record_hash, **body}


def append_consistency_log(path, record: dict) -> None:
    """Append-only JSONL log; existing records are never touched."""
    line = canonical_json(record)
    with open(str(path), "a", encoding="ascii") as f:
        f.write(line + "\n")


def read_consistency_log(path) -> list[dict]:
    if not os.path.exists(str(path)):
        return []
    records = []
    with open(str(path), "r", encoding="ascii") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
