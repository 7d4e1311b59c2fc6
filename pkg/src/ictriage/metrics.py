"""Inter-rater agreement metrics and report rendering.

Covers chance-corrected agreement between two label sets, exact agreement,
three-way agreement strata, confusion matrices and label distributions, with
an optional label-merge map for collapsing the taxonomy before scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError

DEFAULT_MERGE_MAP = {"line_noise": "other_artifact"}


@dataclass
class LabelSet:
    rater_id: str
    labels: dict  # component key -> label

    def __post_init__(self):
        if not self.labels:
            raise AlignmentError(f"label set {self.rater_id!r} is empty")
        self.labels = {k: str(v) for k, v in self.labels.items()}

    def merged(self, merge_map: dict | None) -> "LabelSet":
        if not merge_map:
            return self
        return LabelSet(
            rater_id=self.rater_id,
            labels={k: merge_map.get(v, v) for k, v in self.labels.items()},
        )

    @classmethod
    def from_file(cls, path, rater_id: str | None = None) -> "LabelSet":
        """Text lines ``component_key, label``; # comments allowed."""
        labels = {}
        with open(str(path), "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [p.strip() for p in line.split(",", 1)]
                if len(parts) != 2 or not parts[1]:
                    raise AlignmentError(f"{path}:{lineno}: expected 'key, label'")
                labels[parts[0]] = parts[1]
        return cls(rater_id=rater_id or str(path), labels=labels)

    def to_file(self, path) -> None:
        with open(str(path), "w", encoding="utf-8") as f:
            for key in sorted(self.labels, key=str):
                f.write(f"{key}, {self.labels[key]}\n")


def _aligned_keys(a: LabelSet, b: LabelSet) -> list:
    ka, kb = set(a.labels), set(b.labels)
    if ka != kb:
        only_a = sorted(ka - kb, key=str)[:10]
        only_b = sorted(kb - ka, key=str)[:10]
        raise AlignmentError(
            f"label sets {a.rater_id!r} and {b.rater_id!r} cover different components; "
            f"only in first: {only_a}, only in second: {only_b}"
        )
    return sorted(ka, key=str)


def cohens_kappa(a: LabelSet, b: LabelSet) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    Degenerate case where both raters are constant: 1.0 when they agree on
    the single label, 0.0 when they do not (the formula is 0/0 there).
    """
    keys = _aligned_keys(a, b)
    n = len(keys)
    la = [a.labels[k] for k in keys]
    lb = [b.labels[k] for k in keys]
    p_o = sum(1 for x, y in zip(la, lb) if x == y) / n

    labels = sorted(set(la) | set(lb))
    pa = {l: la.count(l) / n for l in labels}
    pb = {l: lb.count(l) / n for l in labels}
    p_e = sum(pa[l] * pb[l] for l in labels)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def exact_agreement(a: LabelSet, b: LabelSet) -> float:
    keys = _aligned_keys(a, b)
    return sum(1 for k in keys if a.labels[k] == b.labels[k]) / len(keys)


def stratify_three_way(vl: LabelSet, baseline: LabelSet, human: LabelSet) -> dict:
    """Agreement strata across three raters.

    unanimous: all three agree; automated_vs_human: the two automated raters
    agree with each other but not with the human; mixed: everything else
    (any other two-way agreement or total disagreement).
    """
    keys = _aligned_keys(vl, baseline)
    keys2 = _aligned_keys(vl, human)
    if keys != keys2:
        raise AlignmentError("three-way stratification needs identical key sets")
    counts = {"unanimous": 0, "mixed": 0, "automated_vs_human": 0}
    for k in keys:
        v, b, h = vl.labels[k], baseline.labels[k], human.labels[k]
        if v == b == h:
            counts["unanimous"] += 1
        elif v == b and v != h:
            counts["automated_vs_human"] += 1
        else:
            counts["mixed"] += 1
    n = len(keys)
    return {k: c / n for k, c in counts.items()}


@dataclass
class EvalReport:
    kappa: dict          # pair name -> kappa
    exact: dict          # pair name -> exact agreement
    strata: dict         # stratum name -> fraction (may be empty)
    taxonomy: list       # label order used for the confusion matrix
    confusion: np.ndarray  # rows = truth, columns = predicted
    distributions: dict  # rater -> {label: fraction}
    n_components: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "exact": self.exact,
            "strata": self.strata,
            "taxonomy": list(self.taxonomy),
            "confusion": self.confusion.tolist(),
            "distributions": self.distributions,
            "n_components": self.n_components,
            "notes": list(self.notes),
        }


def confusion_and_distribution(
    pred: LabelSet,
    truth: LabelSet,
    taxonomy: list | None = None,
    merge_map: dict | None = None,
) -> tuple[np.ndarray, list, dict]:
    """Confusion matrix (rows = truth, columns = predicted) plus per-rater
    label distributions, after applying the optional merge map."""
    pred = pred.merged(merge_map)
    truth = truth.merged(merge_map)
    keys = _aligned_keys(pred, truth)
    if taxonomy is None:
        taxonomy = sorted(set(pred.labels.values()) | set(truth.labels.values()))
    else:
        taxonomy = [merge_map.get(l, l) for l in taxonomy] if merge_map else list(taxonomy)
        seen = set()
        taxonomy = [l for l in taxonomy if not (l in seen or seen.add(l))]
    index = {l: i for i, l in enumerate(taxonomy)}
    matrix = np.zeros((len(taxonomy), len(taxonomy)), dtype=int)
    for k in keys:
        t, p = truth.labels[k], pred.labels[k]
        if t not in index or p not in index:
            raise AlignmentError(f"label outside taxonomy: {t!r} / {p!r}")
        matrix[index[t], index[p]] += 1
    n = len(keys)
    dists = {}
    for rater in (pred, truth):
        counts = {l: 0 for l in taxonomy}
        for v in rater.labels.values():
            counts[v] += 1
        dists[rater.rater_id] = {l: counts[l] / n for l in taxonomy}
    return matrix, taxonomy, dists


def evaluate(
    raters: dict[str, LabelSet],
    truth_key: str,
    merge_map: dict | None = None,
    taxonomy: list | None = None,
) -> EvalReport:
    """Full report: pairwise kappa/agreement against the truth rater, strata
    when exactly three raters are present, confusion vs truth for each rater."""
    if truth_key not in raters:
        raise AlignmentError(f"truth rater {truth_key!r} missing from {sorted(raters)}")
    merged = {name: ls.merged(merge_map) for name, ls in raters.items()}
    truth = merged[truth_key]

    kappa = {}
    exact = {}
    for name, ls in merged.items():
        if name == truth_key:
            continue
        kappa[f"{name} vs {truth_key}"] = cohens_kappa(ls, truth)
        exact[f"{name} vs {truth_key}"] = exact_agreement(ls, truth)

    strata = {}
    others = [name for name in merged if name != truth_key]
    if len(others) == 2:
        strata = stratify_three_way(merged[others[0]], merged[others[1]], truth)

    first_pred = merged[others[0]] if others else truth
    confusion, tax, dists = confusion_and_distribution(
        first_pred, truth, taxonomy=taxonomy, merge_map=None
    )
    for name in others[1:]:
        _, _, extra = confusion_and_distribution(merged[name], truth, taxonomy=tax)
        dists.update({name: extra[merged[name].rater_id]})
    return EvalReport(
        kappa=kappa,
        exact=exact,
        strata=strata,
        taxonomy=tax,
        confusion=confusion,
        distributions=dists,
        n_components=len(truth.labels),
    )


def render_report(report: EvalReport) -> str:
    """Human-readable text table for the terminal or summary files."""
    lines = []
    lines.append(f"components: {report.n_components}")
    for pair in sorted(report.kappa):
        lines.append(f"kappa[{pair}]: {report.kappa[pair]:.3f}")
    for pair in sorted(report.exact):
        lines.append(f"exact_agreement[{pair}]: {report.exact[pair] * 100:.1f}%")
    for name in ("unanimous", "mixed", "automated_vs_human"):
        if name in report.strata:
            lines.append(f"strata[{name}]: {report.strata[name] * 100:.1f}%")
    lines.append("")
    lines.append("label distribution:")
    for rater in sorted(report.distributions):
        dist = report.distributions[rater]
        ranked = sorted(dist.items(), key=lambda kv: (-kv[1], kv[0]))
        parts = [f"{label} ({frac * 100:.1f}%)" for label, frac in ranked if frac > 0]
        lines.append(f"  {rater}: " + ", ".join(parts))
    lines.append("")
    lines.append("confusion (rows = truth, columns = predicted):")
    width = max(len(l) for l in report.taxonomy) + 2
    header = " " * width + "".join(f"{l[:width - 1]:>{width}}" for l in report.taxonomy)
    lines.append(header)
    for i, label in enumerate(report.taxonomy):
        row = f"{label:<{width}}" + "".join(
            f"{int(v):>{width}}" for v in report.confusion[i]
        )
        lines.append(row)
    return "\n".join(lines) + "\n"
