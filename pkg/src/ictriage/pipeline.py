"""End-to-end run orchestration and the output catalog.

A run executes ingest -> filter -> ICA -> render -> classify -> triage ->
clean -> catalog. For the offline backends and a fixed seed the whole run is
deterministic, so re-running with the same inputs reproduces every catalog
file byte for byte. Catalog files are written into a staging directory and
renamed into place; on failure the staging area moves to quarantine/ so the
main catalog never holds partial output.
"""

from __future__ import annotations

import csv
import html
import io
import json
import os
import shutil
import time
from dataclasses import dataclass, field

from .client import (
    BackendConfig,
    ClassificationFailure,
    CostMeter,
    classify_all,
    compute_component_features,
    make_transport,
)
from .container import load_container, save_container, sniff_container
from .dashboard import RenderParams, render_all
from .edf import load_edf
from .errors import ConfigurationError, FormatError, IctriageError, StageError
from .filters import bandpass_filter, notch_filter
from .ica import (
    apply_rejection,
    fit_extended_infomax,
    fit_fastica,
    model_content_hash,
    save_model,
)
from .metrics import DEFAULT_MERGE_MAP, LabelSet, evaluate, render_report
from .recording import Recording
from .synth import load_ground_truth, match_components
from .triage import (
    TriagePolicy,
    append_consistency_log,
    apply_overrides,
    consistency_record,
    decide_all,
    parse_overrides,
    verdict_counts,
)
from .util import sha256_of_file

CATALOG_FILES = (
    "results.csv",
    "cleaned_raw.icvrec",
    "report_all_components.html",
    "summary.txt",
)


@dataclass
class RunConfig:
    input_path: str
    out_dir: str
    band: tuple = (1.0, 80.0)
    line_freq: float = 60.0
    n_harmonics: int = 1
    ica_method: str = "extended_infomax"
    n_components: int | None = None
    seed: int = 0
    backend: BackendConfig = field(default_factory=BackendConfig)
    policy: TriagePolicy = field(default_factory=TriagePolicy)
    taxonomy_merge: dict = field(default_factory=lambda: dict(DEFAULT_MERGE_MAP))
    render: RenderParams = field(default_factory=RenderParams)
    truth_path: str | None = None
    overrides_path: str | None = None
    strict: bool = False

    def validate(self) -> None:
        if not self.input_path or not os.path.exists(self.input_path):
            raise ConfigurationError(f"input path does not exist: {self.input_path!r}")
        if not self.out_dir:
            raise ConfigurationError("out_dir must be set")
        lo, hi = self.band
        if not (0 < lo < hi):
            raise ConfigurationError(f"bad filter band {self.band}")
        if self.ica_method not in ("fastica", "extended_infomax"):
            raise ConfigurationError(f"unknown ica method {self.ica_method!r}")
        if self.n_harmonics < 0:
            raise ConfigurationError(f"n_harmonics must be >= 0, got {self.n_harmonics}")
        if self.backend.kind == "http_api":
            # Fail before any expensive stage runs.
            key_env = self.backend.api_key_env or "ICVISION_API_KEY"
            if not os.environ.get(key_env, ""):
                raise ConfigurationError(
                    f"backend http_api needs an API key in ${key_env}; none found"
                )
            if not (self.backend.base_url or os.environ.get("ICVISION_API_BASE", "")):
                raise ConfigurationError(
                    "backend http_api needs a base URL "
                    "(backend.base_url or $ICVISION_API_BASE)"
                )
        if self.backend.kind == "oracle_mock" and not self.truth_path:
            raise ConfigurationError("oracle_mock backend needs truth_path")
        if self.truth_path and not os.path.exists(self.truth_path):
            raise ConfigurationError(f"truth_path does not exist: {self.truth_path!r}")
        if self.overrides_path and not os.path.exists(self.overrides_path):
            raise ConfigurationError(
                f"overrides_path does not exist: {self.overrides_path!r}"
            )

    def snapshot(self) -> dict:
        return {
            "input_path": str(self.input_path),
            "band": list(self.band),
            "line_freq": self.line_freq,
            "n_harmonics": self.n_harmonics,
            "ica_method": self.ica_method,
            "n_components": self.n_components,
            "seed": self.seed,
            "backend": {
                "kind": self.backend.kind,
                "model_name": self.backend.model_name,
                "batch_size": self.backend.batch_size,
                "max_in_flight": self.backend.max_in_flight,
                "per_component_usd": self.backend.per_component_usd,
            },
            "policy": self.policy.snapshot(),
            "taxonomy_merge": dict(self.taxonomy_merge),
            "render": self.render.snapshot(),
            "strict": self.strict,
        }


@dataclass
class RunSummary:
    dataset_id: str
    n_components: int
    label_counts: dict
    verdicts: dict
    total_usd: float
    wall_time_s: float
    output_hashes: dict
    config_snapshot: dict
    n_flagged_failures: int = 0

    @property
    def rejected(self) -> int:
        return self.verdicts.get("reject", 0)

    @property
    def kept(self) -> int:
        return self.verdicts.get("keep", 0)

    @property
    def flagged(self) -> int:
        return self.verdicts.get("flag", 0)


def load_recording(path) -> Recording:
    """Open a recording by sniffing the format: native container, then EDF."""
    if sniff_container(path):
        return load_container(path)
    try:
        return load_edf(path)
    except IctriageError as exc:
        raise FormatError(
            f"{path}: not a native container and EDF parsing failed ({exc})"
        ) from exc


def _stage(name: str):
    """Decorator-ish helper: wraps stage exceptions with the stage name."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, str(exc)) from exc
            return False

    return _Ctx()


def run(config: RunConfig) -> RunSummary:
    """Execute the full pipeline and write the output catalog."""
    t_start = time.perf_counter()
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)

    lock_path = os.path.join(config.out_dir, ".lock")
    try:
        lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StageError("lock", f"output directory is locked: {lock_path}") from None
    os.close(lock_fd)

    try:
        with _stage("ingest"):
            raw = load_recording(config.input_path)
        with _stage("filter"):
            lo, hi = config.band
            rec = bandpass_filter(raw, lo, hi)
            if config.n_harmonics > 0:
                rec = notch_filter(rec, config.line_freq, config.n_harmonics)
            rec.meta["line_freq"] = repr(float(config.line_freq))

        with _stage("ica"):
            fit = fit_fastica if config.ica_method == "fastica" else fit_extended_infomax
            model = fit(rec, n_components=config.n_components, seed=config.seed)

        with _stage("render"):
            dashboards = render_all(model, rec, config.render)

        with _stage("classify"):
            truth = None
            truth_labels = None
            features = None
            if config.truth_path:
                truth = load_ground_truth(config.truth_path, recording=rec)
                truth_labels = match_components(model, truth)
            if config.backend.kind == "heuristic":
                features = compute_component_features(model, rec)
            transport = make_transport(
                config.backend, truth_labels=truth_labels, features=features
            )
            results = classify_all(dashboards, config.backend, transport=transport)

        with _stage("triage"):
            decisions = decide_all(results, config.policy)
            if config.overrides_path:
                decisions = apply_overrides(decisions, parse_overrides(config.overrides_path))
            rejected = sorted(d.component_index for d in decisions if d.verdict == "reject")

        with _stage("clean"):
            cleaned = apply_rejection(model, rec, rejected)

        with _stage("catalog"):
            meter = CostMeter()
            meter.add(results)
            summary = _build_summary(
                rec, results, decisions, meter, config, t_start
            )
            output_hashes = write_catalog(
                out_dir=config.out_dir,
                recording_cleaned=cleaned,
                model=model,
                dashboards=dashboards,
                results=results,
                decisions=decisions,
                summary=summary,
                config=config,
                truth_labels=truth_labels,
            )
            summary.output_hashes = output_hashes

        with _stage("log"):
            record = consistency_record(
                decisions,
                model_hash=model_content_hash(model),
                policy=config.policy,
                backend_id=config.backend.backend_id,
                input_hashes={"input": sha256_of_file(config.input_path)},
            )
            append_consistency_log(
                os.path.join(config.out_dir, "consistency_log.jsonl"), record
            )

        summary.wall_time_s = time.perf_counter() - t_start
        return summary
    finally:
        if os.path.exists(lock_path):
            os.remove(lock_path)


def _build_summary(rec, results, decisions, meter, config, t_start) -> RunSummary:
    label_counts: dict = {}
    n_failures = 0
    for r in results:
        if isinstance(r, ClassificationFailure):
            n_failures += 1
            continue
        label_counts[r.label] = label_counts.get(r.label, 0) + 1
    counts = verdict_counts(decisions)
    if sum(counts.values()) != len(results):
        raise StageError(
            "catalog",
            f"verdicts cover {sum(counts.values())} components, expected {len(results)}",
        )
    return RunSummary(
        dataset_id=rec.meta.get("dataset_id", "dataset"),
        n_components=len(results),
        label_counts=label_counts,
        verdicts=verdict_counts(decisions),
        total_usd=meter.total_usd,
        wall_time_s=time.perf_counter() - t_start,
        output_hashes={},
        config_snapshot=config.snapshot(),
        n_flagged_failures=n_failures,
    )


def results_csv_text(results, decisions) -> str:
    """RFC-4180 rows: index, label, confidence, verdict, reasoning, cost."""
    verdict_by_index = {d.component_index: d for d in decisions}
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    writer.writerow(["component_index", "label", "confidence", "verdict", "reasoning", "usd_cost"])
    for r in results:
        d = verdict_by_index[r.component_index]
        if isinstance(r, ClassificationFailure):
            writer.writerow(
                [r.component_index, "", "", d.verdict, f"classification failed: {r.error}", f"{r.usd_cost:.6f}"]
            )
        else:
            writer.writerow(
                [
                    r.component_index,
                    r.label,
                    f"{r.confidence:.4f}",
                    d.verdict,
                    r.reasoning,
                    f"{r.usd_cost:.6f}",
                ]
            )
    return buf.getvalue()


def summary_text(summary: RunSummary, merged_report: str | None = None) -> str:
    """Counts, costs and rejection statistics plus the config snapshot.

    Contains no wall-clock fields so identical runs emit identical bytes.
    The cleaned recording is stored in the native .icvrec container, which
    stands in for tool-specific raw formats named elsewhere.
    """
    lines = [
        "ictriage run summary",
        "====================",
        f"dataset_id: {summary.dataset_id}",
        f"components: {summary.n_components}",
        f"rejected: {summary.rejected}",
        f"kept: {summary.kept}",
        f"flagged: {summary.flagged}",
        f"classification_failures: {summary.n_flagged_failures}",
        f"total_cost_usd: {summary.total_usd:.6f}",
        "",
        "label counts:",
    ]
    for label in sorted(summary.label_counts):
        lines.append(f"  {label}: {summary.label_counts[label]}")
    lines.append("")
    lines.append("note: cleaned_raw.icvrec is the native container output; convert")
    lines.append("with your EEG toolbox of choice if another raw format is needed.")
    lines.append("")
    lines.append("config:")
    lines.append(json.dumps(summary.config_snapshot, sort_keys=True, indent=2))
    if merged_report:
        lines.append("")
        lines.append("agreement vs ground truth:")
        lines.append(merged_report)
    return "\n".join(lines) + "\n"


def report_html(results, decisions, manifest: dict, dataset_id: str) -> str:
    """Self-contained HTML report: one dashboard and decision per component."""
    verdict_by_index = {d.component_index: d for d in decisions}
    rows = []
    for r in results:
        idx = r.component_index
        d = verdict_by_index[idx]
        fname = f"{dataset_id}_comp_{idx:03d}.png"
        digest = manifest.get(fname, "")
        if isinstance(r, ClassificationFailure):
            label, confidence, reasoning = "(failed)", "", r.error
        else:
            label, confidence, reasoning = r.label, f"{r.confidence:.2f}", r.reasoning
        rows.append(
            "<section>"
            f"<h2>Component {idx:03d}</h2>"
            f'<img src="dashboards/{html.escape(fname)}" alt="{html.escape(fname)}" '
            'width="512" height="512">'
            "<table>"
            f"<tr><th>label</th><td>{html.escape(label)}</td></tr>"
            f"<tr><th>confidence</th><td>{confidence}</td></tr>"
            f"<tr><th>verdict</th><td>{html.escape(d.verdict)}</td></tr>"
            f"<tr><th>rule</th><td>{html.escape(d.rule_fired)}</td></tr>"
            f"<tr><th>image sha256</th><td><code>{digest}</code></td></tr>"
            "</table>"
            f"<p>{html.escape(reasoning)}</p>"
            "</section>"
        )
    return (
        "<!DOCTYPE html>\n<html><head><meta charset='utf-8'>"
        f"<title>{html.escape(dataset_id)} component report</title>"
        "<style>body{font-family:sans-serif;max-width:900px;margin:auto}"
        "table{border-collapse:collapse}th,td{border:1px solid #999;"
        "padding:2px 8px;text-align:left}section{margin-bottom:2em}</style>"
        "</head><body>"
        f"<h1>Component report: {html.escape(dataset_id)}</h1>"
        + "".join(rows)
        + "</body></html>\n"
    )


def write_catalog(
    out_dir,
    recording_cleaned: Recording,
    model,
    dashboards,
    results,
    decisions,
    summary: RunSummary,
    config: RunConfig,
    truth_labels: dict | None = None,
) -> dict:
    """Write the full output catalog via a staging directory.

    Files land under their final names only after being fully written; on
    error the staging area is moved to quarantine/ and the error re-raised.
    """
    out_dir = str(out_dir)
    staging = os.path.join(out_dir, ".staging")
    if os.path.exists(staging):
        shutil.rmtree(staging)
    os.makedirs(staging)
    os.makedirs(os.path.join(staging, "dashboards"))

    try:
        from .dashboard import write_dashboards

        manifest = write_dashboards(dashboards, os.path.join(staging, "dashboards"))

        with open(os.path.join(staging, "results.csv"), "w", encoding="utf-8", newline="") as f:
            f.write(results_csv_text(results, decisions))

        save_container(recording_cleaned, os.path.join(staging, "cleaned_raw.icvrec"))
        save_model(model, os.path.join(staging, "ica_model.json"))

        with open(
            os.path.join(staging, "report_all_components.html"), "w", encoding="utf-8"
        ) as f:
            f.write(report_html(results, decisions, manifest, summary.dataset_id))

        with open(os.path.join(staging, "decisions.json"), "w", encoding="utf-8") as f:
            json.dump([d.to_dict() for d in decisions], f, sort_keys=True, indent=1)
            f.write("\n")

        with open(os.path.join(staging, "classifications.json"), "w", encoding="utf-8") as f:
            json.dump(classifications_doc(results), f, sort_keys=True, indent=1)
            f.write("\n")

        merged_report = None
        if truth_labels is not None:
            pred = {}
            for r in results:
                if not isinstance(r, ClassificationFailure):
                    pred[str(r.component_index)] = r.label
            truth_ls = LabelSet("truth", {str(k): v for k, v in truth_labels.items()})
            truth_ls.to_file(os.path.join(staging, "labels_truth.csv"))
            if pred:
                pred_ls = LabelSet("predicted", pred)
                pred_ls.to_file(os.path.join(staging, "labels_predicted.csv"))
                if set(pred) == set(truth_ls.labels):
                    report = evaluate(
                        {"predicted": pred_ls, "truth": truth_ls},
                        truth_key="truth",
                        merge_map=config.taxonomy_merge,
                    )
                    merged_report = render_report(report)
                    with open(
                        os.path.join(staging, "eval_report.json"), "w", encoding="utf-8"
                    ) as f:
                        json.dump(report.to_dict(), f, sort_keys=True, indent=1)
                        f.write("\n")

        with open(os.path.join(staging, "summary.txt"), "w", encoding="utf-8") as f:
            f.write(summary_text(summary, merged_report))
    except Exception:
        quarantine = os.path.join(out_dir, "quarantine")
        if os.path.exists(quarantine):
            shutil.rmtree(quarantine)
        shutil.move(staging, quarantine)
        raise

    # Promote staged files to their final names.
    final_dash = os.path.join(out_dir, "dashboards")
    if os.path.exists(final_dash):
        shutil.rmtree(final_dash)
    os.replace(os.path.join(staging, "dashboards"), final_dash)
    hashes = {}
    for name in sorted(os.listdir(staging)):
        os.replace(os.path.join(staging, name), os.path.join(out_dir, name))
        hashes[name] = sha256_of_file(os.path.join(out_dir, name))
    shutil.rmtree(staging)
    for fname, digest in manifest.items():
        hashes[f"dashboards/{fname}"] = digest
    return hashes


def classifications_doc(results) -> list:
    doc = []
    for r in results:
        if isinstance(r, ClassificationFailure):
            doc.append(
                {
                    "component_index": r.component_index,
                    "error": r.error,
                    "backend_id": r.backend_id,
                    "usd_cost": r.usd_cost,
                }
            )
        else:
            doc.append(
                {
                    "component_index": r.component_index,
                    "label": r.label,
                    "confidence": r.confidence,
                    "reasoning": r.reasoning,
                    "backend_id": r.backend_id,
                    "usd_cost": r.usd_cost,
                    "flags": list(r.flags),
                }
            )
    return doc


def load_classifications(path) -> list:
    """Rehydrate classify-stage output written by write_catalog."""
    from .client import ComponentClassification

    with open(str(path), "r", encoding="utf-8") as f:
        doc = json.load(f)
    out = []
    for entry in doc:
        if "error" in entry:
            out.append(
                ClassificationFailure(
                    component_index=entry["component_index"],
                    error=entry["error"],
                    raw_response="",
                    backend_id=entry.get("backend_id", ""),
                    usd_cost=entry.get("usd_cost", 0.0),
                )
            )
        else:
            out.append(
                ComponentClassification(
                    component_index=entry["component_index"],
                    label=entry["label"],
                    confidence=entry["confidence"],
                    reasoning=entry["reasoning"],
                    backend_id=entry.get("backend_id", ""),
                    usd_cost=entry.get("usd_cost", 0.0),
                )
            )
    return out
