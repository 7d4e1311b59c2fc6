"""Command-line entry point.

Subcommands mirror the pipeline stages so the expensive ones can be cached
and replayed:

    run           full pipeline on one recording
    synth         generate synthetic datasets with ground truth
    render        fit ICA (or load a model) and write dashboards
    classify      classify previously rendered dashboards
    triage        turn classifications into keep/reject/flag decisions
    review-apply  apply a reviewer override file to decisions
    clean         back-project with rejected components zeroed
    eval          agreement metrics between label files

Exit codes: 0 success, 2 configuration error, 3 stage failure, 4 success
with flagged components under --strict.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .client import BackendConfig
from .dashboard import RenderParams
from .errors import ConfigurationError, IctriageError, StageError
from .metrics import DEFAULT_MERGE_MAP, LabelSet, evaluate, render_report
from .pipeline import RunConfig, load_classifications, load_recording, run
from .triage import TriagePolicy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_FLAGGED = 4


def _add_backend_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", default="heuristic",
                   choices=["heuristic", "oracle", "http"],
                   help="classification backend (default: heuristic)")
    p.add_argument("--model-name", default="gpt-4.1")
    p.add_argument("--base-url", default="")
    p.add_argument("--api-key-env", default="ICVISION_API_KEY")
    p.add_argument("--batch-size", type=int, default=10)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--per-component-usd", type=float, default=0.002)
    p.add_argument("--truth", default=None, help="ground-truth sidecar (oracle backend)")


def _backend_from_args(args) -> BackendConfig:
    kind = {"heuristic": "heuristic", "oracle": "oracle_mock", "http": "http_api"}[args.backend]
    return BackendConfig(
        kind=kind,
        base_url=args.base_url,
        model_name=args.model_name,
        api_key_env=args.api_key_env,
        batch_size=args.batch_size,
        max_in_flight=args.max_in_flight,
        per_component_usd=args.per_component_usd,
    )


def _add_policy_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--reject-threshold", type=float, default=0.80,
                   help="artifact confidence at or above which to reject")
    p.add_argument("--brain-flag-threshold", type=float, default=0.40,
                   help="brain confidence below which to flag")
    p.add_argument("--literal-thresholds", action="store_true",
                   help="audit mode: apply the literal published threshold wording")


def _policy_from_args(args) -> TriagePolicy:
    return TriagePolicy(
        artifact_reject_min_confidence=args.reject_threshold,
        brain_flag_max_confidence=args.brain_flag_threshold,
        literal_thresholds=args.literal_thresholds,
    )


def _expand_config_argv(argv: list[str]) -> list[str]:
    """Turn ``--config file`` JSON keys into flags placed before the explicit
    command-line flags, so anything typed by hand wins."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ConfigurationError("--config needs a file path")
    path = argv[i + 1]
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config file {path!r}: {exc}")
    if not isinstance(doc, dict):
        raise ConfigurationError("config file must hold a JSON object")
    tokens: list[str] = []
    for key in sorted(doc):
        value = doc[key]
        flag = "--" + str(key).replace("_", "-")
        if isinstance(value, bool):
            if value:
                tokens.append(flag)
        elif isinstance(value, list):
            tokens.append(flag)
            tokens.extend(str(v) for v in value)
        elif value is None:
            continue
        else:
            tokens.extend([flag, str(value)])
    # Keep the subcommand first, then config-derived flags, then user flags.
    return argv[:1] + tokens + argv[1:]


def cmd_run(args) -> int:
    merge = dict(DEFAULT_MERGE_MAP) if args.taxonomy_merge == "default" else {}
    config = RunConfig(
        input_path=args.input,
        out_dir=args.out,
        band=(args.band_lo, args.band_hi),
        line_freq=args.line_freq,
        n_harmonics=args.n_harmonics,
        ica_method=args.ica_method,
        n_components=args.n_components,
        seed=args.seed,
        backend=_backend_from_args(args),
        policy=_policy_from_args(args),
        taxonomy_merge=merge,
        truth_path=args.truth,
        overrides_path=args.overrides,
        strict=args.strict,
    )
    summary = run(config)
    print(f"components: {summary.n_components}")
    print(f"rejected: {summary.rejected}  kept: {summary.kept}  flagged: {summary.flagged}")
    print(f"total_cost_usd: {summary.total_usd:.6f}")
    print(f"wall_time_s: {summary.wall_time_s:.2f}")
    print(f"catalog: {args.out}")
    if args.strict and summary.flagged > 0:
        return EXIT_FLAGGED
    return EXIT_OK


def cmd_synth(args) -> int:
    from .container import save_container
    from .synth import generate_dataset, default_corpus_specs, save_ground_truth

    os.makedirs(args.out, exist_ok=True)
    for i in range(args.n_datasets):
        specs = default_corpus_specs(args.seed, i)
        rec, truth = generate_dataset(
            specs,
            sfreq=args.sfreq,
            duration=args.duration,
            noise_floor_uv=args.noise_floor,
            seed=args.seed * 100_000 + i,
            dataset_id=f"synth{args.seed:02d}_{i:02d}",
        )
        base = os.path.join(args.out, truth.dataset_id)
        save_container(rec, base + ".icvrec")
        save_ground_truth(truth, base + ".truth.json")
        print(f"{base}.icvrec  ({len(specs)} sources, {rec.duration:.0f} s)")
    return EXIT_OK


def cmd_render(args) -> int:
    from .dashboard import render_all, write_dashboards
    from .filters import bandpass_filter, notch_filter
    from .ica import fit_extended_infomax, fit_fastica, load_model, save_model

    rec = load_recording(args.input)
    if args.filter:
        rec = bandpass_filter(rec, args.band_lo, args.band_hi)
        if args.n_harmonics > 0:
            rec = notch_filter(rec, args.line_freq, args.n_harmonics)
    if args.ica and os.path.exists(args.ica):
        model = load_model(args.ica)
    else:
        fit = fit_fastica if args.ica_method == "fastica" else fit_extended_infomax
        model = fit(rec, n_components=args.n_components, seed=args.seed)
        if args.ica:
            save_model(model, args.ica)
    dashboards = render_all(model, rec, RenderParams())
    manifest = write_dashboards(dashboards, args.out)
    print(f"wrote {len(manifest)} dashboards to {args.out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    from .client import classify_all, compute_component_features, make_transport
    from .ica import load_model
    from .pipeline import classifications_doc
    from .synth import load_ground_truth, match_components

    rec = load_recording(args.input)
    model = load_model(args.ica)
    from .dashboard import render_all

    dashboards = render_all(model, rec, RenderParams())
    backend = _backend_from_args(args)
    truth_labels = None
    features = None
    if backend.kind == "oracle_mock":
        if not args.truth:
            raise ConfigurationError("--backend oracle needs --truth")
        truth = load_ground_truth(args.truth, recording=rec)
        truth_labels = match_components(model, truth)
    if backend.kind == "heuristic":
        features = compute_component_features(model, rec)
    transport = make_transport(backend, truth_labels=truth_labels, features=features)
    results = classify_all(dashboards, backend, transport=transport)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(classifications_doc(results), f, sort_keys=True, indent=1)
        f.write("\n")
    print(f"classified {len(results)} components -> {args.out}")
    return EXIT_OK


def cmd_triage(args) -> int:
    from .triage import decide_all

    results = load_classifications(args.classifications)
    decisions = decide_all(results, _policy_from_args(args))
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump([d.to_dict() for d in decisions], f, sort_keys=True, indent=1)
        f.write("\n")
    counts = {}
    for d in decisions:
        counts[d.verdict] = counts.get(d.verdict, 0) + 1
    print(f"decisions -> {args.out}  {counts}")
    return EXIT_OK


def cmd_review_apply(args) -> int:
    from .triage import TriageDecision, apply_overrides, parse_overrides

    with open(args.decisions, "r", encoding="utf-8") as f:
        doc = json.load(f)
    decisions = [
        TriageDecision(
            component_index=d["component_index"],
            verdict=d["verdict"],
            rule_fired=d["rule_fired"],
            source=d.get("source", "policy"),
            note=d.get("note", ""),
        )
        for d in doc
    ]
    updated = apply_overrides(decisions, parse_overrides(args.overrides))
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump([d.to_dict() for d in updated], f, sort_keys=True, indent=1)
        f.write("\n")
    n_changed = sum(1 for a, b in zip(decisions, updated) if a.verdict != b.verdict)
    print(f"applied overrides: {n_changed} verdict(s) changed -> {args.out}")
    return EXIT_OK


def cmd_clean(args) -> int:
    from .container import save_container
    from .ica import apply_rejection, load_model

    rec = load_recording(args.input)
    model = load_model(args.ica)
    with open(args.decisions, "r", encoding="utf-8") as f:
        doc = json.load(f)
    rejected = sorted(d["component_index"] for d in doc if d["verdict"] == "reject")
    cleaned = apply_rejection(model, rec, rejected)
    save_container(cleaned, args.out)
    print(f"rejected {len(rejected)} components -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    label_sets = {}
    for spec in args.labels:
        if "=" in spec:
            name, path = spec.split("=", 1)
        else:
            name, path = os.path.splitext(os.path.basename(spec))[0], spec
        label_sets[name] = LabelSet.from_file(path, rater_id=name)
    truth_key = args.truth_rater or sorted(label_sets)[-1]
    merge = dict(DEFAULT_MERGE_MAP) if args.merge_taxonomy else None
    report = evaluate(label_sets, truth_key=truth_key, merge_map=merge)
    text = render_report(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, sort_keys=True, indent=1)
            f.write("\n")
        print(f"report -> {args.out}")
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ictriage",
        description="EEG independent-component triage pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline on one recording")
    p.add_argument("--input", required=True, help="recording (.icvrec or EDF)")
    p.add_argument("--out", required=True, help="output catalog directory")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--band-lo", type=float, default=1.0)
    p.add_argument("--band-hi", type=float, default=80.0)
    p.add_argument("--line-freq", type=float, default=60.0)
    p.add_argument("--n-harmonics", type=int, default=1)
    p.add_argument("--ica-method", default="extended_infomax",
                   choices=["fastica", "extended_infomax"])
    p.add_argument("--n-components", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--overrides", default=None)
    p.add_argument("--taxonomy-merge", default="default", choices=["default", "none"],
                   help="fold line_noise into other_artifact in reports (default) or keep all seven labels")
    p.add_argument("--strict", action="store_true",
                   help="exit 4 when flagged components remain")
    _add_backend_args(p)
    _add_policy_args(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("synth", help="generate synthetic datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--n-datasets", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sfreq", type=float, default=250.0)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--noise-floor", type=float, default=2.0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("render", help="fit ICA and write dashboards")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ica", default=None,
                   help="model sidecar: loaded when present, else written after the fit")
    p.add_argument("--ica-method", default="extended_infomax",
                   choices=["fastica", "extended_infomax"])
    p.add_argument("--n-components", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--filter", action="store_true", help="band-pass + notch before the fit")
    p.add_argument("--band-lo", type=float, default=1.0)
    p.add_argument("--band-hi", type=float, default=80.0)
    p.add_argument("--line-freq", type=float, default=60.0)
    p.add_argument("--n-harmonics", type=int, default=1)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("classify", help="classify components of a recording")
    p.add_argument("--input", required=True)
    p.add_argument("--ica", required=True, help="model sidecar from render")
    p.add_argument("--out", required=True, help="classifications JSON")
    _add_backend_args(p)
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("triage", help="keep/reject/flag decisions")
    p.add_argument("--classifications", required=True)
    p.add_argument("--out", required=True)
    _add_policy_args(p)
    p.set_defaults(fn=cmd_triage)

    p = sub.add_parser("review-apply", help="apply reviewer overrides")
    p.add_argument("--decisions", required=True)
    p.add_argument("--overrides", required=True,
                   help="text file: component_index, verdict, note")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_review_apply)

    p = sub.add_parser("clean", help="back-project without rejected components")
    p.add_argument("--input", required=True)
    p.add_argument("--ica", required=True)
    p.add_argument("--decisions", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_clean)

    p = sub.add_parser("eval", help="agreement metrics between label files")
    p.add_argument("--labels", nargs="+", required=True,
                   help="label files, optionally name=path")
    p.add_argument("--truth-rater", default=None,
                   help="rater treated as truth (default: last by name)")
    p.add_argument("--merge-taxonomy", action="store_true",
                   help="fold line_noise into other_artifact before scoring")
    p.add_argument("--out", default=None, help="write the report as JSON")
    p.set_defaults(fn=cmd_eval)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        if argv and argv[0] == "run":
            argv = _expand_config_argv(argv)
        args = parser.parse_args(argv)
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except IctriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
