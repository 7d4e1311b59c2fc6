import csv
import filecmp
import io
import json
import os

import numpy as np
import pytest

from ictriage.client import BackendConfig, ClassificationFailure, ComponentClassification
from ictriage.container import save_container
from ictriage.errors import ConfigurationError, StageError
from ictriage.metrics import LabelSet, cohens_kappa
from ictriage.pipeline import (
    CATALOG_FILES,
    RunConfig,
    load_recording,
    results_csv_text,
    run,
)
from ictriage.synth import SourceSpec, generate_dataset, save_ground_truth
from ictriage.triage import TriageDecision


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("data")
    specs = [
        SourceSpec("alpha_brain", 20.0),
        SourceSpec("blink_eye", 80.0),
        SourceSpec("emg_muscle", 25.0),
        SourceSpec("ecg_heart", 15.0),
        SourceSpec("dead_channel_noise", 30.0),
    ]
    rec, truth = generate_dataset(specs, seed=51, duration=60.0, dataset_id="run01")
    rec_path = tmp / "run01.icvrec"
    truth_path = tmp / "run01.truth.json"
    save_container(rec, rec_path)
    save_ground_truth(truth, truth_path)
    return {"rec_path": str(rec_path), "truth_path": str(truth_path), "n_sources": 5}


def oracle_config(dataset, out_dir, seed=0):
    return RunConfig(
        input_path=dataset["rec_path"],
        out_dir=str(out_dir),
        ica_method="fastica",
        n_components=dataset["n_sources"],
        seed=seed,
        backend=BackendConfig(kind="oracle_mock"),
        truth_path=dataset["truth_path"],
    )


class TestRun:
    def test_oracle_run_matches_ground_truth(self, dataset, tmp_path):
        summary = run(oracle_config(dataset, tmp_path / "out"))
        assert summary.n_components == 5
        # oracle labels equal truth, so every non-brain source is rejected
        assert summary.rejected == 4
        assert summary.kept == 1
        assert summary.flagged == 0
        truth_ls = LabelSet.from_file(tmp_path / "out" / "labels_truth.csv", "truth")
        pred_ls = LabelSet.from_file(tmp_path / "out" / "labels_predicted.csv", "pred")
        assert cohens_kappa(pred_ls, truth_ls) == 1.0

    def test_catalog_complete(self, dataset, tmp_path):
        out = tmp_path / "cat"
        summary = run(oracle_config(dataset, out))
        for name in CATALOG_FILES:
            assert (out / name).exists(), name
        dash_files = [f for f in os.listdir(out / "dashboards") if f.endswith(".png")]
        assert len(dash_files) == summary.n_components
        with open(out / "results.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert len(rows) == summary.n_components + 1  # header + one per component
        report = (out / "report_all_components.html").read_text()
        assert report.count("<section>") == summary.n_components
        manifest = json.loads((out / "dashboards" / "manifest.json").read_text())
        for fname, digest in manifest.items():
            assert fname in report
            assert digest in report

    def test_summary_txt_schema(self, dataset, tmp_path):
        out = tmp_path / "s"
        run(oracle_config(dataset, out))
        text = (out / "summary.txt").read_text()
        for key in ("rejected:", "kept:", "flagged:", "total_cost_usd:"):
            assert key in text
        assert "config" in text

    def test_cleaned_recording_preserves_geometry(self, dataset, tmp_path):
        out = tmp_path / "g"
        run(oracle_config(dataset, out))
        original = load_recording(dataset["rec_path"])
        cleaned = load_recording(out / "cleaned_raw.icvrec")
        assert cleaned.n_channels == original.n_channels
        assert cleaned.sfreq == original.sfreq
        assert cleaned.n_samples == original.n_samples
        assert cleaned.channel_names == original.channel_names
        assert "rejected_components" in cleaned.meta

    def test_two_runs_byte_identical(self, dataset, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        run(oracle_config(dataset, out1))
        run(oracle_config(dataset, out2))
        names = list(CATALOG_FILES) + ["decisions.json", "classifications.json", "ica_model.json"]
        for name in names:
            assert filecmp.cmp(out1 / name, out2 / name, shallow=False), name
        for fname in os.listdir(out1 / "dashboards"):
            assert filecmp.cmp(
                out1 / "dashboards" / fname, out2 / "dashboards" / fname, shallow=False
            ), fname

    def test_rerun_into_same_directory_is_idempotent(self, dataset, tmp_path):
        out = tmp_path / "re"
        run(oracle_config(dataset, out))
        before = {
            name: (out / name).read_bytes() for name in CATALOG_FILES
        }
        run(oracle_config(dataset, out))
        for name, payload in before.items():
            assert (out / name).read_bytes() == payload
        # the consistency log appends a second identical record
        log_lines = (out / "consistency_log.jsonl").read_text().strip().splitlines()
        assert len(log_lines) == 2
        assert log_lines[0] == log_lines[1]

    def test_missing_api_key_fails_before_any_stage(self, dataset, tmp_path, monkeypatch):
        monkeypatch.delenv("ICVISION_API_KEY", raising=False)
        config = RunConfig(
            input_path=dataset["rec_path"],
            out_dir=str(tmp_path / "http"),
            backend=BackendConfig(kind="http_api", base_url="http://example.invalid"),
        )
        with pytest.raises(ConfigurationError, match="ICVISION_API_KEY"):
            run(config)
        assert not (tmp_path / "http" / "results.csv").exists()

    def test_unreadable_input_is_config_error(self, tmp_path):
        config = RunConfig(input_path=str(tmp_path / "nope.icvrec"), out_dir=str(tmp_path / "o"))
        with pytest.raises(ConfigurationError, match="does not exist"):
            run(config)

    def test_corrupt_input_is_stage_error(self, dataset, tmp_path):
        bad = tmp_path / "bad.icvrec"
        bad.write_bytes(b"garbage that is neither container nor edf")
        config = oracle_config(dataset, tmp_path / "o2")
        config.input_path = str(bad)
        with pytest.raises(StageError, match="ingest"):
            run(config)

    def test_lock_file_blocks_concurrent_run(self, dataset, tmp_path):
        out = tmp_path / "locked"
        out.mkdir()
        (out / ".lock").write_text("held")
        with pytest.raises(StageError, match="lock"):
            run(oracle_config(dataset, out))
        (out / ".lock").unlink()
        run(oracle_config(dataset, out))  # proceeds once released
        assert not (out / ".lock").exists()

    def test_overrides_applied_in_run(self, dataset, tmp_path):
        overrides = tmp_path / "ov.txt"
        overrides.write_text("0, flag, double-check this one\n")
        config = oracle_config(dataset, tmp_path / "ovout")
        config.overrides_path = str(overrides)
        summary = run(config)
        with open(tmp_path / "ovout" / "decisions.json") as f:
            decisions = json.load(f)
        d0 = [d for d in decisions if d["component_index"] == 0][0]
        assert d0["source"] == "override"
        assert summary.flagged >= 1

    def test_failure_during_catalog_quarantines(self, dataset, tmp_path, monkeypatch):
        import ictriage.pipeline as pl

        def boom(*args, **kwargs):
            raise OSError("disk full")

        monkeypatch.setattr(pl, "save_container", boom)
        out = tmp_path / "q"
        with pytest.raises(StageError, match="catalog"):
            run(oracle_config(dataset, out))
        assert (out / "quarantine").exists()
        assert not (out / "results.csv").exists()
        assert not (out / ".lock").exists()


class TestResultsCsv:
    def test_rfc4180_with_embedded_newlines_and_commas(self):
        results = [
            ComponentClassification(
                component_index=0,
                label="muscle",
                confidence=0.9,
                reasoning='Line one,\nline "two" with comma, and newline',
                backend_id="b",
                usd_cost=0.002,
            ),
            ClassificationFailure(1, "kaput", "raw", "b"),
        ]
        decisions = [
            TriageDecision(0, "reject", "artifact >= 0.80"),
            TriageDecision(1, "flag", "unparseable response"),
        ]
        text = results_csv_text(results, decisions)
        rows = list(csv.reader(io.StringIO(text)))
        assert len(rows) == 3
        assert rows[0] == ["component_index", "label", "confidence", "verdict", "reasoning", "usd_cost"]
        assert rows[1][4] == 'Line one,\nline "two" with comma, and newline'
        assert rows[2][3] == "flag"


class TestLoadRecording:
    def test_sniffs_container_and_edf(self, dataset, tmp_path):
        rec = load_recording(dataset["rec_path"])
        assert rec.n_channels == 19
        from ictriage.edf import write_edf

        path = tmp_path / "x.edf"
        write_edf(path, np.zeros((2, 200)), 100.0, ["C3", "C4"])
        rec2 = load_recording(path)
        assert rec2.channel_names == ["C3", "C4"]


class TestCli:
    def test_exit_codes(self, dataset, tmp_path):
        from ictriage.cli import main

        # config error: missing input
        assert main(["run", "--input", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
        # success
        code = main([
            "run", "--input", dataset["rec_path"], "--out", str(tmp_path / "ok"),
            "--backend", "oracle", "--truth", dataset["truth_path"],
            "--ica-method", "fastica", "--n-components", "5",
        ])
        assert code == 0
        # strict with flagged components: force flag via an impossible reject bar
        code = main([
            "run", "--input", dataset["rec_path"], "--out", str(tmp_path / "strict"),
            "--backend", "oracle", "--truth", dataset["truth_path"],
            "--ica-method", "fastica", "--n-components", "5",
            "--reject-threshold", "1.0", "--strict",
        ])
        assert code == 4

    def test_stage_failure_exit_code(self, tmp_path):
        from ictriage.cli import main

        bad = tmp_path / "bad.icvrec"
        bad.write_bytes(b"not a container")
        assert main(["run", "--input", str(bad), "--out", str(tmp_path / "o")]) == 3

    def test_config_file_flags(self, dataset, tmp_path):
        from ictriage.cli import main

        config_file = tmp_path / "cfg.json"
        config_file.write_text(json.dumps({
            "ica-method": "fastica",
            "n-components": 5,
            "backend": "oracle",
            "truth": dataset["truth_path"],
            "seed": 3,
        }))
        out = tmp_path / "cfgout"
        code = main([
            "run", "--config", str(config_file),
            "--input", dataset["rec_path"], "--out", str(out),
        ])
        assert code == 0
        snapshot = json.loads(
            (out / "summary.txt").read_text().split("config:\n", 1)[1].split("\nagreement")[0]
        )
        assert snapshot["seed"] == 3
        assert snapshot["ica_method"] == "fastica"

    def test_explicit_flag_beats_config_file(self, dataset, tmp_path):
        from ictriage.cli import main

        config_file = tmp_path / "cfg.json"
        config_file.write_text(json.dumps({"seed": 3, "ica-method": "fastica",
                                           "n-components": 5,
                                           "backend": "oracle",
                                           "truth": dataset["truth_path"]}))
        out = tmp_path / "beat"
        code = main([
            "run", "--config", str(config_file), "--seed", "9",
            "--input", dataset["rec_path"], "--out", str(out),
        ])
        assert code == 0
        text = (out / "summary.txt").read_text()
        assert '"seed": 9' in text
