import json
import threading
import time

import numpy as np
import pytest

from ictriage.client import (
    DEFAULT_PROMPT_TEMPLATE,
    LABELS,
    PROMPT_INSTRUCTION,
    BackendConfig,
    BatchRequest,
    ClassificationFailure,
    ComponentClassification,
    HeuristicTransport,
    OracleTransport,
    TranscriptRecorder,
    TranscriptReplayer,
    build_prompt,
    classify_all,
    compute_component_features,
    estimate_cost,
    heuristic_classify,
    heuristic_decision,
    normalize_label,
    oracle_classify,
    parse_batch_response,
    parse_response,
)
from ictriage.errors import (
    ConfigurationError,
    OracleLookupError,
    ParameterError,
    RateLimitedError,
    ResponseParseError,
    ServerError,
    TransportError,
)


class FakeDashboard:
    """Stands in for a rendered dashboard: index plus trivial PNG payload."""

    def __init__(self, index):
        self.component_index = index

    def png_bytes(self):
        return b"PNG" + str(self.component_index).encode()


def dashboards(n):
    return [FakeDashboard(i) for i in range(n)]


def ok_reply(n, label="muscle"):
    return json.dumps(
        [{"label": label, "confidence": 0.9, "reason": "x " * 40} for _ in range(n)]
    )


class CountingTransport:
    """Scripted transport: pops one behavior per call ('ok' or an exception)."""

    def __init__(self, script):
        self.script = list(script)
        self.requests = []

    def send(self, request):
        self.requests.append(request)
        action = self.script.pop(0) if self.script else "ok"
        if action == "ok":
            return ok_reply(len(request.items))
        raise action


class TestPrompt:
    def test_default_contains_instruction_verbatim(self):
        prompt = build_prompt(BackendConfig())
        assert PROMPT_INSTRUCTION in prompt
        assert "You are a neurologist evaluating this EEG ICA component" in prompt

    def test_prompt_lists_all_seven_labels(self):
        prompt = build_prompt(BackendConfig())
        for label in LABELS:
            assert label in prompt

    def test_custom_template_replaces_wholesale(self):
        config = BackendConfig(prompt_template="say cheese")
        assert build_prompt(config) == "say cheese"
        assert DEFAULT_PROMPT_TEMPLATE not in build_prompt(config)


class TestParseResponse:
    def test_direct_object(self):
        label, conf, reason, flags = parse_response(
            '{"label":"muscle","confidence":0.93,"reason":"high frequency bursts"}'
        )
        assert (label, conf) == ("muscle", 0.93)
        assert reason == "high frequency bursts"

    def test_alias_normalization(self):
        assert normalize_label("Channel Noise") == "channel_noise"
        assert normalize_label("line-noise") == "line_noise"
        assert normalize_label("Line_Noise") == "line_noise"
        assert normalize_label("other noise") == "other_artifact"

    def test_unknown_label_is_parse_error(self):
        with pytest.raises(ResponseParseError, match="unknown label"):
            parse_response('{"label":"ghost","confidence":0.5,"reason":"?"}')

    def test_prose_only_reply_is_parse_error(self):
        with pytest.raises(ResponseParseError, match="no structured object"):
            parse_response("I believe this component is ocular in nature.")

    def test_confidence_clamped_with_flag(self):
        label, conf, _reason, flags = parse_response(
            '{"label":"eye","confidence":1.7,"reason":"strong blink"}'
        )
        assert conf == 1.0
        assert "confidence_clamped" in flags

    def test_embedded_object_in_prose(self):
        raw = 'Sure! Here is the answer:\n```json\n{"label": "heart", "confidence": 0.8, "reason": "QRS"}\n```'
        label, conf, _r, _f = parse_response(raw)
        assert (label, conf) == ("heart", 0.8)

    def test_totality_over_fuzzed_inputs(self):
        rng = np.random.default_rng(99)
        alphabet = list('{}[]",:0123456789.eabcdefghij \n\\')
        for _ in range(2000):
            n = int(rng.integers(0, 60))
            blob = "".join(rng.choice(alphabet) for _ in range(n))
            try:
                label, conf, _r, _f = parse_response(blob)
                assert label in LABELS
                assert 0.0 <= conf <= 1.0
            except ResponseParseError:
                pass  # the only acceptable failure mode

    def test_batch_parse_entry_count(self):
        out = parse_batch_response(ok_reply(3), expected=3)
        assert len(out) == 3
        assert all(not isinstance(e, ResponseParseError) for e in out)

    def test_batch_parse_short_reply_pads_errors(self):
        out = parse_batch_response(ok_reply(2), expected=4)
        assert len(out) == 4
        assert isinstance(out[2], ResponseParseError)
        assert isinstance(out[3], ResponseParseError)


class TestClassification:
    def test_dataclass_validation(self):
        with pytest.raises(ParameterError):
            ComponentClassification(0, "ghost", 0.5, "r", "b")
        with pytest.raises(ParameterError):
            ComponentClassification(0, "brain", 1.5, "r", "b")
        with pytest.raises(ParameterError):
            ComponentClassification(0, "brain", 0.5, "", "b")

    def test_reason_length_soft_flagged(self):
        c = ComponentClassification(0, "brain", 0.5, "too short", "b")
        assert "reason_length" in c.flags
        ok = ComponentClassification(0, "brain", 0.5, "w " * 50, "b")
        assert "reason_length" not in ok.flags


class TestBatching:
    def test_25_dashboards_make_3_requests(self):
        transport = CountingTransport([])
        config = BackendConfig(kind="heuristic", batch_size=10)
        results = classify_all(dashboards(25), config, transport=transport)
        assert len(transport.requests) == 3
        sizes = [len(r.items) for r in transport.requests]
        assert sorted(sizes, reverse=True) == [10, 10, 5]
        assert len(results) == 25

    def test_results_in_input_order_under_random_latency(self):
        class LatencyTransport:
            def __init__(self):
                self.rng = np.random.default_rng(3)
                self.lock = threading.Lock()

            def send(self, request):
                with self.lock:
                    delay = float(self.rng.uniform(0.001, 0.02))
                time.sleep(delay)
                return json.dumps(
                    [
                        {"label": "muscle", "confidence": 0.9,
                         "reason": f"component {idx} " + "w " * 35}
                        for idx, _ in request.items
                    ]
                )

        config = BackendConfig(kind="heuristic", batch_size=3, max_in_flight=4)
        results = classify_all(dashboards(30), config, transport=LatencyTransport())
        assert [r.component_index for r in results] == list(range(30))
        for r in results:
            assert f"component {r.component_index} " in r.reasoning

    def test_max_in_flight_is_respected_and_reached(self):
        in_flight = {"now": 0, "max": 0}
        lock = threading.Lock()
        all_four = threading.Event()

        class InstrumentedTransport:
            def send(self, request):
                with lock:
                    in_flight["now"] += 1
                    in_flight["max"] = max(in_flight["max"], in_flight["now"])
                    if in_flight["now"] >= 4:
                        all_four.set()
                # hold until saturation is observed (or time out) so the
                # maximum is actually reached, not raced past
                all_four.wait(timeout=5.0)
                with lock:
                    in_flight["now"] -= 1
                return ok_reply(len(request.items))

        config = BackendConfig(kind="heuristic", batch_size=1, max_in_flight=4)
        results = classify_all(dashboards(12), config, transport=InstrumentedTransport())
        assert len(results) == 12
        assert in_flight["max"] == 4

    def test_empty_input_rejected(self):
        with pytest.raises(ParameterError):
            classify_all([], BackendConfig(kind="heuristic"), transport=CountingTransport([]))


class TestRetry:
    def test_transient_failures_retried_then_succeed(self):
        transport = CountingTransport([RateLimitedError("429"), ServerError("503"), "ok"])
        sleeps = []
        config = BackendConfig(kind="heuristic", backoff_base_s=0.01, max_retries=5)
        results = classify_all(
            dashboards(2), config, transport=transport, sleep_fn=sleeps.append
        )
        assert len(transport.requests) == 3
        assert all(isinstance(r, ComponentClassification) for r in results)
        assert len(sleeps) == 2
        # exponential growth dominates the +-10% jitter: monotone backoff
        assert sleeps[1] > sleeps[0]

    def test_retries_bounded_then_components_flagged(self):
        failures = [RateLimitedError("429")] * 50
        transport = CountingTransport(failures)
        config = BackendConfig(kind="heuristic", backoff_base_s=0.001, max_retries=5)
        sleeps = []
        results = classify_all(
            dashboards(3), config, transport=transport, sleep_fn=sleeps.append
        )
        assert len(transport.requests) == 6  # 1 try + 5 retries
        assert len(sleeps) == 5
        assert all(s2 > s1 for s1, s2 in zip(sleeps, sleeps[1:]))
        assert all(isinstance(r, ClassificationFailure) for r in results)
        assert len(results) == 3

    def test_non_retryable_4xx_fails_immediately(self):
        from ictriage.errors import ClientRequestError

        transport = CountingTransport([ClientRequestError("400"), "ok"])
        config = BackendConfig(kind="heuristic", backoff_base_s=0.001)
        results = classify_all(dashboards(2), config, transport=transport)
        assert len(transport.requests) == 1
        assert all(isinstance(r, ClassificationFailure) for r in results)

    def test_malformed_responses_flag_not_drop(self):
        class GarbageTransport:
            def send(self, request):
                return "!!! total nonsense, no json at all"

        config = BackendConfig(kind="heuristic", batch_size=4)
        results = classify_all(dashboards(10), config, transport=GarbageTransport())
        assert len(results) == 10
        assert all(isinstance(r, ClassificationFailure) for r in results)
        assert [r.component_index for r in results] == list(range(10))

    def test_deterministic_repeat_runs(self):
        config = BackendConfig(kind="heuristic", batch_size=4)
        truth = {i: "eye" for i in range(9)}
        r1 = classify_all(dashboards(9), config, transport=OracleTransport(truth))
        r2 = classify_all(dashboards(9), config, transport=OracleTransport(truth))
        assert [(a.label, a.confidence, a.reasoning) for a in r1] == [
            (b.label, b.confidence, b.reasoning) for b in r2
        ]


class TestOracle:
    def test_blink_and_alpha(self):
        truth = {0: "eye", 1: "brain"}
        c = oracle_classify(FakeDashboard(0), truth)
        assert (c.label, c.confidence) == ("eye", 0.99)
        c = oracle_classify(FakeDashboard(1), truth)
        assert (c.label, c.confidence) == ("brain", 0.99)
        assert 30 <= len(c.reasoning.split()) <= 70

    def test_unknown_index_raises(self):
        with pytest.raises(OracleLookupError, match="no ground-truth"):
            oracle_classify(FakeDashboard(99), {0: "eye"})


@pytest.fixture(scope="module")
def features_by_kind():
    from ictriage.ica import fit_fastica
    from ictriage.synth import SourceSpec, generate_dataset, match_components

    specs = [
        SourceSpec("alpha_brain", 20.0),
        SourceSpec("blink_eye", 80.0),
        SourceSpec("emg_muscle", 25.0),
        SourceSpec("ecg_heart", 15.0),
        SourceSpec("line_noise", 15.0),
        SourceSpec("dead_channel_noise", 30.0),
    ]
    rec, truth = generate_dataset(specs, seed=77, duration=60.0)
    model = fit_fastica(rec, n_components=6, seed=0)
    labels = match_components(model, truth)
    features = compute_component_features(model, rec)
    return {labels[i]: features[i] for i in features}


class TestHeuristicBackend:

    def test_muscle_rule(self, features_by_kind):
        f = features_by_kind["muscle"]
        assert f.hf_fraction > 0.6
        assert heuristic_decision(f)[0] == "muscle"

    def test_channel_noise_rule(self, features_by_kind):
        f = features_by_kind["channel_noise"]
        assert f.dominance > 0.8
        assert heuristic_decision(f)[0] == "channel_noise"

    def test_brain_rule(self, features_by_kind):
        f = features_by_kind["brain"]
        assert f.alpha_peak_prominence > 3.0
        label, confidence, _ = heuristic_decision(f)
        assert label == "brain"
        assert confidence >= 0.7

    def test_eye_heart_line(self, features_by_kind):
        assert heuristic_decision(features_by_kind["eye"])[0] == "eye"
        assert heuristic_decision(features_by_kind["heart"])[0] == "heart"
        assert heuristic_decision(features_by_kind["line_noise"])[0] == "line_noise"

    def test_fallback_low_confidence(self):
        from ictriage.client import ComponentFeatures

        f = ComponentFeatures(
            component_index=0,
            band_powers={"delta": 0.2, "theta": 0.2, "alpha": 0.2, "beta": 0.2, "gamma": 0.2},
            alpha_peak_prominence=1.0,
            hf_fraction=0.3,
            line_fraction=0.1,
            frontal_score=0.2,
            posterior_score=0.2,
            qrs_autocorr=0.1,
            kurtosis=0.0,
            dominance=0.3,
        )
        label, confidence, reason = heuristic_decision(f)
        assert label == "other_artifact"
        assert confidence == 0.3
        c = heuristic_classify(f)
        assert c.label == "other_artifact"

    def test_transport_speaks_wire_format(self, features_by_kind):
        feats = {i: f for i, f in enumerate(features_by_kind.values())}
        transport = HeuristicTransport(feats)
        req = BatchRequest(prompt="p", model_name="m", items=[(0, b""), (1, b"")])
        parsed = parse_batch_response(transport.send(req), expected=2)
        assert all(not isinstance(p, ResponseParseError) for p in parsed)


class TestCost:
    def test_flat_rate_products(self):
        assert estimate_cost(128, 0.002) == pytest.approx(0.256, abs=1e-12)
        assert estimate_cost(0, 0.002) == 0.0
        assert estimate_cost(3168, 0.002) == pytest.approx(6.336, abs=1e-12)

    def test_negative_count_rejected(self):
        with pytest.raises(ParameterError):
            estimate_cost(-1, 0.002)

    def test_costs_attached_per_component(self):
        config = BackendConfig(kind="heuristic", batch_size=10, per_component_usd=0.002)
        truth = {i: "muscle" for i in range(25)}
        results = classify_all(dashboards(25), config, transport=OracleTransport(truth))
        assert all(r.usd_cost == pytest.approx(0.002) for r in results)

    def test_metered_usage_overrides_flat_rate(self):
        class MeteredTransport:
            def send(self, request):
                return json.dumps(
                    {
                        "results": [
                            {"label": "brain", "confidence": 0.9, "reason": "w " * 40}
                            for _ in request.items
                        ],
                        "usage": {"usd": 0.5},
                    }
                )

        config = BackendConfig(kind="heuristic", batch_size=5, per_component_usd=0.002)
        results = classify_all(dashboards(5), config, transport=MeteredTransport())
        assert all(r.usd_cost == pytest.approx(0.1) for r in results)


class TestHttpConfig:
    def test_missing_api_key_is_configuration_error(self, monkeypatch):
        monkeypatch.delenv("ICVISION_API_KEY", raising=False)
        config = BackendConfig(kind="http_api", base_url="http://example.invalid")
        with pytest.raises(ConfigurationError, match="ICVISION_API_KEY"):
            classify_all(dashboards(1), config)

    def test_missing_base_url_is_configuration_error(self, monkeypatch):
        monkeypatch.setenv("ICVISION_API_KEY", "k")
        monkeypatch.delenv("ICVISION_API_BASE", raising=False)
        config = BackendConfig(kind="http_api", base_url="")
        with pytest.raises(ConfigurationError, match="base URL"):
            classify_all(dashboards(1), config)


class TestTranscript:
    def test_record_then_replay(self, tmp_path):
        truth = {i: "heart" for i in range(4)}
        path = tmp_path / "transcript.jsonl"
        config = BackendConfig(kind="heuristic", batch_size=2)
        recorded = classify_all(
            dashboards(4), config, transport=TranscriptRecorder(OracleTransport(truth), path)
        )
        replayed = classify_all(
            dashboards(4), config, transport=TranscriptReplayer(path)
        )
        assert [(r.component_index, r.label) for r in recorded] == [
            (r.component_index, r.label) for r in replayed
        ]

    def test_replayer_misses_unknown_request(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text("")
        replayer = TranscriptReplayer(path)
        with pytest.raises(TransportError, match="no recorded response"):
            replayer.send(BatchRequest(prompt="p", model_name="m", items=[(0, b"")]))
