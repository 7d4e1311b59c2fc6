import numpy as np
import pytest

from ictriage.errors import CapacityError, ParameterError
from ictriage.ica import fit_fastica
from ictriage.recording import Montage
from ictriage.spectral import welch_psd
from ictriage.synth import (
    KIND_TO_LABEL,
    GroundTruth,
    SourceSpec,
    default_corpus_specs,
    generate_dataset,
    load_ground_truth,
    match_components,
    match_sources,
    save_ground_truth,
    spatial_pattern,
)


class TestSourceSpec:
    def test_defaults_filled_per_kind(self):
        spec = SourceSpec("alpha_brain", 20.0)
        assert spec.params["freq"] == 10.0
        assert spec.spatial_target == "Oz"
        assert spec.label == "brain"

    def test_unknown_kind_rejected(self):
        with pytest.raises(ParameterError, match="kind"):
            SourceSpec("gamma_ray", 5.0)

    def test_amplitude_must_be_positive(self):
        with pytest.raises(ParameterError, match="amplitude"):
            SourceSpec("alpha_brain", 0.0)

    def test_label_map_total_over_kinds(self):
        for kind in KIND_TO_LABEL:
            assert SourceSpec(kind, 1.0).label in (
                "brain", "eye", "heart", "muscle", "line_noise", "channel_noise",
            )


class TestGenerateDataset:
    def test_bit_identical_for_same_seed(self):
        specs = [SourceSpec("alpha_brain", 20.0), SourceSpec("blink_eye", 60.0)]
        r1, t1 = generate_dataset(specs, seed=5, duration=20.0)
        r2, t2 = generate_dataset(specs, seed=5, duration=20.0)
        assert np.array_equal(r1.data, r2.data)
        assert np.array_equal(t1.sources, t2.sources)
        assert np.array_equal(t1.mixing, t2.mixing)

    def test_different_seed_differs(self):
        specs = [SourceSpec("alpha_brain", 20.0)]
        r1, _ = generate_dataset(specs, seed=1, duration=20.0)
        r2, _ = generate_dataset(specs, seed=2, duration=20.0)
        assert not np.array_equal(r1.data, r2.data)

    def test_pure_alpha_no_noise_is_scaled_sinusoid(self):
        specs = [SourceSpec("alpha_brain", 20.0)]
        rec, truth = generate_dataset(specs, seed=3, duration=20.0, noise_floor_uv=0.0)
        # every channel is a scaled copy of the 10 Hz source
        src = truth.sources[0]
        for ch in range(rec.n_channels):
            w = truth.mixing[ch, 0]
            assert np.allclose(rec.data[ch], w * src, atol=1e-9)
        est = welch_psd(rec.data[rec.channel_index("O1")], rec.sfreq, seg_len=500)
        assert est.freqs[np.argmax(est.psd)] == pytest.approx(10.0)

    def test_source_variance_matches_amplitude(self):
        specs = [
            SourceSpec("alpha_brain", 20.0),
            SourceSpec("blink_eye", 80.0),
            SourceSpec("emg_muscle", 25.0),
            SourceSpec("ecg_heart", 15.0),
            SourceSpec("line_noise", 10.0),
            SourceSpec("dead_channel_noise", 30.0),
        ]
        _rec, truth = generate_dataset(specs, seed=6, duration=30.0)
        for i, spec in enumerate(specs):
            assert truth.sources[i].std() == pytest.approx(spec.amplitude_uv, rel=0.02)

    def test_ecg_autocorrelation_peaks_at_rr(self):
        specs = [SourceSpec("ecg_heart", 15.0, params={"rr_s": 0.9})]
        _rec, truth = generate_dataset(specs, seed=7, duration=60.0)
        x = truth.sources[0]
        sfreq = 250.0
        n = x.size
        spec = np.fft.rfft(x - x.mean(), 2 * n)
        ac = np.fft.irfft(spec * np.conj(spec), 2 * n)[: n // 2]
        lo, hi = int(0.5 * sfreq), int(1.4 * sfreq)
        peak_lag = lo + int(np.argmax(ac[lo:hi]))
        assert abs(peak_lag - 0.9 * sfreq) <= 1.0

    def test_blink_deflects_one_way(self):
        specs = [SourceSpec("blink_eye", 80.0)]
        _rec, truth = generate_dataset(specs, seed=8, duration=60.0)
        x = truth.sources[0]
        # zero-mean but strongly skewed toward positive deflections
        assert x.max() > 3.0 * abs(x.min())
        skew = np.mean((x - x.mean()) ** 3) / x.std() ** 3
        assert skew > 1.0

    def test_emg_band_power_fraction(self):
        specs = [SourceSpec("emg_muscle", 25.0)]
        _rec, truth = generate_dataset(specs, seed=9, duration=60.0)
        est = welch_psd(truth.sources[0], 250.0, seg_len=500)
        total = est.band_power(1.0, 124.0)
        high = est.band_power(20.0, 124.0)
        assert high / total > 0.7

    def test_capacity_error(self):
        mont = Montage.standard_1020(["C3", "C4", "Cz"])
        specs = [SourceSpec("alpha_brain", 20.0)] * 3
        with pytest.raises(CapacityError, match="capacity"):
            generate_dataset(specs, montage=mont, duration=20.0)

    def test_duration_floor(self):
        with pytest.raises(ParameterError, match="10 s"):
            generate_dataset([SourceSpec("alpha_brain", 20.0)], duration=5.0)

    def test_dead_channel_pattern_is_one_hot(self):
        mont = Montage.standard_1020()
        spec = SourceSpec("dead_channel_noise", 30.0, spatial_target="F8")
        pattern = spatial_pattern(mont, spec)
        assert pattern[mont.index_of("F8")] == 1.0
        assert np.sum(pattern != 0) == 1

    def test_mixing_full_column_rank(self):
        specs = default_corpus_specs(0, 3)
        _rec, truth = generate_dataset(specs, seed=4, duration=20.0)
        assert np.linalg.matrix_rank(truth.mixing) == truth.n_sources


@pytest.fixture(scope="module")
def fitted():
    specs = [
        SourceSpec("alpha_brain", 20.0),
        SourceSpec("blink_eye", 80.0),
        SourceSpec("emg_muscle", 25.0),
        SourceSpec("ecg_heart", 15.0),
    ]
    rec, truth = generate_dataset(specs, seed=10, duration=60.0)
    model = fit_fastica(rec, n_components=4, seed=0)
    return rec, truth, model


class TestMatching:

    def test_well_separated_sources_match_bijectively(self, fitted):
        _rec, truth, model = fitted
        pairs = match_sources(model, truth)
        assert len(pairs) == 4
        assert len({c for c, _, _ in pairs}) == 4
        assert all(corr >= 0.95 for _, _, corr in pairs)

    def test_labels_cover_all_components(self, fitted):
        _rec, truth, model = fitted
        labels = match_components(model, truth)
        assert sorted(labels) == [0, 1, 2, 3]
        assert sorted(labels.values()) == ["brain", "eye", "heart", "muscle"]

    def test_extra_components_become_other_artifact(self, fitted):
        rec, truth, _model = fitted
        model6 = fit_fastica(rec, n_components=6, seed=0)
        labels = match_components(model6, truth)
        assert len(labels) == 6
        assert list(labels.values()).count("other_artifact") == 2

    def test_threshold_rule(self, fitted):
        _rec, truth, model = fitted
        labels = match_components(model, truth, min_correlation=0.999999)
        assert all(l == "other_artifact" for l in labels.values())


class TestGroundTruthSidecar:
    def test_round_trip(self, tmp_path):
        specs = [SourceSpec("alpha_brain", 20.0), SourceSpec("ecg_heart", 15.0)]
        rec, truth = generate_dataset(specs, seed=12, duration=20.0)
        path = tmp_path / "t.json"
        save_ground_truth(truth, path)
        back = load_ground_truth(path, recording=rec)
        assert isinstance(back, GroundTruth)
        assert back.kinds == truth.kinds
        assert back.labels == truth.labels
        assert np.array_equal(back.mixing, truth.mixing)
        # waveforms survive the float32 sidecar within float32 resolution
        assert np.allclose(back.sources, truth.sources, rtol=1e-6, atol=1e-3)
        assert back.specs[0].kind == "alpha_brain"


def test_default_corpus_recipe_is_deterministic():
    a = default_corpus_specs(0, 5)
    b = default_corpus_specs(0, 5)
    assert [s.kind for s in a] == [s.kind for s in b]
    assert [s.amplitude_uv for s in a] == [s.amplitude_uv for s in b]
    assert 4 <= len(a) <= 8
