import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ictriage.errors import AlignmentError
from ictriage.metrics import (
    DEFAULT_MERGE_MAP,
    LabelSet,
    cohens_kappa,
    confusion_and_distribution,
    evaluate,
    exact_agreement,
    render_report,
    stratify_three_way,
)


def ls(rater, labels):
    return LabelSet(rater_id=rater, labels={str(i): l for i, l in enumerate(labels)})


def kappa_brute_force(a, b):
    """Independent oracle: build the full contingency table and evaluate the
    observed and chance-expected agreement directly from it."""
    keys = sorted(a.labels)
    labels = sorted({*a.labels.values(), *b.labels.values()})
    table = np.zeros((len(labels), len(labels)))
    for k in keys:
        table[labels.index(a.labels[k]), labels.index(b.labels[k])] += 1
    n = table.sum()
    p_o = np.trace(table) / n
    p_e = float(np.sum(table.sum(axis=1) * table.sum(axis=0)) / n**2)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1 - p_e)


class TestKappa:
    def test_identical_sets_score_one(self):
        a = ls("a", ["x", "x", "y", "y"])
        assert cohens_kappa(a, ls("b", ["x", "x", "y", "y"])) == 1.0

    def test_worked_example_zero(self):
        # p_o = 0.5, p_e = 0.5 by hand
        a = ls("a", ["x", "x", "y", "y"])
        b = ls("b", ["x", "y", "x", "y"])
        assert cohens_kappa(a, b) == pytest.approx(0.0, abs=1e-15)

    def test_worked_example_half(self):
        # p_o = 0.75, p_e = 0.5 by hand
        a = ls("a", ["x", "x", "x", "y"])
        b = ls("b", ["x", "x", "y", "y"])
        assert cohens_kappa(a, b) == pytest.approx(0.5, abs=1e-15)

    def test_degenerate_constant_raters(self):
        assert cohens_kappa(ls("a", ["x", "x"]), ls("b", ["x", "x"])) == 1.0
        assert cohens_kappa(ls("a", ["x", "x"]), ls("b", ["y", "y"])) == 0.0

    def test_symmetry_bit_for_bit(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n = int(rng.integers(2, 30))
            a = ls("a", rng.choice(["p", "q", "r"], n))
            b = ls("b", rng.choice(["p", "q", "r"], n))
            assert cohens_kappa(a, b) == cohens_kappa(b, a)

    def test_matches_brute_force_on_random_sets(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n = int(rng.integers(2, 7))
            labels = ["u", "v", "w"][: int(rng.integers(1, 4))]
            a = ls("a", rng.choice(labels, n))
            b = ls("b", rng.choice(labels, n))
            assert cohens_kappa(a, b) == pytest.approx(kappa_brute_force(a, b), abs=1e-12)

    @given(
        st.lists(
            st.tuples(st.sampled_from("abc"), st.sampled_from("abc")),
            min_size=1,
            max_size=50,
        )
    )
    @settings(max_examples=300)
    def test_kappa_range(self, pairs):
        a = ls("a", [p[0] for p in pairs])
        b = ls("b", [p[1] for p in pairs])
        k = cohens_kappa(a, b)
        assert -1.0 - 1e-12 <= k <= 1.0 + 1e-12

    def test_key_mismatch_names_disjoint_keys(self):
        a = LabelSet("a", {"c1": "x", "c2": "y"})
        b = LabelSet("b", {"c1": "x", "c3": "y"})
        with pytest.raises(AlignmentError) as err:
            cohens_kappa(a, b)
        assert "c2" in str(err.value)
        assert "c3" in str(err.value)


class TestExactAgreement:
    def test_identical(self):
        a = ls("a", ["x", "y", "z"])
        assert exact_agreement(a, ls("b", ["x", "y", "z"])) == 1.0

    def test_disjoint(self):
        assert exact_agreement(ls("a", ["x", "x"]), ls("b", ["y", "y"])) == 0.0

    def test_59_of_100(self):
        a = ls("a", ["p"] * 100)
        b = ls("b", ["p"] * 59 + ["q"] * 41)
        assert exact_agreement(a, b) == pytest.approx(0.59)


class TestStratify:
    def test_all_unanimous(self):
        a = ls("vl", ["x", "y"])
        b = ls("bl", ["x", "y"])
        c = ls("h", ["x", "y"])
        assert stratify_three_way(a, b, c) == {
            "unanimous": 1.0,
            "mixed": 0.0,
            "automated_vs_human": 0.0,
        }

    def test_automated_agree_human_differs(self):
        a = ls("vl", ["x", "x"])
        b = ls("bl", ["x", "x"])
        c = ls("h", ["y", "y"])
        strata = stratify_three_way(a, b, c)
        assert strata["automated_vs_human"] == 1.0

    def test_constructed_37_component_mixture(self):
        # hand-built: 20 unanimous, 7 automated-vs-human, 10 mixed
        vl, bl, h = [], [], []
        for _ in range(20):
            vl.append("a"); bl.append("a"); h.append("a")
        for _ in range(7):
            vl.append("b"); bl.append("b"); h.append("c")
        for _ in range(4):          # vl == human != baseline -> mixed
            vl.append("d"); bl.append("e"); h.append("d")
        for _ in range(3):          # baseline == human != vl -> mixed
            vl.append("f"); bl.append("g"); h.append("g")
        for _ in range(3):          # total disagreement -> mixed
            vl.append("p"); bl.append("q"); h.append("r")
        strata = stratify_three_way(ls("vl", vl), ls("bl", bl), ls("h", h))
        assert strata["unanimous"] == pytest.approx(20 / 37)
        assert strata["automated_vs_human"] == pytest.approx(7 / 37)
        assert strata["mixed"] == pytest.approx(10 / 37)
        assert sum(strata.values()) == pytest.approx(1.0, abs=1e-9)


class TestConfusionAndDistribution:
    def test_perfect_prediction_is_diagonal(self):
        truth = ls("truth", ["brain", "eye", "muscle", "brain"])
        pred = ls("pred", ["brain", "eye", "muscle", "brain"])
        matrix, taxonomy, _ = confusion_and_distribution(pred, truth)
        assert np.trace(matrix) == 4
        assert matrix.sum() - np.trace(matrix) == 0

    def test_row_sums_match_truth_counts(self):
        truth = ls("truth", ["brain", "brain", "eye", "muscle"])
        pred = ls("pred", ["brain", "eye", "eye", "brain"])
        matrix, taxonomy, _ = confusion_and_distribution(pred, truth)
        row = {taxonomy[i]: matrix[i].sum() for i in range(len(taxonomy))}
        assert row["brain"] == 2 and row["eye"] == 1 and row["muscle"] == 1

    def test_distribution_fractions(self):
        truth = ls("truth", ["brain", "brain", "muscle", "muscle"])
        pred = ls("pred", ["brain", "brain", "muscle", "muscle"])
        _, _, dists = confusion_and_distribution(pred, truth)
        assert dists["truth"]["brain"] == pytest.approx(0.5)
        assert dists["truth"]["muscle"] == pytest.approx(0.5)

    def test_merge_map_commutes_with_distribution(self):
        labels = ["line_noise", "other_artifact", "brain", "line_noise"]
        raw = ls("r", labels)
        merged_first = raw.merged(DEFAULT_MERGE_MAP)
        _, _, dists_merged = confusion_and_distribution(merged_first, merged_first)
        # merging then computing equals computing then aggregating
        _, _, dists_raw = confusion_and_distribution(raw, raw)
        aggregated = {}
        for label, frac in dists_raw["r"].items():
            target = DEFAULT_MERGE_MAP.get(label, label)
            aggregated[target] = aggregated.get(target, 0.0) + frac
        assert dists_merged["r"] == pytest.approx(aggregated)

    def test_renders_published_style_distribution(self):
        # a 999-component multiset whose rounded percentages land on
        # 35.5 / 30.6 / 16.9 / 16.1 / 0.8
        counts = {"muscle": 355, "brain": 306, "eye": 169, "channel_noise": 161, "heart": 8}
        labels = list(
            itertools.chain.from_iterable([k] * v for k, v in counts.items())
        )
        truth = ls("truth", labels)
        report = evaluate({"pred": truth, "truth": truth}, truth_key="truth")
        text = render_report(report)
        for token in ("muscle (35.5%)", "brain (30.6%)", "eye (16.9%)",
                      "channel_noise (16.1%)", "heart (0.8%)"):
            assert token in text

    def test_report_text_structure(self):
        truth = ls("truth", ["brain", "eye", "brain"])
        pred = ls("pred", ["brain", "brain", "brain"])
        report = evaluate({"pred": pred, "truth": truth}, truth_key="truth")
        text = render_report(report)
        assert "kappa[pred vs truth]" in text
        assert "confusion" in text
        assert report.confusion.sum() == 3


class TestLabelSetIO:
    def test_file_round_trip(self, tmp_path):
        a = LabelSet("a", {"c0": "brain", "c1": "eye"})
        path = tmp_path / "labels.csv"
        a.to_file(path)
        back = LabelSet.from_file(path, rater_id="a")
        assert back.labels == a.labels

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("justonefield\n")
        with pytest.raises(AlignmentError, match="expected"):
            LabelSet.from_file(path)

    def test_empty_set_rejected(self):
        with pytest.raises(AlignmentError, match="empty"):
            LabelSet("a", {})
