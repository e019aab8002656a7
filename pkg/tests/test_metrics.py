import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signenc.metrics import (
    ConfusionMatrix,
    SectionResult,
    aggregate,
    confusion,
    format_mean_std,
    macro_metrics,
    normalize_rows,
    write_confusion_csv,
    write_report_csv,
    write_report_json,
)

from oracles import naive_macro_metrics


def cm(counts, classes=None):
    counts = np.asarray(counts)
    classes = classes or tuple(f"c{i}" for i in range(counts.shape[0]))
    return ConfusionMatrix(counts=counts, classes=classes)


def random_confusion(rng, c, allow_empty_rows=True):
    counts = rng.integers(0, 12, size=(c, c))
    if allow_empty_rows and c > 2 and rng.random() < 0.3:
        counts[rng.integers(0, c)] = 0
    if counts.sum() == 0:
        counts[0, 0] = 1
    return cm(counts)


class TestConfusion:
    def test_perfect_predictions_are_diagonal(self):
        m = confusion(["a", "b", "a"], ["a", "b", "a"], ["a", "b"])
        assert m.counts.tolist() == [[2, 0], [0, 1]]

    def test_hand_counted_case(self):
        m = confusion(["a", "a", "b"], ["a", "b", "b"], ["a", "b"])
        assert m.counts.tolist() == [[1, 1], [0, 1]]

    def test_empty_inputs_give_zero_matrix(self):
        m = confusion([], [], ["a", "b"])
        assert m.counts.tolist() == [[0, 0], [0, 0]]

    def test_unknown_label_rejected(self):
        with pytest.raises(ValueError, match="vocabulary"):
            confusion(["a"], ["z"], ["a", "b"])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            confusion(["a"], [], ["a"])

    def test_total_equals_sample_count(self, rng):
        labels = [f"c{i}" for i in range(4)]
        true = rng.choice(labels, size=57).tolist()
        pred = rng.choice(labels, size=57).tolist()
        assert confusion(true, pred, labels).total == 57

    def test_vocabulary_permutation_permutes_counts(self, rng):
        labels = ["a", "b", "c"]
        true = rng.choice(labels, size=40).tolist()
        pred = rng.choice(labels, size=40).tolist()
        m1 = confusion(true, pred, labels)
        m2 = confusion(true, pred, ["c", "a", "b"])
        perm = [labels.index(c) for c in ["c", "a", "b"]]
        assert np.array_equal(m1.counts[np.ix_(perm, perm)], m2.counts)


class TestNormalizeRows:
    def test_hand_case(self):
        normalized, absent = normalize_rows(cm([[1, 1], [0, 1]]))
        assert normalized.tolist() == [[0.5, 0.5], [0.0, 1.0]]
        assert absent.tolist() == [False, False]

    def test_diagonal_matrix(self):
        normalized, _ = normalize_rows(cm([[3, 0], [0, 7]]))
        assert normalized.tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_zero_row_flagged(self):
        normalized, absent = normalize_rows(cm([[2, 0, 0], [0, 0, 0], [1, 0, 1]]))
        assert absent.tolist() == [False, True, False]
        assert normalized[1].tolist() == [0.0, 0.0, 0.0]

    def test_rows_sum_to_one_or_zero(self, rng):
        for _ in range(20):
            normalized, absent = normalize_rows(random_confusion(rng, 6))
            sums = normalized.sum(axis=1)
            assert np.allclose(sums[~absent], 1.0, atol=1e-12)
            assert np.all(sums[absent] == 0.0)


class TestMacroMetrics:
    def test_perfect_balanced(self):
        m = cm(np.eye(3, dtype=int) * 5)
        assert macro_metrics(m) == (1.0, 1.0, 1.0, 1.0)

    def test_hand_computed_case(self):
        got = macro_metrics(cm([[1, 1], [0, 1]]))
        assert got.accuracy == pytest.approx(2 / 3)
        assert got.macro_precision == pytest.approx(0.75)
        assert got.macro_recall == pytest.approx(0.75)
        assert got.macro_f1 == pytest.approx(2 / 3)

    def test_absent_class_excluded(self):
        # class c2 has no true samples and no predictions
        got = macro_metrics(cm([[2, 0, 0], [1, 1, 0], [0, 0, 0]]))
        expected = naive_macro_metrics([[2, 0, 0], [1, 1, 0], [0, 0, 0]])
        assert got == pytest.approx(expected)
        # macro averages over the two present classes only
        assert got.macro_recall == pytest.approx((1.0 + 0.5) / 2)

    def test_zero_denominator_precision_is_zero(self):
        # class c1 present in truth but never predicted
        got = macro_metrics(cm([[2, 0], [2, 0]]))
        assert got.macro_precision == pytest.approx((2 / 4 + 0.0) / 2)
        assert got.macro_recall == pytest.approx(0.5)

    def test_empty_matrix_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            macro_metrics(cm([[0, 0], [0, 0]]))

    def test_matches_bruteforce_oracle(self, rng):
        for _ in range(100):
            c = int(rng.integers(2, 12))
            m = random_confusion(rng, c)
            got = macro_metrics(m)
            expected = naive_macro_metrics(m.counts)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_accuracy_equals_micro_recall(self, rng):
        for _ in range(20):
            m = random_confusion(rng, 5, allow_empty_rows=False)
            got = macro_metrics(m)
            micro_recall = np.diag(m.counts).sum() / m.counts.sum()
            assert got.accuracy == pytest.approx(micro_recall)

    def test_symmetric_matrix_precision_equals_recall(self):
        counts = np.array([[5, 2, 1], [2, 6, 0], [1, 0, 4]])
        got = macro_metrics(cm(counts))
        assert got.macro_precision == pytest.approx(got.macro_recall)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31), st.integers(min_value=2, max_value=56))
    def test_oracle_property(self, seed, c):
        m = random_confusion(np.random.default_rng(seed), c)
        assert macro_metrics(m) == pytest.approx(naive_macro_metrics(m.counts), abs=1e-12)


def section(i, acc):
    return SectionResult(
        section_id=i, accuracy=acc, macro_precision=acc, macro_recall=acc, macro_f1=acc
    )


class TestAggregate:
    def test_single_section_std_zero(self):
        report = aggregate([section(0, 0.8)])
        assert report.aggregate["accuracy"] == {"mean": 0.8, "std": 0.0}

    def test_population_std(self):
        report = aggregate([section(0, 0.8), section(1, 1.0)])
        assert report.aggregate["accuracy"]["mean"] == pytest.approx(0.9)
        assert report.aggregate["accuracy"]["std"] == pytest.approx(0.1)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_order_independent(self):
        sections = [section(i, v) for i, v in enumerate([0.7, 0.9, 0.5])]
        a = aggregate(sections).aggregate
        b = aggregate(sections[::-1]).aggregate
        assert a == b

    def test_presentation_format(self):
        assert format_mean_std(0.93121, 0.04999) == "0.93 ± 0.05"
        report = aggregate([section(0, 0.8), section(1, 1.0)])
        assert format_mean_std(
            report.aggregate["accuracy"]["mean"], report.aggregate["accuracy"]["std"]
        ) == "0.90 ± 0.10"


class TestReportFiles:
    def test_json_and_csv_written(self, tmp_path):
        report = aggregate([section(0, 0.75), section(1, 1.0)], config={"seed": 3})
        write_report_json(report, tmp_path / "report.json")
        write_report_csv(report, tmp_path / "report.csv")
        doc = json.loads((tmp_path / "report.json").read_text())
        assert doc["format"] == "report-v1"
        assert doc["config"] == {"seed": 3}
        assert len(doc["sections"]) == 2
        lines = (tmp_path / "report.csv").read_text().strip().splitlines()
        assert lines[0].startswith("section_id,")
        assert lines[-1].startswith("aggregate,,,")
        assert "0.88 ± 0.12" in lines[-1]

    def test_confusion_csv(self, tmp_path):
        write_confusion_csv(cm([[1, 2], [3, 4]], classes=("x", "y")), tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().strip().splitlines()
        assert lines == ["true\\pred,x,y", "x,1,2", "y,3,4"]

    def test_heatmap_png(self, tmp_path):
        pytest.importorskip("matplotlib")
        from signenc.metrics import save_confusion_heatmap

        save_confusion_heatmap(cm([[5, 1], [0, 6]], classes=("x", "y")), tmp_path / "m.png")
        assert (tmp_path / "m.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
