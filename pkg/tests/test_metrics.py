import numpy as np
import pytest

from charlid import (
    ConfusionMatrix,
    confusion,
    majority_baseline,
    parse_confusion_csv,
    random_baseline,
    render_confusion,
    report,
)


def metrics_oracle(gold, pred, k):
    """Per-class TP/FP/FN reference computed straight from the pairs."""
    per_class = []
    for c in range(k):
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append((precision, recall, f1, tp + fn))
    accuracy = sum(1 for g, p in zip(gold, pred) if g == p) / len(gold)
    present = [f1 for _, _, f1, support in per_class if support > 0]
    macro = sum(present) / len(present)
    weighted = sum(f1 * support for _, _, f1, support in per_class) / len(gold)
    return per_class, accuracy, macro, weighted


def labels_for(k):
    return tuple(chr(ord("A") + i) for i in range(k))


class TestConfusion:
    def test_perfect_prediction_is_diagonal(self):
        cm = confusion([0, 1], [0, 1], labels_for(2))
        assert cm.counts.tolist() == [[1, 0], [0, 1]]

    def test_total_confusion(self):
        cm = confusion([0, 0], [1, 1], labels_for(2))
        assert cm.counts.tolist() == [[0, 2], [0, 0]]

    def test_trace_over_total_is_accuracy(self):
        rng = np.random.default_rng(0)
        gold = rng.integers(0, 4, size=50)
        pred = rng.integers(0, 4, size=50)
        cm = confusion(gold, pred, labels_for(4))
        assert cm.accuracy == np.mean(gold == pred)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion([0, 1], [0], labels_for(2))

    def test_out_of_range_label(self):
        with pytest.raises(ValueError):
            confusion([0, 2], [0, 0], labels_for(2))


class TestReport:
    def test_worked_example(self):
        # gold A A B B, pred A B B B
        cm = confusion([0, 0, 1, 1], [0, 1, 1, 1], labels_for(2))
        rep = report(cm)
        assert rep.accuracy == 0.75
        assert rep.f1[0] == pytest.approx(2.0 / 3.0)
        assert rep.f1[1] == pytest.approx(0.8)
        assert rep.macro_f1 == pytest.approx(0.7333, abs=1e-4)
        assert rep.weighted_f1 == pytest.approx(0.7333, abs=1e-4)
        assert rep.micro_f1 == 0.75

    def test_perfect_predictions(self):
        cm = confusion([0, 1, 2], [0, 1, 2], labels_for(3))
        rep = report(cm)
        assert rep.accuracy == 1.0
        assert rep.micro_f1 == 1.0
        assert rep.macro_f1 == 1.0
        assert rep.weighted_f1 == 1.0

    def test_one_class_data(self):
        cm = confusion([0, 0], [0, 0], labels_for(2))
        rep = report(cm)
        assert rep.accuracy == 1.0
        assert rep.weighted_f1 == 1.0
        assert rep.macro_f1 == 1.0  # class B absent from gold, excluded
        lenient = report(cm, include_absent_in_macro=True)
        assert lenient.macro_f1 == 0.5  # B scores 0 when averaged in

    def test_zero_denominator_scores_zero(self):
        # class B never predicted and never gold: precision = recall = 0
        cm = ConfusionMatrix(counts=np.array([[3, 0], [0, 0]]), labels=labels_for(2))
        rep = report(cm)
        assert rep.precision[1] == 0.0
        assert rep.recall[1] == 0.0
        assert rep.f1[1] == 0.0

    def test_micro_equals_accuracy_on_random_cases(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            k = int(rng.integers(2, 7))
            n = int(rng.integers(1, 51))
            gold = rng.integers(0, k, size=n)
            pred = rng.integers(0, k, size=n)
            rep = report(confusion(gold, pred, labels_for(k)))
            assert abs(rep.micro_f1 - rep.accuracy) < 1e-12

    def test_macro_bounds_and_uniform_equivalence(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            k = int(rng.integers(2, 6))
            gold = np.repeat(np.arange(k), 8)  # uniform gold, all classes present
            pred = rng.integers(0, k, size=len(gold))
            rep = report(confusion(gold, pred, labels_for(k)))
            assert 0.0 <= rep.macro_f1 <= 1.0
            assert rep.weighted_f1 == pytest.approx(rep.macro_f1, abs=1e-12)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            k = int(rng.integers(2, 7))
            n = int(rng.integers(1, 51))
            gold = rng.integers(0, k, size=n).tolist()
            pred = rng.integers(0, k, size=n).tolist()
            rep = report(confusion(gold, pred, labels_for(k)))
            per_class, accuracy, macro, weighted = metrics_oracle(gold, pred, k)
            assert rep.accuracy == accuracy
            for c, (precision, recall, f1, _) in enumerate(per_class):
                assert rep.precision[c] == pytest.approx(precision, abs=1e-12)
                assert rep.recall[c] == pytest.approx(recall, abs=1e-12)
                assert rep.f1[c] == pytest.approx(f1, abs=1e-12)
            assert rep.macro_f1 == pytest.approx(macro, abs=1e-12)
            assert rep.weighted_f1 == pytest.approx(weighted, abs=1e-12)

    def test_joint_permutation_invariance(self):
        rng = np.random.default_rng(4)
        gold = rng.integers(0, 3, size=40)
        pred = rng.integers(0, 3, size=40)
        base = report(confusion(gold, pred, labels_for(3)))
        order = rng.permutation(40)
        shuffled = report(confusion(gold[order], pred[order], labels_for(3)))
        assert shuffled.accuracy == base.accuracy
        assert shuffled.macro_f1 == base.macro_f1
        assert shuffled.weighted_f1 == base.weighted_f1
        assert np.array_equal(shuffled.confusion.counts, base.confusion.counts)

    def test_empty_matrix_rejected(self):
        cm = ConfusionMatrix(counts=np.zeros((2, 2), dtype=np.int64), labels=labels_for(2))
        with pytest.raises(ValueError):
            report(cm)


class TestBaselines:
    def test_majority_arithmetic(self):
        rep = majority_baseline([0, 0, 0, 1], [0, 0, 1, 1], labels_for(2))
        assert rep.accuracy == 0.5

    def test_majority_tie_takes_lowest_index(self):
        rep = majority_baseline([0, 1], [1, 1], labels_for(2))
        assert rep.accuracy == 0.0  # predicts A everywhere

    def test_random_uniform_accuracy(self):
        gold = np.tile(np.arange(12), 1000)
        rep = random_baseline(12, gold, seed=0)
        assert rep.accuracy == pytest.approx(1.0 / 12.0, abs=0.01)

    def test_random_single_class(self):
        rep = random_baseline(1, [0, 0, 0], seed=0)
        assert rep.accuracy == 1.0

    def test_random_deterministic(self):
        gold = [0, 1, 2, 1, 0, 2]
        a = random_baseline(3, gold, seed=9)
        b = random_baseline(3, gold, seed=9)
        assert np.array_equal(a.confusion.counts, b.confusion.counts)


class TestRenderConfusion:
    def test_normalized_identity(self):
        cm = ConfusionMatrix(counts=np.eye(2, dtype=np.int64) * 3, labels=labels_for(2))
        table, _ = render_confusion(cm, normalize=True)
        assert "1.0000" in table

    def test_normalized_row(self):
        cm = ConfusionMatrix(counts=np.array([[2, 2], [0, 0]]), labels=labels_for(2))
        table, csv_text = render_confusion(cm, normalize=True)
        assert "0.5000" in table
        assert "0.5,0.5" in csv_text.replace('"A",', "").splitlines()[1]

    def test_empty_row_normalizes_to_zeros(self):
        cm = ConfusionMatrix(counts=np.array([[0, 0], [1, 1]]), labels=labels_for(2))
        _, csv_text = render_confusion(cm, normalize=True)
        assert csv_text.splitlines()[1] == '"A",0.0,0.0'

    def test_csv_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            k = int(rng.integers(1, 6))
            counts = rng.integers(0, 30, size=(k, k))
            cm = ConfusionMatrix(counts=counts, labels=labels_for(k))
            _, csv_text = render_confusion(cm)
            back = parse_confusion_csv(csv_text)
            assert np.array_equal(back.counts, cm.counts)
            assert back.labels == cm.labels

    def test_csv_quotes_labels_with_commas(self):
        cm = ConfusionMatrix(counts=np.array([[1]]), labels=("weird, label",))
        _, csv_text = render_confusion(cm)
        back = parse_confusion_csv(csv_text)
        assert back.labels == ("weird, label",)
