import math

import numpy as np
import pytest

from cdil.core import ConfigurationError, LabelRegistry
from cdil.rch import InitSpec, RCHState
from cdil.rng import Xoshiro256StarStar, substream


def softmax_oracle(logits):
    # independent reference: direct exponentials over shifted logits
    m = max(logits)
    exps = [math.exp(z - m) for z in logits]
    total = sum(exps)
    return [e / total for e in exps]


def random_state(rng, max_dim=4, max_sessions=3, max_classes=5):
    dim = rng.randbelow(max_dim) + 1
    n_classes = rng.randbelow(max_classes - 1) + 2
    n_sessions = rng.randbelow(max_sessions) + 1
    state = RCHState(dim)
    for _ in range(n_sessions):
        size = rng.randbelow(n_classes) + 1
        classes = set()
        while len(classes) < size:
            classes.add(rng.randbelow(n_classes))
        state.add_session(classes)
        state.set_rows(len(state.head_groups),
                       {c: np.array([rng.normal() for _ in range(dim)])
                        for c in classes})
    return state, dim


class TestAddSession:
    def test_first_session(self):
        state = RCHState(4)
        state.add_session({0, 1, 2, 3, 4})
        assert len(state.head_groups) == 1
        assert state.known_classes == {0, 1, 2, 3, 4}
        assert state.group(1).classes == {0, 1, 2, 3, 4}

    def test_overlapping_second_session(self):
        state = RCHState(4)
        state.add_session({0, 1, 2, 3, 4})
        state.add_session({1, 2, 4, 5, 6})  # 3 overlaps, 2 novel
        assert len(state.head_groups) == 2
        assert state.known_classes == {0, 1, 2, 3, 4, 5, 6}
        sessions = state.class_sessions
        for c in (1, 2, 4):
            assert sessions[c] == (1, 2)
        for c in (0, 3):
            assert sessions[c] == (1,)
        for c in (5, 6):
            assert sessions[c] == (2,)

    def test_zero_rows_for_known_classes_leave_argmax_unchanged(self):
        rng = substream(1, "zero-extension")
        state = RCHState(3)
        state.add_session({0, 1, 2})
        state.set_rows(1, {c: rng.normals(3) for c in (0, 1, 2)})
        points = [rng.normals(3) for _ in range(20)]
        before = [state.predict(x) for x in points]
        probs_before = [state.predict_proba(x) for x in points]
        state.add_session({0, 1, 2})  # zero-initialized rows for known classes
        after = [state.predict(x) for x in points]
        probs_after = [state.predict_proba(x) for x in points]
        assert before == after
        for p, q in zip(probs_before, probs_after):
            # same class set, zero rows added: bitwise-equal outputs
            assert np.array_equal(p, q)

    def test_empty_label_set_rejected(self):
        with pytest.raises(ConfigurationError):
            RCHState(3).add_session(set())

    def test_gaussian_init_needs_rng(self):
        state = RCHState(3)
        with pytest.raises(ConfigurationError):
            state.add_session({0}, init=InitSpec("gaussian"))


class TestRemap:
    def test_single_session_rows_verbatim(self):
        state = RCHState(2)
        state.add_session({0, 1})
        rows = {0: np.array([1.0, 2.0]), 1: np.array([-3.0, 0.5])}
        state.set_rows(1, rows)
        matrix = state.remap()
        assert state.class_order == (0, 1)
        assert np.array_equal(matrix[0], rows[0])
        assert np.array_equal(matrix[1], rows[1])

    def test_shared_class_rows_sum(self):
        state = RCHState(2)
        state.add_session({0, 1})
        state.set_rows(1, {0: np.array([1.0, 0.0]), 1: np.array([5.0, 5.0])})
        state.add_session({0})
        state.set_rows(2, {0: np.array([0.0, 2.0])})
        matrix = state.remap()
        assert np.array_equal(matrix[0], np.array([1.0, 2.0]))
        # class present in session 1 only keeps its row unchanged
        assert np.array_equal(matrix[1], np.array([5.0, 5.0]))

    def test_rows_ordered_by_class_index(self):
        state = RCHState(1)
        state.add_session({7, 2, 5})
        state.set_rows(1, {7: np.array([7.0]), 2: np.array([2.0]), 5: np.array([5.0])})
        assert state.class_order == (2, 5, 7)
        assert state.remap()[:, 0].tolist() == [2.0, 5.0, 7.0]

    def test_cache_invalidated_on_write(self):
        state = RCHState(2)
        state.add_session({0})
        first = state.remap().copy()
        state.set_rows(1, {0: np.array([1.0, 1.0])})
        assert not np.array_equal(state.remap(), first)

    def test_remap_linearity_randomized(self):
        rng = Xoshiro256StarStar(2024)
        for _ in range(200):
            state, dim = random_state(rng)
            x = np.array([rng.normal() for _ in range(dim)])
            matrix = state.remap()
            for pos, c in enumerate(state.class_order):
                direct = sum(float(x @ g.row(c)) for g in state.head_groups
                             if c in g.classes)
                remapped = float(x @ matrix[pos])
                assert remapped == pytest.approx(direct, rel=1e-10, abs=1e-12)


class TestPredictProba:
    def test_all_zero_heads_uniform(self):
        state = RCHState(5)
        state.add_session({0, 1, 2})
        probs = state.predict_proba(np.ones(5))
        assert np.allclose(probs, 1.0 / 3)

    def test_two_class_scalar_value(self):
        # logits (3, 0): p0 = e^3 / (e^3 + 1)
        state = RCHState(2)
        state.add_session({0, 1})
        state.set_rows(1, {0: np.array([1.0, 2.0]), 1: np.array([0.0, 0.0])})
        x = np.array([1.0, 1.0])
        probs = state.predict_proba(x)
        oracle = softmax_oracle([3.0, 0.0])
        assert probs[0] == pytest.approx(0.95257, abs=5e-6)
        assert probs[1] == pytest.approx(0.04743, abs=5e-6)
        assert np.allclose(probs, oracle, atol=1e-12)

    def test_sums_to_one(self):
        rng = Xoshiro256StarStar(5)
        for _ in range(50):
            state, dim = random_state(rng)
            probs = state.predict_proba(np.array([rng.normal() for _ in range(dim)]))
            assert abs(float(np.sum(probs)) - 1.0) <= 1e-9
            assert np.all(probs >= 0)

    def test_logit_shift_invariance(self):
        state = RCHState(2)
        state.add_session({0, 1})
        state.set_rows(1, {0: np.array([1.0, 2.0]), 1: np.array([-1.0, 0.5])})
        x = np.array([0.3, -0.7])
        base = state.predict_proba(x)
        # add a vector v with known x^T v to every row: constant logit shift
        v = np.array([2.0, 2.0])
        state.set_rows(1, {0: np.array([1.0, 2.0]) + v, 1: np.array([-1.0, 0.5]) + v})
        shifted = state.predict_proba(x)
        assert np.allclose(base, shifted, atol=1e-12)

    def test_extreme_logits_stay_finite(self):
        state = RCHState(1)
        state.add_session({0, 1})
        state.set_rows(1, {0: np.array([700.0]), 1: np.array([-700.0])})
        probs = state.predict_proba(np.array([1.0]))
        assert np.all(np.isfinite(probs))
        assert probs[0] == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        state = RCHState(3)
        state.add_session({0})
        with pytest.raises(ValueError):
            state.predict_proba(np.ones(4))


class TestPredict:
    def test_argmax_of_logits(self):
        state = RCHState(2)
        state.add_session({0, 1})
        state.set_rows(1, {0: np.array([1.0, 2.0]), 1: np.array([0.0, 0.0])})
        assert state.predict(np.array([1.0, 1.0])) == 0

    def test_tie_breaks_to_lowest_class_index(self):
        state = RCHState(1)
        state.add_session({1, 2, 5})
        state.set_rows(1, {1: np.array([0.0]), 2: np.array([3.0]), 5: np.array([3.0])})
        assert state.predict(np.array([1.0])) == 2

    def test_matches_per_session_summation_oracle(self):
        # brute force: sum x.H_t^c per class across sessions, never remapping
        rng = Xoshiro256StarStar(31337)
        for _ in range(1000):
            state, dim = random_state(rng)
            x = np.array([rng.normal() for _ in range(dim)])
            logits = {c: sum(float(x @ g.row(c)) for g in state.head_groups
                             if c in g.classes)
                      for c in state.known_classes}
            best = max(sorted(logits), key=lambda c: (logits[c], -c))
            assert state.predict(x) == best

    def test_predict_many_agrees_with_predict(self):
        rng = Xoshiro256StarStar(12)
        state, dim = random_state(rng)
        X = np.array([[rng.normal() for _ in range(dim)] for _ in range(16)])
        assert state.predict_many(X).tolist() == [state.predict(x) for x in X]


class TestSerialization:
    def test_csv_round_trip(self, tmp_path):
        rng = substream(9, "serialize")
        registry = LabelRegistry(["calm", "tense", "alert"])
        state = RCHState(3)
        state.add_session({0, 1})
        state.set_rows(1, {0: rng.normals(3), 1: rng.normals(3)})
        state.add_session({1, 2})
        state.set_rows(2, {1: rng.normals(3), 2: rng.normals(3)})
        path = tmp_path / "heads.csv"
        state.to_csv(path, registry)
        loaded = RCHState.from_csv(path, 3, registry)
        assert loaded.known_classes == state.known_classes
        assert np.array_equal(loaded.remap(), state.remap())
