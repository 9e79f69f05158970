import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safenet.metrics import PairedAccuracy, accuracy, difference_accuracy, transfer_score


def _pairs(values):
    return [PairedAccuracy(per_class_n=i, a_pt=a, a_st=b) for i, (a, b) in enumerate(values)]


def brute_force_score(values):
    """Independent reimplementation straight from the definitions."""
    wins = sum(1 for a, b in values if a > b)
    gaps = [a - b for a, b in values]
    rel = [(a - b) / b for a, b in values]
    s = len(values)
    return wins / s, sum(gaps) / s, 100.0 * sum(rel) / s


def test_accuracy_basic():
    assert accuracy(np.array([1, 0, 1]), np.array([1, 0, 1])) == 100.0
    assert accuracy(np.array([1, 0]), np.array([0, 1])) == 0.0
    assert accuracy(np.array([1, 1, 0, 0]), np.array([1, 1, 0, 1])) == 75.0


def test_accuracy_errors():
    with pytest.raises(ValueError):
        accuracy(np.array([1]), np.array([1, 0]))
    with pytest.raises(ValueError):
        accuracy(np.array([]), np.array([]))


def test_difference_accuracy():
    assert difference_accuracy(80.0, 70.0) == 10.0
    assert difference_accuracy(64.5, 64.5) == 0.0
    assert difference_accuracy(70.0, 80.0) == -10.0


def test_transfer_score_unanimous():
    score = transfer_score(_pairs([(80, 70), (90, 50), (60.1, 60)]))
    assert score.ep == 1.0


def test_transfer_score_hand_example():
    score = transfer_score(_pairs([(80, 70), (60, 65)]))
    assert score.ep == 0.5
    assert score.me == pytest.approx(2.5, abs=1e-12)
    assert score.nme == pytest.approx(50 * (10 / 70 - 5 / 65), abs=1e-9)


def test_transfer_score_all_ties():
    score = transfer_score(_pairs([(70, 70), (55, 55)]))
    assert score.ep == 0.0  # ties are not wins
    assert score.me == 0.0
    assert score.nme == 0.0


def test_transfer_score_singleton_reduces_to_da():
    score = transfer_score(_pairs([(82.0, 74.0)]))
    assert score.ep == 1.0
    assert score.me == difference_accuracy(82.0, 74.0)
    assert score.nme == pytest.approx(100 * 8 / 74, abs=1e-12)


def test_transfer_score_errors():
    with pytest.raises(ValueError):
        transfer_score([])
    with pytest.raises(ValueError):
        transfer_score(_pairs([(50, 0)]))


def test_transfer_score_matches_brute_force_random():
    rng = np.random.default_rng(77)
    for _ in range(300):
        values = [
            (float(rng.uniform(1, 100)), float(rng.uniform(1, 100)))
            for _ in range(rng.integers(1, 25))
        ]
        score = transfer_score(_pairs(values))
        ep, me, nme = brute_force_score(values)
        assert abs(score.ep - ep) < 1e-12
        assert abs(score.me - me) < 1e-12
        assert abs(score.nme - nme) < 1e-9
        assert 0.0 <= score.ep <= 1.0


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(0.0, 100.0, allow_nan=False),
            st.floats(1.0, 100.0, allow_nan=False),
        ),
        min_size=1,
        max_size=30,
    ),
    st.randoms(),
)
def test_transfer_score_permutation_invariant(values, pyrandom):
    base = transfer_score(_pairs(values))
    shuffled = list(values)
    pyrandom.shuffle(shuffled)
    other = transfer_score(_pairs(shuffled))
    assert other.ep == base.ep
    assert other.me == pytest.approx(base.me, abs=1e-9)
    assert other.nme == pytest.approx(base.nme, abs=1e-9)
    assert 0.0 <= base.ep <= 1.0
    assert (base.ep == 1.0) == all(a > b for a, b in values)


def test_me_linear_in_gaps():
    base_values = [(80.0, 70.0), (60.0, 65.0), (90.0, 50.0)]
    base = transfer_score(_pairs(base_values))
    scaled = [(b + 3 * (a - b), b) for a, b in base_values]
    score = transfer_score(_pairs(scaled))
    assert score.me == pytest.approx(3 * base.me, abs=1e-12)
