import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mvica.metrics import (
    align,
    hungarian,
    r2_score,
    reconstruction_error,
    time_segment_matching,
)
from mvica.model import DimensionError, ValidationError

from oracles import brute_force_assignment, tsm_loop


# hungarian

def test_hungarian_identity_favoring():
    cost = 1.0 - np.eye(5)
    assert np.array_equal(hungarian(cost), np.arange(5))


def test_hungarian_random_5x5_matches_brute_force(rng):
    for _ in range(20):
        cost = rng.random((5, 5))
        perm = hungarian(cost)
        assert np.isclose(cost[np.arange(5), perm].sum(), brute_force_assignment(cost), rtol=0,
                          atol=1e-12)


def test_hungarian_ties_optimal():
    cost = np.ones((4, 4))
    perm = hungarian(cost)
    assert sorted(perm) == [0, 1, 2, 3]
    assert cost[np.arange(4), perm].sum() == 4.0


def test_hungarian_rejects_bad_input():
    with pytest.raises(DimensionError):
        hungarian(np.zeros((2, 3)))
    with pytest.raises(ValidationError):
        hungarian(np.array([[0.0, np.nan], [1.0, 0.0]]))


@settings(max_examples=30, deadline=None)
@given(cost=st.integers(1, 6).flatmap(
    lambda k: arrays(float, (k, k), elements=st.floats(-100, 100))))
def test_hungarian_is_optimal_property(cost):
    k = cost.shape[0]
    perm = hungarian(cost)
    assert sorted(perm) == list(range(k))
    got = cost[np.arange(k), perm].sum()
    assert got <= brute_force_assignment(cost) + 1e-9 * max(1.0, np.abs(cost).sum())


# align

def test_align_identity(rng):
    ref = rng.standard_normal((4, 100))
    al = align(ref, ref)
    assert np.array_equal(al.perm, np.arange(4))
    assert np.all(al.signs == 1.0) and np.allclose(al.scales, 1.0, rtol=1e-15)
    assert np.allclose(al.residuals, 0.0, atol=1e-28)


def test_align_reversed_negated(rng):
    ref = rng.standard_normal((4, 100))
    al = align(-ref[::-1], ref)
    assert np.array_equal(al.perm, np.arange(4)[::-1])
    assert np.all(al.signs == -1.0)
    assert np.allclose(al.residuals, 0.0, atol=1e-28)


def test_align_planted_transform(rng):
    ref = rng.standard_normal((6, 2000))
    P = rng.permutation(6)
    S = rng.choice([-1.0, 1.0], 6) * rng.uniform(0.5, 2.0, 6)
    est = np.empty_like(ref)
    est[P] = S[:, None] * ref
    est += 0.01 * rng.standard_normal(est.shape)
    al = align(est, ref)
    assert np.array_equal(al.perm, P)
    assert np.array_equal(al.signs, np.sign(S))
    assert np.allclose(al.scales, 1 / np.abs(S), rtol=0.02)
    assert np.allclose(al.apply(est), ref, atol=0.1)


# reconstruction_error

def test_reconstruction_exact(rng):
    x = rng.standard_normal((3, 200))
    assert reconstruction_error(x, x) == pytest.approx(0.0, abs=1e-28)
    assert reconstruction_error(-x[[2, 0, 1]], x) == pytest.approx(0.0, abs=1e-28)


def test_reconstruction_analytic_noise(rng):
    n = 10000
    truth = rng.standard_normal((5, n))
    err = reconstruction_error(truth + 0.1 * rng.standard_normal((5, n)), truth)
    # standardized estimate: 2 - 2 corr with corr = 1 / sqrt(1 + 0.01)
    want = 2 - 2 / np.sqrt(1 + 0.1**2)
    assert abs(err - want) < 0.2 * want
    assert abs(err - 0.1**2 / (1 + 0.1**2)) < 0.2 * 0.1**2 / (1 + 0.1**2)


def test_reconstruction_flat_row(rng):
    truth = rng.standard_normal((2, 50))
    est = truth.copy()
    est[1] = 3.0
    assert reconstruction_error(est, truth) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    perm=st.permutations(range(4)),
    signs=st.lists(st.sampled_from([-1.0, 1.0]), min_size=4, max_size=4),
    scales=st.lists(st.floats(0.01, 100.0), min_size=4, max_size=4),
)
def test_reconstruction_invariances(seed, perm, signs, scales):
    r = np.random.default_rng(seed)
    truth = r.standard_normal((4, 60))
    est = truth + 0.3 * r.standard_normal((4, 60))
    base = reconstruction_error(est, truth)
    moved = (np.array(signs) * np.array(scales))[:, None] * est[list(perm)]
    assert reconstruction_error(moved, truth) == pytest.approx(base, rel=1e-9, abs=1e-12)
    assert reconstruction_error(truth, est) == pytest.approx(base, rel=1e-9, abs=1e-12)


# r2

def test_r2_identity():
    y = np.array([1.0, 3.0, -2.0, 0.5])
    assert r2_score(y, y) == 1.0


def test_r2_constant_shift(rng):
    y = rng.standard_normal(500)
    y = (y - y.mean()) / y.std()
    c = 0.37
    assert abs(r2_score(y + c, y) - (1 - c**2)) < 1e-12


def test_r2_mean_predictor(rng):
    y = rng.standard_normal(100)
    assert abs(r2_score(np.full(100, y.mean()), y)) < 1e-12


def test_r2_undefined_for_constant_target():
    with pytest.raises(ValidationError):
        r2_score([1.0, 2.0], [3.0, 3.0])


@settings(max_examples=60, deadline=None)
@given(
    x=arrays(float, 8, elements=st.floats(-1e3, 1e3)),
    y=arrays(float, 8, elements=st.floats(-1e3, 1e3)),
)
def test_r2_at_most_one(x, y):
    if np.var(y) < 1e-6:
        return
    assert r2_score(x, y) <= 1.0


# time segment matching

def test_tsm_identity(rng):
    x = rng.standard_normal((4, 120))
    assert time_segment_matching(x, x) == 1.0


def test_tsm_matches_loop(rng):
    ref = rng.standard_normal((3, 60))
    probe = ref + 1.5 * rng.standard_normal((3, 60))
    for win in (1, 4, 9):
        assert time_segment_matching(ref, probe, win=win, chunk=7) == tsm_loop(ref, probe, win)


def test_tsm_white_noise_near_chance():
    k, n, win = 10, 200, 9
    scores = []
    for seed in range(20):
        r = np.random.default_rng(seed)
        scores.append(time_segment_matching(r.standard_normal((k, n)),
                                            r.standard_normal((k, n)), win))
    T = n - win + 1
    # each position competes with about T - (2 win - 1) non-overlapping windows
    chance = 1 / (T - (2 * win - 1))
    assert np.median(scores) <= 3 * chance


def test_tsm_rejects_bad_window(rng):
    x = rng.standard_normal((2, 5))
    with pytest.raises(ValidationError):
        time_segment_matching(x, x, win=6)
