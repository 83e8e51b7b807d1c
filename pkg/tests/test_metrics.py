import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_dominant, random_spd
from kernelbias.kernels import KernelSpec, cross_gram, gram_matrix, simulate_sine_regression
from kernelbias.metrics import (
    UndefinedTestError,
    bias_measurement,
    delta_star,
    estimation_error,
    generalization_record,
    levelset_min_sample,
    prediction_error,
    quad_levelset_bound,
    training_loss,
    wilcoxon_signed_rank,
)
from kernelbias.optim import closed_form_solution
from kernelbias.rng import Pcg32
from kernelbias.spectral import eig_sym


def enumerate_p(d, alternative="greater"):
    """Brute-force exact p-value over all sign patterns of the nonzero |d| ranks."""
    d = np.asarray([v for v in d if v != 0], dtype=float)
    a = np.abs(d)
    ranks = np.array([np.sum(a < v) + (np.sum(a == v) + 1) / 2 for v in a])
    obs = ranks[d > 0].sum()
    total = ranks.sum()
    hits = 0
    for signs in itertools.product([0, 1], repeat=len(d)):
        w = float(np.dot(signs, ranks))
        hits += (w >= obs - 1e-9) if alternative == "greater" else (w <= obs + 1e-9)
    return hits / 2 ** len(d)


# --- bias measurement ------------------------------------------------------------------

def test_rq_on_eigenvectors():
    K = random_spd(6, 0)
    e = eig_sym(K)
    top = bias_measurement(e, K, e.G[:, 0])
    assert top.rq == pytest.approx(e.gammas[0] ** 2, rel=1e-12)
    assert top.rrq == pytest.approx(1.0, rel=1e-12)
    bot = bias_measurement(e, K, e.G[:, -1])
    assert bot.rq == pytest.approx(e.gammas[-1] ** 2, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_rq_between_extremes(n, seed):
    K = random_spd(n, seed)
    e = eig_sym(K)
    b = Pcg32.from_labels(seed, "b").normal(n)
    m = bias_measurement(e, K, b)
    g1, gn = e.gammas[0], e.gammas[-1]
    assert gn**2 * (1 - 1e-12) <= m.rq <= g1**2 * (1 + 1e-12)
    assert gn**2 / g1**2 * (1 - 1e-12) <= m.rrq <= 1 + 1e-12
    assert m.rq_ratio == pytest.approx(math.sqrt(m.rq))


def test_rq_scale_invariance():
    K = random_spd(5, 1)
    e = eig_sym(K)
    b = np.array([0.3, -1.0, 2.0, 0.5, 0.25])
    base = bias_measurement(e, K, b).rq
    for c in (2.0, 0.5, -4.0, 0.125):
        assert bias_measurement(e, K, c * b).rq == base


def test_rq_zero_vector():
    K = np.eye(2)
    with pytest.raises(ValueError):
        bias_measurement(eig_sym(K), K, np.zeros(2))


def test_gradient_mode():
    K = random_spd(4, 2)
    e = eig_sym(K)
    b = np.array([1.0, 0.0, -1.0, 2.0])
    g = bias_measurement(e, K, b, mode="gradient")
    v = K @ K @ b
    assert g.rq == pytest.approx((K @ v) @ (K @ v) / (v @ v))
    with pytest.raises(ValueError):
        bias_measurement(e, K, b, mode="hessian")


# --- estimation error and the level-set infimum ------------------------------------------

def test_estimation_error_identity():
    b = np.array([1.0, 2.0, -2.0])
    assert estimation_error(np.eye(3), b) == 9.0


def test_estimation_error_top_eigenvector():
    K = random_spd(5, 3)
    e = eig_sym(K)
    assert estimation_error(K, e.G[:, 0]) == pytest.approx(e.gammas[0], rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_estimation_error_eigen_expansion(seed):
    K = random_spd(7, seed)
    e = eig_sym(K)
    b = Pcg32.from_labels(seed, "b").normal(7)
    want = float(np.sum(e.gammas * (e.G.T @ b) ** 2))
    assert estimation_error(K, b) == pytest.approx(want, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_delta_consistency(n, seed):
    K = random_spd(n, seed)
    g1 = eig_sym(K).gammas[0]
    b = Pcg32.from_labels(seed, "b").normal(n)
    Kb = K @ b
    assert estimation_error(K, b) >= (Kb @ Kb) / g1 * (1 - 1e-10)


def test_delta_star_values():
    assert delta_star(1.0, 10, 5.0) == 4.0
    assert delta_star(0.0, 10, 5.0) == 0.0
    with pytest.raises(ValueError):
        delta_star(-1.0, 2, 1.0)


def test_delta_star_two_by_two():
    K = np.diag([2.0, 1.0])
    b = np.array([0.5, 0.0])
    a = (K @ b) @ (K @ b) / 4
    assert a == 0.25
    assert estimation_error(K, b) == 0.5 == delta_star(a, 2, 2.0)


@pytest.mark.parametrize("seed", range(5))
def test_delta_star_attained_on_top_direction(seed):
    K = random_spd(6, seed)
    e = eig_sym(K)
    n, a = 6, 0.37
    g = e.G[:, 0]
    b = g * math.sqrt(2 * n * a) / np.linalg.norm(K @ g)
    assert (K @ b) @ (K @ b) / (2 * n) == pytest.approx(a, rel=1e-12)
    assert estimation_error(K, b) == pytest.approx(delta_star(a, n, e.gammas[0]), rel=1e-10)


def test_generalization_record():
    K = random_dominant(5, 1e-2, 0)
    y = np.arange(1.0, 6.0)
    ahat = closed_form_solution(K, y)
    alpha = np.zeros(5)
    r = generalization_record(K, alpha, ahat, y, pred_mse=0.3)
    e = eig_sym(K)
    assert r.train_loss == pytest.approx(training_loss(K, alpha, y))
    assert r.est_error >= r.delta_star - 1e-10
    assert r.M_bound == pytest.approx(e.gammas[0] / e.gammas[-1] * 0.99)
    assert r.to_dict()["pred_mse"] == 0.3


# --- level-set bound ----------------------------------------------------------------------

def test_levelset_diagonal():
    bound, v = quad_levelset_bound(np.diag([2.0, 1.0]), 4.0)
    assert bound == 1.0
    assert np.array_equal(v, [1.0, 0.0])


def test_levelset_identity_picks_first_axis():
    bound, v = quad_levelset_bound(np.eye(3), 3.0)
    assert bound == 3.0
    assert np.array_equal(v, [1.0, 0.0, 0.0])


def test_levelset_errors():
    with pytest.raises(ValueError):
        quad_levelset_bound(np.zeros((2, 2)), 1.0)
    with pytest.raises(ValueError):
        quad_levelset_bound(np.eye(2), -1.0)


@pytest.mark.parametrize("seed", range(5))
def test_levelset_sampler(seed):
    A = Pcg32.from_labels(seed, "A").normal(25).reshape(5, 5)
    bound, v = quad_levelset_bound(A, 1.0)
    assert levelset_min_sample(A, 1.0, 20_000, seed) >= bound * (1 - 1e-12)
    point = v * math.sqrt(1.0) / np.linalg.norm(A @ v)
    assert (A @ point) @ (A @ point) == pytest.approx(1.0, rel=1e-12)
    assert point @ point == pytest.approx(bound, rel=1e-10)


# --- prediction error ---------------------------------------------------------------------

def test_prediction_interpolates():
    spec = KernelSpec.polynomial(0.01, 2)
    ds = simulate_sine_regression(8, 20, 0.1, seed=1)
    K = gram_matrix(spec, ds)
    ahat = closed_form_solution(K, ds.y)
    assert prediction_error(spec, ds.X, ahat, ds.X, ds.y) <= 1e-18


def test_prediction_zero_alpha():
    spec = KernelSpec.gaussian(1.0)
    tr = simulate_sine_regression(5, 3, 0.1, seed=2)
    te = simulate_sine_regression(4, 3, 0.1, seed=3)
    assert prediction_error(spec, tr.X, np.zeros(5), te.X, te.y) == pytest.approx(np.mean(te.y**2))


def test_prediction_matches_block_formula():
    spec = KernelSpec.rbf(0.5)
    tr = simulate_sine_regression(6, 4, 0.1, seed=4)
    te = simulate_sine_regression(3, 4, 0.1, seed=5)
    alpha = Pcg32(1).normal(6)
    both = np.vstack([tr.X, te.X])
    G = gram_matrix(spec, both)[6:, :6]
    want = np.mean((G @ alpha - te.y) ** 2)
    assert prediction_error(spec, tr.X, alpha, te.X, te.y) == pytest.approx(want, rel=1e-13)


def test_prediction_empty_test():
    with pytest.raises(ValueError):
        prediction_error(KernelSpec.bilinear(), np.eye(2), np.zeros(2), np.zeros((0, 2)), [])


# --- Wilcoxon --------------------------------------------------------------------------------

def test_wilcoxon_three_positive():
    r = wilcoxon_signed_rank([1, 2, 3], [0, 0, 0], "greater")
    assert r.statistic == 6.0 and r.p_value == 0.125 and r.method == "exact"


def test_wilcoxon_single_difference():
    assert wilcoxon_signed_rank([1.0, 5.0, 2.0], [1.0, 4.0, 2.0], "greater").p_value == 0.5


def test_wilcoxon_mirror():
    assert wilcoxon_signed_rank([-1, -2, -3], [0, 0, 0], "greater").p_value == 1.0
    assert wilcoxon_signed_rank([-1, -2, -3], [0, 0, 0], "less").p_value == 0.125


def test_wilcoxon_all_zero():
    with pytest.raises(UndefinedTestError):
        wilcoxon_signed_rank([1, 2], [1, 2])


def test_wilcoxon_argument_errors():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2], [1])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1], [0], "two-sided")


@pytest.mark.parametrize("signs", list(itertools.product([-1, 1], repeat=3)))
@pytest.mark.parametrize("alternative", ["greater", "less"])
def test_wilcoxon_m3_all_patterns(signs, alternative):
    d = np.array(signs) * np.array([1.0, 2.0, 3.0])
    r = wilcoxon_signed_rank(d, np.zeros(3), alternative)
    assert r.p_value == pytest.approx(enumerate_p(d, alternative), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-4, 4), min_size=1, max_size=10), st.sampled_from(["greater", "less"]))
def test_wilcoxon_exact_against_enumeration_with_ties(d, alternative):
    if not any(d):
        return
    r = wilcoxon_signed_rank(np.array(d, float), np.zeros(len(d)), alternative)
    assert r.p_value == pytest.approx(enumerate_p(d, alternative), abs=1e-12)
    assert r.n_used == sum(1 for v in d if v != 0)


def test_wilcoxon_twenty_wins():
    r = wilcoxon_signed_rank(np.arange(1.0, 21.0), np.zeros(20), "greater")
    assert r.p_value == 2.0**-20
    assert r.p_value == pytest.approx(9.54e-7, rel=1e-3)


@pytest.mark.parametrize("m", [1, 3, 4, 5, 6, 7, 8, 9, 10])
def test_wilcoxon_normal_path_close_to_exact(m):
    # at m = 2 the continuity-corrected normal tail is off by 0.064 for one pattern
    worst = 0.0
    for signs in itertools.product([-1, 1], repeat=m):
        d = np.array(signs) * np.arange(1.0, m + 1)
        for alt in ("greater", "less"):
            ex = wilcoxon_signed_rank(d, 0 * d, alt, method="exact").p_value
            no = wilcoxon_signed_rank(d, 0 * d, alt, method="normal").p_value
            worst = max(worst, abs(ex - no))
    assert worst <= 0.05


def test_wilcoxon_large_sample_uses_normal():
    g = Pcg32(3)
    x = g.normal(40) + 0.5
    r = wilcoxon_signed_rank(x, np.zeros(40), "greater")
    assert r.method == "normal" and r.continuity
    assert 0 < r.p_value < 0.05
    assert r.to_dict()["zero_method"] == "drop"


def test_wilcoxon_normal_tie_correction():
    d = np.array([1.0] * 15 + [-1.0] * 10)
    r = wilcoxon_signed_rank(d, np.zeros(25), "greater")
    m = 25
    var = m * (m + 1) * (2 * m + 1) / 24 - (25**3 - 25) / 48
    z = (r.statistic - m * (m + 1) / 4 - 0.5) / math.sqrt(var)
    assert r.statistic == 15 * 13.0
    assert r.p_value == pytest.approx(0.5 * math.erfc(z / math.sqrt(2)), rel=1e-12)
