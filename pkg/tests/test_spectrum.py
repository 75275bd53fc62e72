import math

import numpy as np
import pytest

from sizestruct.equilibrium import RateSet, reproduction_number, solve_equilibrium, trivial_equilibrium
from sizestruct.numerics import DelayGrid, SizeGrid
from sizestruct.spectrum import (
    CharacteristicFunction,
    PositivityError,
    beta_Q_sign,
    char_det,
    char_matrix,
    classify,
    leading_root,
    linear_coefficients,
    pi_star,
    positivity_check,
)

from conftest import analysis

LAMS = np.linspace(-2.0, 50.0, 100)


def small(beta="exp(tau)*(1 + s)*exp(-0.2*Q)", mu="0.5", gamma="1", alpha=0.3, n=401, ntau=101):
    r = RateSet(gamma, mu, beta, "1", alpha, 0.5, 8.0)
    grid, dgrid = SizeGrid(n, 8.0), DelayGrid(ntau, 0.5)
    return r, grid, dgrid


def test_eps_zero_for_p_independent_rates(ex72_stable):
    _, _, _, eq, lc, K = ex72_stable
    assert np.all(lc.eps_star == 0.0)
    assert np.all(lc.gamma_star > 0)
    np.testing.assert_array_equal(lc.nu_star, 0.58)


def test_eps_for_density_dependent_mortality():
    r, grid, dgrid = small(mu="0.5 + P")
    eq = solve_equilibrium(r, grid, dgrid)
    lc = linear_coefficients(r, eq)
    np.testing.assert_allclose(lc.nu_star, 0.5 + eq.P_star, rtol=1e-15)
    np.testing.assert_allclose(lc.eps_star, eq.p_star, rtol=1e-15)


def test_eps_uses_analytic_profile_derivative():
    r, grid, dgrid = small(gamma="1 + 0.05*s*P", mu="0.4")
    eq = solve_equilibrium(r, grid, dgrid)
    lc = linear_coefficients(r, eq)
    s, P, p = grid.nodes, eq.P_star, eq.p_star
    gamma = 1 + 0.05 * s * P
    dp = -p * (0.05 * P + 0.4) / gamma
    expected = p * 0.05 + dp * 0.05 * s
    np.testing.assert_allclose(lc.eps_star, expected, rtol=1e-12, atol=1e-15)


def test_pi_star_examples(ex72_stable):
    _, grid, _, eq, lc, _ = ex72_stable
    np.testing.assert_array_equal(pi_star(lc, 0.0), eq.Pi_star)
    np.testing.assert_allclose(pi_star(lc, 1.0), np.exp(-1.58 * grid.nodes), rtol=1e-12)


def test_pi_star_factorisation_random_lambda():
    r, grid, dgrid = small(gamma="1 + 0.1*sin(s)^2", mu="0.3 + 0.02*s")
    eq = solve_equilibrium(r, grid, dgrid)
    lc = linear_coefficients(r, eq)
    rng = np.random.default_rng(11)
    for lam in rng.uniform(-3, 30, 20):
        direct = pi_star(lc, lam)
        factored = lc.Pi * np.exp(-lam * lc.Gamma)
        np.testing.assert_allclose(direct, factored, rtol=1e-12, atol=0)


def test_a21_constant_and_eps_zero_structure(ex72_stable):
    r, _, _, _, _, K = ex72_stable
    A = K.matrices(LAMS)
    assert np.all(A[:, 1, 0] == 1.0 - r.alpha)
    assert np.all(A[:, 0, 2] == 0.0) and np.all(A[:, 1, 2] == 0.0)
    assert np.all(A[:, 2, 2] == -1.0)


def test_large_lambda_limits():
    r, grid, dgrid = small(mu="0.5 + 0.2*P")
    eq = solve_equilibrium(r, grid, dgrid)
    K = CharacteristicFunction(r, eq, linear_coefficients(r, eq), dgrid)
    cm = K.matrix(200.0)
    assert cm[1, 2] == pytest.approx(1.0, abs=1e-2)
    assert cm[3, 3] == pytest.approx(-1.0, abs=1e-2)
    assert K(200.0) == pytest.approx(1 - r.alpha, abs=1e-2)


def test_trivial_structure_and_reduction():
    cfg_r, grid, dgrid, eq, lc, K = analysis("ex71", "trivial")
    A = K.matrices(LAMS)
    assert np.all(A[:, 0, 0] == 0.0) and np.all(A[:, 2, 0] == 0.0)
    det = K(LAMS)
    reduced = (1 - cfg_r.alpha) * A[:, 0, 1]
    assert np.all(np.abs(det - reduced) <= 1e-10 * (1 + np.abs(det)))
    R0 = reproduction_number(cfg_r, 0.0, np.zeros(grid.n), grid, dgrid)
    assert K(0.0) == pytest.approx((1 - cfg_r.alpha) * (1 - R0), abs=1e-12)
    assert K(0.0) == pytest.approx(0.5 * (1 - 0.9088), abs=1e-4)


@pytest.mark.parametrize("name", ["ex71", "ex71-modified"])
def test_trivial_determinant_strictly_increasing(name):
    *_, K = analysis(name, "trivial")
    values = K(np.linspace(0, 50, 200))
    assert np.all(np.diff(values) > 0)


def test_reduced_form_matches_determinant(ex72_stable):
    r, _, _, _, _, K = ex72_stable
    np.testing.assert_allclose(K.reduced(LAMS), -K(LAMS) / (1 - r.alpha), rtol=1e-12, atol=1e-13)


def test_reduced_requires_eps_zero():
    r, grid, dgrid = small(mu="0.5 + P")
    eq = solve_equilibrium(r, grid, dgrid)
    K = CharacteristicFunction(r, eq, linear_coefficients(r, eq), dgrid)
    with pytest.raises(ValueError):
        K.reduced(0.0)


def test_wrappers_agree_with_class(ex72_stable):
    r, _, dgrid, eq, lc, K = ex72_stable
    assert char_det(r, eq, lc, dgrid, 0.7) == K(0.7)
    assert char_matrix(r, eq, lc, dgrid, 0.7).det == pytest.approx(K(0.7), rel=1e-15)


def test_determinant_is_cofactor_expansion(ex72_stable):
    *_, K = ex72_stable
    cm = K.matrix(1.3)
    assert cm.det == pytest.approx(np.linalg.det(cm.A), rel=1e-12)


def test_scalar_and_vector_evaluation_agree(ex72_stable):
    *_, K = ex72_stable
    lam = np.linspace(-1, 5, 300)  # spans several internal batches
    vec = K(lam)
    assert vec[137] == K(float(lam[137]))


def test_positivity_examples():
    # beta_Q = 0: margin is min over s of int beta dtau = 1 - e^{-1/2} at s = 0
    r, grid, dgrid = small(beta="exp(tau)*(1 + s)")
    rep = positivity_check(r, trivial_equilibrium(r, grid), dgrid)
    assert rep.ok and rep.margin == pytest.approx(1 - math.exp(-0.5), rel=1e-5)
    assert rep.s_at_min == 0.0
    # trivial state: the second group vanishes
    r2, *_ = small()
    assert positivity_check(r2, trivial_equilibrium(r2, grid), dgrid).ok


def test_positivity_fails_at_ex72_stable(ex72_stable):
    # the claimed positivity does not hold at this equilibrium: the second group
    # is dominated by beta_Q * p* near s = 0
    r, grid, dgrid, eq, lc, K = ex72_stable
    rep = positivity_check(r, eq, dgrid)
    assert not rep.ok
    assert rep.margin == pytest.approx(-0.7476, abs=1e-3)
    assert rep.s_at_min == 0.0


def test_leading_root_refuses_without_positivity(ex72_stable):
    r, _, dgrid, eq, lc, K = ex72_stable
    with pytest.raises(PositivityError):
        leading_root(r, eq, lc, dgrid)
    root = leading_root(r, eq, lc, dgrid, enforce_positivity=False, K=K)
    assert root == pytest.approx(-0.4893, abs=1e-3)
    assert abs(K(root)) < 1e-9


def test_leading_root_trivial_states():
    for name, negative in (("ex71", True), ("ex71-modified", False)):
        r, _, dgrid, eq, lc, K = analysis(name, "trivial")
        root = leading_root(r, eq, lc, dgrid, K=K)
        assert root is not None and (root < 0) == negative


def test_leading_root_none_found():
    r, grid, dgrid = small(beta="exp(tau)*(1 + s)")
    eq = trivial_equilibrium(r, grid)
    lc = linear_coefficients(r, eq)
    assert leading_root(r, eq, lc, dgrid, lam_range=(5.0, 10.0), n=20) is None


def test_beta_Q_sign():
    r, grid, dgrid = small()
    eq = solve_equilibrium(r, grid, dgrid)
    assert beta_Q_sign(r, eq, dgrid) == "negative"
    r2, *_ = small(beta="exp(tau)*(1 + s)*(1 + 0.1*Q)")
    assert beta_Q_sign(r2, eq, dgrid) == "nonnegative"
    r3, *_ = small(beta="exp(tau)*(1 + s)*(1 + 0.1*Q*(s - 4))")
    assert beta_Q_sign(r3, eq, dgrid) == "mixed"


def test_classify_trivial_presets():
    for name, verdict, R in (("ex71", "stable", 0.9088), ("ex71-modified", "unstable", 1.6297)):
        r, grid, dgrid, *_ = analysis(name, "trivial")
        v = classify(r, "trivial", dgrid, grid)
        assert (v.target, v.verdict, v.theorem) == ("trivial", verdict, "R00-threshold")
        assert v.details["R00"] == pytest.approx(R, abs=5e-4)


def test_classify_trivial_needs_grid():
    r, grid, dgrid = small()
    with pytest.raises(ValueError):
        classify(r, "trivial", dgrid)


def test_classify_ex72_stable_is_indeterminate(ex72_stable):
    r, _, dgrid, eq, *_ = ex72_stable
    v = classify(r, eq, dgrid)
    assert v.verdict == "indeterminate" and v.theorem is None
    assert "positivity" in v.details["reason"]


def test_classify_ex72_unstable():
    r, grid, dgrid, eq, *_ = analysis("ex72-unstable")
    assert eq.P_star == pytest.approx(3.25098, abs=1e-4)
    v = classify(r, eq, dgrid)
    assert (v.verdict, v.theorem) == ("unstable", "decoupled-betaQ-nonnegative")
    assert v.details["K0"] == pytest.approx(-0.4, abs=1e-6)


def test_classify_decoupled_stable_with_positivity():
    # weak hierarchy keeps the positivity condition satisfied
    r, grid, dgrid = small(alpha=0.0)
    eq = solve_equilibrium(r, grid, dgrid)
    v = classify(r, eq, dgrid)
    assert (v.verdict, v.theorem) == ("stable", "decoupled-betaQ-negative")
    K = CharacteristicFunction(r, eq, linear_coefficients(r, eq), dgrid)
    reduced = K.reduced(np.linspace(0, 50, 200))
    assert reduced[0] < 0 and np.all(np.diff(reduced) <= 0)
    root = leading_root(r, eq, linear_coefficients(r, eq), dgrid, K=K)
    assert root < 0


def test_classify_K0_negative_branch():
    # density-dependent mortality makes eps* nonzero; fertility increasing in Q gives K(0) < 0
    r, grid, dgrid = small(beta="0.6*exp(tau)*(1 + 0.1*s)*max(0, Q)", mu="0.5 + 0.01*P", alpha=0.6)
    eq = solve_equilibrium(r, grid, dgrid)
    v = classify(r, eq, dgrid)
    assert v.details["eps_sup"] > 1e-12
    assert v.details["positivity"]
    assert (v.verdict, v.theorem) == ("unstable", "K0-negative")


def test_classify_no_equilibrium():
    r, grid, dgrid = small(beta="0.1*exp(tau)")
    assert classify(r, None, dgrid).verdict == "indeterminate"


def test_verdict_text():
    r, grid, dgrid, *_ = analysis("ex71", "trivial")
    text = classify(r, "trivial", dgrid, grid).as_text()
    assert text.splitlines()[:3] == ["target: trivial", "verdict: stable", "theorem: R00-threshold"]
