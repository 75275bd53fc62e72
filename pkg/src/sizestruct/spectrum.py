"""Linearised coefficients, characteristic matrix/determinant and stability verdicts.

All integrals along the size axis are trapezoid prefix sums on the equilibrium
grid; delay integrals use the delay grid. The fertility grids
``beta(s, tau, Q*(s))`` and ``beta_Q(s, tau, Q*(s))`` do not depend on the
spectral parameter, so they are tabulated once per equilibrium and every
``lambda`` only costs a matrix-vector product plus O(n_s) prefix work.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels, ratedsl
from .equilibrium import (
    EquilibriumSolution,
    RateSet,
    reproduction_number,
    survivorship_profile,
)
from .numerics import (
    DelayGrid,
    NumericsError,
    SizeGrid,
    bracket_scan,
    cumulative_trapezoid,
    find_root_bracketed,
    trapezoid,
)

logger = logging.getLogger(__name__)

EPS_ZERO_TOL = 1e-12
POSITIVITY_TOL = -1e-12
DEFAULT_LAMBDA_RANGE = (-5.0, 50.0)
DEFAULT_LAMBDA_SAMPLES = 2000
_BATCH = 128


class PositivityError(NumericsError):
    """A real-axis root search was refused because the positivity condition fails."""


@dataclass(frozen=True)
class LinearCoefficients:
    grid: SizeGrid
    gamma_star: np.ndarray
    nu_star: np.ndarray
    eps_star: np.ndarray
    # survivorship exponent int_0^s nu*/gamma* and Gamma(s) = int_0^s 1/gamma*
    log_survival: np.ndarray = field(repr=False)
    Gamma: np.ndarray = field(repr=False)

    @property
    def Pi(self) -> np.ndarray:
        return np.exp(-self.log_survival)


def linear_coefficients(r: RateSet, eq: EquilibriumSolution) -> LinearCoefficients:
    """Coefficients ``gamma*``, ``nu*``, ``eps*`` of the linearisation at ``eq``.

    ``p*'`` is taken from the steady-state ODE, ``p*' = -p* (mu + gamma_s) / gamma``.
    """
    grid = eq.grid
    s = grid.nodes
    P = eq.P_star
    env = {"s": s, "P": P}
    gamma = r.growth(s, P)
    gamma_s = ratedsl.evaluate_on(r.gamma_s, s.shape, env)
    mu = r.mortality(s, P)
    nu = gamma_s + mu
    p = eq.p_star
    dp = -p * nu / gamma
    mu_P = ratedsl.evaluate_on(r.mu_P, s.shape, env)
    gamma_sP = ratedsl.evaluate_on(r.gamma_sP, s.shape, env)
    gamma_P = ratedsl.evaluate_on(r.gamma_P, s.shape, env)
    eps = p * (mu_P + gamma_sP) + dp * gamma_P
    return LinearCoefficients(
        grid,
        gamma,
        nu,
        eps,
        cumulative_trapezoid(nu / gamma, grid.h),
        cumulative_trapezoid(1.0 / gamma, grid.h),
    )


def pi_star(lc: LinearCoefficients, lam: float) -> np.ndarray:
    """``pi*(lambda, s) = exp(-int_0^s (lambda + nu*) / gamma* da)``.

    The trapezoid rule is linear, so the integral is assembled from the cached
    prefixes of ``nu*/gamma*`` and ``1/gamma*``; this keeps the rounding
    independent of ``lambda`` and identical to the characteristic matrix.
    """
    return np.exp(-(lc.log_survival + lam * lc.Gamma))


@dataclass(frozen=True)
class CharMatrix:
    lam: float
    A: np.ndarray

    def __getitem__(self, ij):
        i, j = ij
        return self.A[i - 1, j - 1]

    @property
    def det(self) -> float:
        return float(_det3(self.A[None])[0])


def _det3(A: np.ndarray) -> np.ndarray:
    """Cofactor expansion along the first row for a stack of 3x3 matrices."""
    return (
        A[:, 0, 0] * (A[:, 1, 1] * A[:, 2, 2] - A[:, 1, 2] * A[:, 2, 1])
        - A[:, 0, 1] * (A[:, 1, 0] * A[:, 2, 2] - A[:, 1, 2] * A[:, 2, 0])
        + A[:, 0, 2] * (A[:, 1, 0] * A[:, 2, 1] - A[:, 1, 1] * A[:, 2, 0])
    )


class CharacteristicFunction:
    """``A(lambda)`` and ``K(lambda)`` for one equilibrium, vectorised over ``lambda``."""

    def __init__(self, r: RateSet, eq: EquilibriumSolution, lc: LinearCoefficients, dgrid: DelayGrid):
        if not 0.0 <= r.alpha < 1.0:
            raise ValueError("the characteristic equation requires alpha in [0, 1)")
        self.rates = r
        self.eq = eq
        self.lc = lc
        self.dgrid = dgrid
        grid = eq.grid
        s = grid.nodes
        self.h = grid.h
        self.w = r.weight(s)
        self.w0 = float(self.w[0])
        self.beta = r.fertility_grid(s, dgrid.nodes, eq.Q_star)
        self.beta_Q = r.fertility_grid(s, dgrid.nodes, eq.Q_star, r.beta_Q)
        # trapezoid weights on the delay axis
        wt = np.full(dgrid.n, dgrid.h)
        wt[0] = wt[-1] = dgrid.h * 0.5
        self.tau_weights = wt
        self.eps_zero = not np.any(lc.eps_star)
        self.g = lc.eps_star / lc.gamma_star
        self.p_star = eq.p_star

    def _delay_moments(self, lam: np.ndarray):
        E = np.exp(np.outer(lam, self.dgrid.nodes)) * self.tau_weights
        return E @ self.beta.T, E @ self.beta_Q.T

    def matrices(self, lam: Sequence[float] | np.ndarray) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
        out = np.empty((lam.size, 3, 3))
        for start in range(0, lam.size, _BATCH):
            sl = slice(start, start + _BATCH)
            out[sl] = self._assemble(lam[sl])
        return out

    def _assemble(self, lam: np.ndarray) -> np.ndarray:
        h = self.h
        a = self.rates.alpha
        c = 1.0 - a
        w0 = self.w0
        lc = self.lc
        n_l = lam.size

        expo = lc.log_survival[None, :] + lam[:, None] * lc.Gamma[None, :]
        pi = np.exp(-expo)
        B, BQ = self._delay_moments(lam)
        BQp = BQ * self.p_star[None, :]

        T1 = trapezoid(B * pi, h)
        Sq = trapezoid(BQp, h)
        Wpi = cumulative_trapezoid(self.w[None, :] * pi, h)
        SW = trapezoid(BQp * Wpi, h)
        int_wpi = Wpi[:, -1]
        int_pi = trapezoid(pi, h)

        if self.eps_zero:
            zero = np.zeros(n_l)
            BF = SG = wF = intF = zero
        else:
            decay = np.zeros_like(expo)
            decay[:, 1:] = np.diff(expo, axis=1)
            F = kernels.damped_prefix(decay, self.g, h)
            G = cumulative_trapezoid(self.w[None, :] * F, h)
            BF = trapezoid(B * F, h)
            SG = trapezoid(BQp * G, h)
            wF = trapezoid(self.w[None, :] * F, h)
            intF = trapezoid(F, h)

        A = np.empty((n_l, 3, 3))
        A[:, 0, 0] = c * w0 * Sq
        A[:, 0, 1] = 1.0 - T1 + c * SW
        A[:, 0, 2] = w0 * (a - 1.0) * BF + w0 * c * c * SG
        A[:, 1, 0] = c
        A[:, 1, 1] = int_wpi / w0
        A[:, 1, 2] = c * wF
        A[:, 2, 0] = int_pi * Sq
        A[:, 2, 1] = int_pi * (T1 / (w0 * (a - 1.0)) + SW / w0)
        A[:, 2, 2] = int_pi * c * SG - int_pi * BF - (1.0 + intF)
        return A

    def matrix(self, lam: float) -> CharMatrix:
        return CharMatrix(float(lam), self.matrices([lam])[0])

    def __call__(self, lam):
        """``K(lambda)``; scalar in, float out; array in, array out."""
        scalar = np.ndim(lam) == 0
        K = _det3(self.matrices(lam))
        return float(K[0]) if scalar else K

    def reduced(self, lam):
        """Closed form of ``-K / (1 - alpha)`` when ``eps* = 0``.

        Assembled directly from the integrals rather than from the determinant,
        so it serves as an independent check of the matrix entries.
        """
        if not self.eps_zero:
            raise ValueError("the reduced characteristic function needs eps* = 0")
        scalar = np.ndim(lam) == 0
        lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
        h = self.h
        lc = self.lc
        pi = np.exp(-(lc.log_survival[None, :] + lam[:, None] * lc.Gamma[None, :]))
        B, BQ = self._delay_moments(lam)
        BQp = BQ * self.p_star[None, :]
        Wpi = cumulative_trapezoid(self.w[None, :] * pi, h)
        out = (
            trapezoid(B * pi, h)
            + (self.rates.alpha - 1.0) * trapezoid(BQp * Wpi, h)
            + trapezoid(BQp, h) * Wpi[:, -1]
            - 1.0
        )
        return float(out[0]) if scalar else out


def char_matrix(r, eq, lc, dgrid, lam) -> CharMatrix:
    return CharacteristicFunction(r, eq, lc, dgrid).matrix(lam)


def char_det(r, eq, lc, dgrid, lam) -> float:
    return CharacteristicFunction(r, eq, lc, dgrid)(lam)


# ---------------------------------------------------------------------------
# positivity and roots


@dataclass(frozen=True)
class PositivityReport:
    ok: bool
    margin: float
    s_at_min: float
    profile: np.ndarray = field(repr=False)

    def __bool__(self):
        return self.ok


def positivity_check(r: RateSet, eq: EquilibriumSolution, dgrid: DelayGrid) -> PositivityReport:
    """Pointwise positivity condition on the size grid, with its minimum."""
    grid = eq.grid
    s = grid.nodes
    beta = trapezoid(r.fertility_grid(s, dgrid.nodes, eq.Q_star), dgrid.h)
    if np.any(eq.p_star):
        beta_Q = trapezoid(r.fertility_grid(s, dgrid.nodes, eq.Q_star, r.beta_Q), dgrid.h)
        C = cumulative_trapezoid(beta_Q * eq.p_star, grid.h)
        profile = beta + r.weight(s) * (C + r.alpha * (C[-1] - C))
    else:
        profile = beta
    k = int(np.argmin(profile))
    margin = float(profile[k])
    return PositivityReport(margin >= POSITIVITY_TOL, margin, float(s[k]), profile)


def real_roots(K, lam_lo: float, lam_hi: float, n: int, tol: float = 1e-10) -> list[float]:
    """All sign-change roots of ``K`` found on a uniform scan, refined by Brent."""
    roots = []
    for a, b in bracket_scan(K, lam_lo, lam_hi, n, vectorized=True):
        roots.append(a if a == b else find_root_bracketed(K, a, b, tol))
    return roots


def leading_root(
    r: RateSet,
    eq: EquilibriumSolution,
    lc: LinearCoefficients,
    dgrid: DelayGrid,
    lam_range: tuple = DEFAULT_LAMBDA_RANGE,
    n: int = DEFAULT_LAMBDA_SAMPLES,
    enforce_positivity: bool = True,
    K: Optional[CharacteristicFunction] = None,
) -> Optional[float]:
    """Largest real root of ``K`` on ``lam_range``; ``None`` when no sign change.

    The real-axis search is only meaningful as a dominant-eigenvalue search
    when the positivity condition holds; with ``enforce_positivity`` (the
    default) a failed check raises :class:`PositivityError`. Passing ``False``
    returns the largest real root anyway, without that guarantee.
    """
    if enforce_positivity:
        rep = positivity_check(r, eq, dgrid)
        if not rep.ok:
            raise PositivityError(f"positivity condition fails (min {rep.margin:.6g} at s={rep.s_at_min:.6g})")
    if K is None:
        K = CharacteristicFunction(r, eq, lc, dgrid)
    roots = real_roots(K, lam_range[0], lam_range[1], n)
    return max(roots) if roots else None


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class StabilityVerdict:
    target: str  # "trivial" | "positive"
    verdict: str  # "stable" | "unstable" | "indeterminate"
    theorem: Optional[str]
    details: dict

    def as_text(self) -> str:
        lines = [f"target: {self.target}", f"verdict: {self.verdict}", f"theorem: {self.theorem or 'none'}"]
        for key, value in self.details.items():
            if isinstance(value, float):
                value = format(value, ".10g")
            lines.append(f"{key}: {value}")
        return "\n".join(lines)


def classify_trivial(r: RateSet, grid: SizeGrid, dgrid: DelayGrid, tol: float = 1e-9) -> StabilityVerdict:
    from .equilibrium import trivial_equilibrium

    eq = trivial_equilibrium(r, grid)
    R0 = reproduction_number(r, 0.0, eq.Q_star, grid, dgrid)
    pos = positivity_check(r, eq, dgrid)
    details = {"R00": R0, "K0": (1.0 - r.alpha) * (1.0 - R0), "positivity": pos.ok, "positivity_margin": pos.margin}
    if R0 < 1.0 - tol:
        verdict = "stable"
    elif R0 > 1.0 + tol:
        verdict = "unstable"
    else:
        return StabilityVerdict("trivial", "indeterminate", None, dict(details, reason="R(0,0) within tolerance of 1"))
    return StabilityVerdict("trivial", verdict, "R00-threshold", details)


def beta_Q_sign(r: RateSet, eq: EquilibriumSolution, dgrid: DelayGrid) -> str:
    """'negative', 'nonnegative' or 'mixed' for beta_Q on the (s, tau) grid at Q*."""
    bq = r.fertility_grid(eq.grid.nodes, dgrid.nodes, eq.Q_star, r.beta_Q)
    if np.all(bq < 0):
        return "negative"
    if np.all(bq >= 0):
        return "nonnegative"
    return "mixed"


def classify_positive(
    r: RateSet,
    eq: Optional[EquilibriumSolution],
    dgrid: DelayGrid,
    k_tol: float = 1e-9,
) -> StabilityVerdict:
    if eq is None or eq.trivial:
        return StabilityVerdict("positive", "indeterminate", None, {"reason": "no positive equilibrium found"})
    lc = linear_coefficients(r, eq)
    K = CharacteristicFunction(r, eq, lc, dgrid)
    pos = positivity_check(r, eq, dgrid)
    eps_sup = float(np.max(np.abs(lc.eps_star)))
    sign = beta_Q_sign(r, eq, dgrid)
    K0 = K(0.0)
    details = {
        "P_star": eq.P_star,
        "K0": K0,
        "positivity": pos.ok,
        "positivity_margin": pos.margin,
        "eps_sup": eps_sup,
        "beta_Q_sign": sign,
    }
    if not pos.ok:
        return StabilityVerdict("positive", "indeterminate", None, dict(details, reason="positivity condition fails"))
    if eps_sup <= EPS_ZERO_TOL:
        if sign == "negative":
            return StabilityVerdict("positive", "stable", "decoupled-betaQ-negative", details)
        if sign == "nonnegative":
            return StabilityVerdict("positive", "unstable", "decoupled-betaQ-nonnegative", details)
    if K0 < -k_tol:
        return StabilityVerdict("positive", "unstable", "K0-negative", details)
    return StabilityVerdict("positive", "indeterminate", None, dict(details, reason="no criterion applies"))


def classify(r: RateSet, eq_or_trivial, dgrid: DelayGrid, grid: Optional[SizeGrid] = None) -> StabilityVerdict:
    """Stability verdict for the trivial state (pass ``"trivial"`` and a grid) or an equilibrium."""
    if isinstance(eq_or_trivial, str):
        if eq_or_trivial != "trivial" or grid is None:
            raise ValueError("pass 'trivial' together with a size grid")
        return classify_trivial(r, grid, dgrid)
    if eq_or_trivial is not None and eq_or_trivial.trivial:
        return classify_trivial(r, eq_or_trivial.grid, dgrid)
    return classify_positive(r, eq_or_trivial, dgrid)
