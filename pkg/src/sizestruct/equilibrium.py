"""Survivorship, basic reproduction function, hierarchy variable and steady states."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ratedsl
from .numerics import (
    DelayGrid,
    SizeGrid,
    bracket_scan,
    cumulative_trapezoid,
    find_root_bracketed,
    trapezoid,
)
from .ratedsl import Expr

logger = logging.getLogger(__name__)

_ALLOWED_VARS = {
    "gamma": {"s", "P"},
    "mu": {"s", "P"},
    "beta": {"s", "tau", "Q"},
    "w": {"s"},
}


class RateError(ValueError):
    """Vital rates violate a regularity requirement on the sampled grid."""


def _as_expr(x) -> Expr:
    return ratedsl.parse_expr(x) if isinstance(x, str) else x


@dataclass(frozen=True)
class RateSet:
    """The four vital-rate expressions plus the scalar model parameters.

    ``gamma(s, P)`` growth, ``mu(s, P)`` mortality, ``beta(s, tau, Q)``
    fertility, ``w(s)`` hierarchy weight; ``alpha`` in [0, 1) is the
    hierarchy strength, ``theta`` the maximum delay and ``m`` the maximum
    size. Strings are parsed on construction.
    """

    gamma: Expr
    mu: Expr
    beta: Expr
    w: Expr
    alpha: float
    theta: float
    m: float
    gamma_s: Expr = field(init=False, repr=False, compare=False)
    gamma_P: Expr = field(init=False, repr=False, compare=False)
    gamma_sP: Expr = field(init=False, repr=False, compare=False)
    mu_P: Expr = field(init=False, repr=False, compare=False)
    beta_Q: Expr = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("gamma", "mu", "beta", "w"):
            e = _as_expr(getattr(self, name))
            object.__setattr__(self, name, e)
            extra = ratedsl.variables(e) - _ALLOWED_VARS[name]
            if extra:
                raise RateError(f"{name} may not depend on {sorted(extra)}")
        if not 0.0 <= self.alpha < 1.0:
            raise RateError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise RateError(f"theta must be positive, got {self.theta}")
        if not (self.m > 0 and math.isfinite(self.m)):
            raise RateError(f"m must be positive, got {self.m}")
        d = ratedsl.diff_expr
        gamma_s = d(self.gamma, "s")
        object.__setattr__(self, "gamma_s", gamma_s)
        object.__setattr__(self, "gamma_P", d(self.gamma, "P"))
        object.__setattr__(self, "gamma_sP", d(gamma_s, "P"))
        object.__setattr__(self, "mu_P", d(self.mu, "P"))
        object.__setattr__(self, "beta_Q", d(self.beta, "Q"))

    def scaled_beta(self, c: float) -> "RateSet":
        """Copy with fertility multiplied by the constant ``c``."""
        beta = ratedsl.BinOp("*", ratedsl.Num(float(c)), self.beta)
        return RateSet(self.gamma, self.mu, beta, self.w, self.alpha, self.theta, self.m)

    # grid evaluation helpers -------------------------------------------------

    def growth(self, s, P) -> np.ndarray:
        return ratedsl.evaluate_on(self.gamma, np.shape(s), {"s": s, "P": P})

    def mortality(self, s, P) -> np.ndarray:
        return ratedsl.evaluate_on(self.mu, np.shape(s), {"s": s, "P": P})

    def weight(self, s) -> np.ndarray:
        return ratedsl.evaluate_on(self.w, np.shape(s), {"s": s})

    def fertility_grid(self, s, tau, Q, expr: Optional[Expr] = None) -> np.ndarray:
        """``beta`` (or ``expr``) on the ``len(s) x len(tau)`` product grid with ``Q = Q(s)``."""
        s = np.asarray(s, dtype=float)
        tau = np.asarray(tau, dtype=float)
        Q = np.broadcast_to(np.asarray(Q, dtype=float), s.shape)
        e = self.beta if expr is None else expr
        return ratedsl.evaluate_on(
            e, (s.size, tau.size), {"s": s[:, None], "tau": tau[None, :], "Q": Q[:, None]}
        )

    def check_on_grid(self, grid: SizeGrid, P_values=(0.0,)) -> None:
        """Validate positivity/sign requirements of the rates on sampled points."""
        s = grid.nodes
        w = self.weight(s)
        if not np.all(w > 0):
            raise RateError("w(s) must be positive on [0, m]")
        for P in P_values:
            g = self.growth(s, P)
            if not np.all(g > 0):
                raise RateError(f"gamma(s, P) must be positive (P={P})")
            if np.any(self.mortality(s, P) < 0):
                raise RateError(f"mu(s, P) must be non-negative (P={P})")
            if abs(g[0] - 1.0) > 1e-9:
                logger.warning("gamma(0, P=%g) = %.12g; the boundary condition assumes gamma(0, P) = 1", P, g[0])


@dataclass(frozen=True)
class EquilibriumSolution:
    grid: SizeGrid
    P_star: float
    p_star: np.ndarray
    Q_star: np.ndarray
    Pi_star: np.ndarray
    trivial: bool
    roots: tuple = ()


def _survivorship_log(r: RateSet, P: float, grid: SizeGrid) -> np.ndarray:
    s = grid.nodes
    g = r.growth(s, P)
    if not np.all(g > 0):
        raise RateError(f"gamma must be positive along the grid (P={P})")
    gs = ratedsl.evaluate_on(r.gamma_s, s.shape, {"s": s, "P": P})
    mu = r.mortality(s, P)
    return cumulative_trapezoid((mu + gs) / g, grid.h)


def survivorship_profile(r: RateSet, P: float, grid: SizeGrid) -> np.ndarray:
    """``Pi(s, P) = exp(-int_0^s (mu + gamma_s) / gamma dy)`` on the grid."""
    return np.exp(-_survivorship_log(r, P, grid))


def hierarchy_weight(r: RateSet, p: np.ndarray, grid: SizeGrid) -> np.ndarray:
    """``Q(s) = alpha * W(s) + (W(m) - W(s))`` with ``W`` the prefix integral of ``w p``."""
    W = cumulative_trapezoid(r.weight(grid.nodes) * np.asarray(p, dtype=float), grid.h)
    return r.alpha * W + (W[-1] - W)


def delay_integral(values: np.ndarray, dgrid: DelayGrid) -> np.ndarray:
    """Trapezoid over the delay axis (last axis) of a size-by-delay array."""
    return trapezoid(values, dgrid.h)


def reproduction_number(r: RateSet, P: float, Q, grid: SizeGrid, dgrid: DelayGrid) -> float:
    """Basic reproduction function ``R(P, Q)`` by nested trapezoid (delay inner)."""
    Pi = survivorship_profile(r, P, grid)
    inner = delay_integral(r.fertility_grid(grid.nodes, dgrid.nodes, Q), dgrid)
    return trapezoid(Pi * inner, grid.h)


def equilibrium_density(r: RateSet, P_star: float, grid: SizeGrid, Pi: Optional[np.ndarray] = None) -> np.ndarray:
    """Steady-state density ``P* Pi(s, P*) / int Pi``."""
    if not P_star > 0:
        raise ValueError("equilibrium density needs P* > 0")
    if Pi is None:
        Pi = survivorship_profile(r, P_star, grid)
    norm = trapezoid(Pi, grid.h)
    if not norm > 0:
        raise ValueError("survivorship integrates to zero")
    return P_star * Pi / norm


def trivial_equilibrium(r: RateSet, grid: SizeGrid) -> EquilibriumSolution:
    zeros = np.zeros(grid.n)
    return EquilibriumSolution(grid, 0.0, zeros, zeros.copy(), survivorship_profile(r, 0.0, grid), True)


def default_p_max(r: RateSet, grid: SizeGrid, dgrid: DelayGrid) -> float:
    """Crude search bound ``10 m theta max(beta)``.

    ``beta`` is sampled at ``Q = 0`` and, for fertilities that vanish there
    (e.g. proportional to ``Q``), at ``Q = 1``.
    """
    beta_max = 0.0
    for q in (0.0, 1.0):
        beta_max = float(np.max(r.fertility_grid(grid.nodes, dgrid.nodes, np.full(grid.n, q))))
        if beta_max > 0:
            break
    bound = 10.0 * r.m * beta_max * r.theta
    return bound if bound > 0 else 1.0


def _profiles(r: RateSet, P: float, grid: SizeGrid):
    Pi = survivorship_profile(r, P, grid)
    p = equilibrium_density(r, P, grid, Pi)
    return Pi, p, hierarchy_weight(r, p, grid)


def steady_state_residual(r: RateSet, P: float, grid: SizeGrid, dgrid: DelayGrid) -> float:
    """``g(P) = R(P, Q*[P]) - 1`` where ``Q*[P]`` comes from the candidate profile."""
    Pi, _, Q = _profiles(r, P, grid)
    inner = delay_integral(r.fertility_grid(grid.nodes, dgrid.nodes, Q), dgrid)
    return trapezoid(Pi * inner, grid.h) - 1.0


def solve_equilibrium(
    r: RateSet,
    grid: SizeGrid,
    dgrid: DelayGrid,
    P_max: Optional[float] = None,
    n_scan: int = 121,
    tol: float = 1e-12,
) -> Optional[EquilibriumSolution]:
    """Smallest positive root of ``g(P)``, or ``None`` when no sign change is found.

    The scan is uniform in ``log P`` over ``[P_max * 1e-8, P_max]`` so that
    small equilibria are not swallowed by a coarse linear scan.
    """
    if P_max is None:
        P_max = default_p_max(r, grid, dgrid)
    if not P_max > 0:
        raise ValueError("P_max must be positive")

    def g_log(x):
        return steady_state_residual(r, math.exp(x), grid, dgrid)

    lo, hi = math.log(P_max * 1e-8), math.log(P_max)
    roots = []
    for a, b in bracket_scan(g_log, lo, hi, n_scan):
        if a == b:
            roots.append(math.exp(a))
        else:
            P = find_root_bracketed(lambda P: steady_state_residual(r, P, grid, dgrid), math.exp(a), math.exp(b), tol)
            roots.append(P)
    roots = sorted(set(roots))
    if not roots:
        return None
    if len(roots) > 1:
        logger.info("several equilibrium candidates found: %s", roots)
    P_star = roots[0]
    Pi, p, Q = _profiles(r, P_star, grid)
    return EquilibriumSolution(grid, P_star, p, Q, Pi, False, tuple(roots))
