"""Grids, trapezoid quadrature with prefix sums, and scalar root finding."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import kernels

DEFAULT_ROOT_TOL = 1e-10


class NumericsError(ValueError):
    """Raised for invalid quadrature input or failed root finding."""


class BracketError(NumericsError):
    """Endpoints of a root search do not bracket a sign change."""


@dataclass(frozen=True)
class SizeGrid:
    """Uniform grid ``s_i = i*h`` on ``[0, m]``."""

    n: int
    m: float
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise NumericsError(f"size grid needs at least 3 nodes, got {self.n}")
        if not (self.m > 0 and math.isfinite(self.m)):
            raise NumericsError(f"maximum size must be positive, got {self.m}")
        nodes = np.arange(self.n) * self.h
        nodes[-1] = self.m
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def h(self) -> float:
        return self.m / (self.n - 1)


@dataclass(frozen=True)
class DelayGrid:
    """Uniform grid ``tau_j = -theta + j*h`` on ``[-theta, 0]``."""

    n: int
    theta: float
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise NumericsError(f"delay grid needs at least 3 nodes, got {self.n}")
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise NumericsError(f"maximum delay must be positive, got {self.theta}")
        nodes = -self.theta + np.arange(self.n) * self.h
        nodes[-1] = 0.0
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def h(self) -> float:
        return self.theta / (self.n - 1)


def _check_samples(values, h) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] < 2:
        raise NumericsError("trapezoid needs at least 2 samples")
    if not h > 0:
        raise NumericsError(f"spacing must be positive, got {h}")
    return arr


def cumulative_trapezoid(values: Sequence[float] | np.ndarray, h: float) -> np.ndarray:
    """Running trapezoid integral along the last axis, starting at 0.

    ``out[..., k]`` integrates the first ``k + 1`` samples. Summation is
    strictly sequential, so ``out[..., -1]`` is bitwise equal to
    :func:`trapezoid` of the same samples.
    """
    arr = _check_samples(values, h)
    flat = arr.reshape(-1, arr.shape[-1])
    return kernels.cumtrapz_rows(flat, h).reshape(arr.shape)


def trapezoid(values: Sequence[float] | np.ndarray, h: float):
    """Composite trapezoid rule on uniformly spaced samples (last axis)."""
    out = cumulative_trapezoid(values, h)[..., -1]
    return float(out) if out.ndim == 0 else out


def find_root_bracketed(f: Callable[[float], float], a: float, b: float, tol: float = DEFAULT_ROOT_TOL) -> float:
    """Brent's method on a sign-changing bracket ``[a, b]``.

    The returned point always lies inside the original bracket.
    """
    if not a < b:
        raise NumericsError(f"bracket must satisfy a < b, got [{a}, {b}]")
    if not tol > 0:
        raise NumericsError("tolerance must be positive")

    def checked(x):
        y = float(f(x))
        if math.isnan(y):
            raise NumericsError(f"function returned NaN at x={x!r}")
        return y

    fa, fb = checked(a), checked(b)
    if fa == 0.0:
        return float(a)
    if fb == 0.0:
        return float(b)
    if fa * fb > 0:
        raise BracketError(f"f({a})={fa:.6g} and f({b})={fb:.6g} have the same sign")
    root = brentq(checked, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(min(max(root, a), b))


def bracket_scan(
    f: Callable, lo: float, hi: float, n: int, vectorized: bool = False
) -> list[tuple[float, float]]:
    """Sample ``f`` at ``n`` uniform points and return sign-change intervals.

    An exact zero at a sample point is reported as the degenerate interval
    ``(x, x)``. With ``vectorized=True`` ``f`` receives the whole sample array.
    """
    if not lo < hi:
        raise NumericsError(f"scan range must satisfy lo < hi, got [{lo}, {hi}]")
    if n < 2:
        raise NumericsError("scan needs at least 2 samples")
    xs = np.linspace(lo, hi, int(n))
    if vectorized:
        ys = np.asarray(f(xs), dtype=np.float64)
    else:
        ys = np.array([float(f(x)) for x in xs])
    if np.isnan(ys).any():
        bad = xs[np.isnan(ys)][0]
        raise NumericsError(f"function returned NaN at x={bad!r}")
    intervals = []
    for i in range(len(xs)):
        if ys[i] == 0.0:
            intervals.append((float(xs[i]), float(xs[i])))
        elif i + 1 < len(xs) and ys[i] * ys[i + 1] < 0:
            intervals.append((float(xs[i]), float(xs[i + 1])))
    return intervals
