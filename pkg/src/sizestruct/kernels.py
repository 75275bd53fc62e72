"""Hot inner loops, in a numba flavour and a pure-numpy flavour.

Both flavours perform the same floating point operations in the same order.
The arithmetic-only kernels therefore agree bit for bit. ``damped_prefix`` calls
``exp``, whose last-ulp rounding differs between numba's and numpy's libm, so
it agrees to about 1e-13 relative. The active set is
picked at import time from :data:`sizestruct._jit.USE_NUMBA`; the benchmark
script imports both namespaces directly.
"""
from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from ._jit import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# loop kernels (compiled by numba when available)


@njit
def _cumtrapz_rows_loop(values, h):
    n_rows, n = values.shape
    out = np.empty((n_rows, n))
    half_h = h * 0.5
    for r in range(n_rows):
        acc = 0.0
        out[r, 0] = 0.0
        for i in range(1, n):
            acc = acc + half_h * (values[r, i] + values[r, i - 1])
            out[r, i] = acc
    return out


@njit
def _upwind_loop(p, gamma, mu, dt, ds):
    n = p.shape[0]
    out = np.empty(n)
    out[0] = p[0]
    ratio = dt / ds
    for i in range(1, n):
        flux = gamma[i] * p[i] - gamma[i - 1] * p[i - 1]
        out[i] = p[i] - ratio * flux - dt * mu[i] * p[i]
    return out


@njit
def _delay_trapezoid_loop(f, head, hs, ht):
    n_levels, n = f.shape
    half_hs = hs * 0.5
    half_ht = ht * 0.5
    total = 0.0
    prev = 0.0
    for k in range(n_levels):
        row = (head + k) % n_levels
        acc = 0.0
        for i in range(1, n):
            acc = acc + half_hs * (f[row, i] + f[row, i - 1])
        if k > 0:
            total = total + half_ht * (acc + prev)
        prev = acc
    return total


@njit
def _damped_prefix_loop(decay, g, h):
    n_rows, n = decay.shape
    out = np.empty((n_rows, n))
    half_h = h * 0.5
    for r in range(n_rows):
        out[r, 0] = 0.0
        for k in range(1, n):
            a = np.exp(-decay[r, k])
            out[r, k] = a * out[r, k - 1] + half_h * (g[k] + a * g[k - 1])
    return out


# ---------------------------------------------------------------------------
# numpy kernels


def _cumtrapz_rows_numpy(values, h):
    half_h = h * 0.5
    out = np.empty(values.shape)
    out[:, 0] = 0.0
    np.cumsum(half_h * (values[:, 1:] + values[:, :-1]), axis=1, out=out[:, 1:])
    return out


def _upwind_numpy(p, gamma, mu, dt, ds):
    out = np.empty_like(p)
    out[0] = p[0]
    ratio = dt / ds
    flux = gamma[1:] * p[1:] - gamma[:-1] * p[:-1]
    out[1:] = p[1:] - ratio * flux - dt * mu[1:] * p[1:]
    return out


def _delay_trapezoid_numpy(f, head, hs, ht):
    ordered = np.roll(f, -head, axis=0)
    rows = _cumtrapz_rows_numpy(ordered, hs)[:, -1]
    return float(_cumtrapz_rows_numpy(rows[None, :], ht)[0, -1])


def _damped_prefix_numpy(decay, g, h):
    n_rows, n = decay.shape
    out = np.empty((n_rows, n))
    out[:, 0] = 0.0
    half_h = h * 0.5
    a = np.exp(-decay)
    for k in range(1, n):
        out[:, k] = a[:, k] * out[:, k - 1] + half_h * (g[k] + a[:, k] * g[k - 1])
    return out


numba_kernels = SimpleNamespace(
    cumtrapz_rows=_cumtrapz_rows_loop,
    upwind=_upwind_loop,
    delay_trapezoid=_delay_trapezoid_loop,
    damped_prefix=_damped_prefix_loop,
)

numpy_kernels = SimpleNamespace(
    cumtrapz_rows=_cumtrapz_rows_numpy,
    upwind=_upwind_numpy,
    delay_trapezoid=_delay_trapezoid_numpy,
    damped_prefix=_damped_prefix_numpy,
)

active = numba_kernels if USE_NUMBA else numpy_kernels


def cumtrapz_rows(values: np.ndarray, h: float) -> np.ndarray:
    """Row-wise cumulative trapezoid of a 2-D float array."""
    return active.cumtrapz_rows(np.ascontiguousarray(values, dtype=np.float64), float(h))


def upwind(p: np.ndarray, gamma: np.ndarray, mu: np.ndarray, dt: float, ds: float) -> np.ndarray:
    """One conservative upwind transport step for nodes 1..n-1; node 0 is copied."""
    return active.upwind(p, gamma, mu, float(dt), float(ds))


def delay_trapezoid(f: np.ndarray, head: int, hs: float, ht: float) -> float:
    """Double trapezoid over a ring of delay levels (rows) and sizes (columns).

    ``head`` is the ring index of the oldest level.
    """
    return float(active.delay_trapezoid(f, int(head), float(hs), float(ht)))


def damped_prefix(decay: np.ndarray, g: np.ndarray, h: float) -> np.ndarray:
    """Compute ``F(s) = pi(s) * int_0^s g(y) / pi(y) dy`` without forming ``1/pi``.

    ``decay[:, k]`` holds ``-log(pi(s_k) / pi(s_{k-1}))`` for each row; column 0
    is ignored. The recursion is the trapezoid rule on the undamped integral,
    rescaled step by step.
    """
    return active.damped_prefix(
        np.ascontiguousarray(decay, dtype=np.float64), np.ascontiguousarray(g, dtype=np.float64), float(h)
    )
