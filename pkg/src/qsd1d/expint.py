"""Exponentially weighted integrals of Q, evaluated without overflow.

The criteria all involve products such as ``e^{Q(y)} * int_y^inf e^{-Q}``
where each factor alone over/underflows long before the product does.
Everything here works with *differences* of Q accumulated panel by panel:

    tail_ratio(y) = int_y^inf  exp(-(Q(z) - Q(y))) dz   = e^{Q(y)} mu[y, inf)
    head_ratio(y) = int_0^y    exp(-(Q(y) - Q(z))) dz   = e^{-Q(y)} Lambda(y)

Both are computed by a vectorised march: starting at ``y`` the walker takes
panels on which Q changes by at most ``MAX_STEP``, integrates the weight over
each panel with nested Gauss-Legendre rules, and stops once the remaining
contribution is below round-off.
"""

from __future__ import annotations

import math

import numpy as np

from .quadrature import GL_W, GL_X

MAX_STEP = 2.0   # max |Delta Q| accepted per panel
GROW_BELOW = 0.5  # widen the next panel when |Delta Q| stays below this
S_MAX = 1e15
MAX_ITER = 50000


def _panel(q, y, d, s, w):
    """Integrate exp(-dphi) over one panel for each walker.

    ``dphi(u) = int_0^u 2 q(y + d (s + v)) dv`` for u in [0, w]. Returns the
    panel integral and dphi(w).
    """
    u = w[:, None] * GL_X[None, :]                               # (m, K)
    inner = s[:, None, None] + u[:, :, None] * GL_X[None, None, :]  # (m, K, J)
    qv = q(y[:, None, None] + d * inner)
    dphi_nodes = u * (2.0 * qv @ GL_W)                            # (m, K)
    end = s[:, None] + w[:, None] * GL_X[None, :]
    dphi_end = w * (2.0 * q(y[:, None] + d * end) @ GL_W)        # (m,)
    with np.errstate(over="ignore"):
        integral = w * (np.exp(-dphi_nodes) @ GL_W)
    return integral, dphi_end


def march(q, y, direction: int, span=None, rtol: float = 1e-16) -> np.ndarray:
    """``int_0^span exp(-phi(s)) ds`` with ``phi(s) = int_0^s 2 q(y + direction*u) du``.

    ``span`` defaults to infinity. Returns ``inf`` for walkers whose weight
    never decays before ``S_MAX``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float)).copy()
    m = y.size
    S = np.full(m, math.inf) if span is None else np.broadcast_to(
        np.asarray(span, dtype=float), (m,)).copy()
    s = np.zeros(m)
    phi = np.zeros(m)
    total = np.zeros(m)
    q0 = np.abs(q(y))
    w = np.minimum(1.0, 0.5 / np.maximum(q0, 1e-300))
    w = np.minimum(w, np.maximum(S, 1e-300))
    active = S > 0
    for _ in range(MAX_ITER):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        ww = np.minimum(w[idx], S[idx] - s[idx])
        J, dphi = _panel(q, y[idx], direction, s[idx], ww)
        ok = (np.abs(dphi) <= MAX_STEP) | (ww <= 1e-14 * np.maximum(1.0, np.abs(y[idx]) + s[idx]))
        ok &= np.isfinite(dphi)
        acc = idx[ok]
        if acc.size:
            with np.errstate(over="ignore"):
                contrib = np.exp(-phi[acc]) * J[ok]
            total[acc] += contrib
            phi[acc] += dphi[ok]
            s[acc] += ww[ok]
            grow = np.abs(dphi[ok]) < GROW_BELOW
            w[acc] = np.where(grow, np.minimum(2.0 * w[acc], np.maximum(1.0, 2.0 * s[acc])), w[acc])
            with np.errstate(over="ignore", invalid="ignore"):
                rest = 2.0 * w[acc] * np.exp(-phi[acc])
            finished = (s[acc] >= S[acc]) | ((phi[acc] > 30.0) & (rest <= rtol * total[acc]))
            runaway = ~np.isfinite(total[acc]) | ((s[acc] > S_MAX) & ~finished)
            total[acc[runaway]] = math.inf
            active[acc[finished | runaway]] = False
        rej = idx[~ok]
        w[rej] = 0.5 * ww[~ok]
    else:
        total[active] = math.nan
    return total


def tail_ratio(table, y) -> np.ndarray:
    """``e^{Q(y)} int_y^inf e^{-Q(z)} dz``; the integrand of hypothesis (H)."""
    return march(table.q, y, +1)


def head_ratio(table, y, lower: float = 0.0) -> np.ndarray:
    """``e^{-Q(y)} int_lower^y e^{Q(z)} dz``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return march(table.q, y, -1, span=np.maximum(y - lower, 0.0))


def mu_tail(table, y) -> np.ndarray:
    """``mu[y, inf) = int_y^inf e^{-Q}``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    with np.errstate(over="ignore", under="ignore"):
        return np.exp(-table.Q(y)) * tail_ratio(table, y)


def scale(table, x) -> np.ndarray:
    """Scale function ``Lambda(x) = int_0^x e^{Q}``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    with np.errstate(over="ignore"):
        return np.exp(table.Q(x)) * head_ratio(table, x)


def mu_head(table, x) -> np.ndarray:
    """``int_0^x e^{-Q}``, by cumulative quadrature over sorted points."""
    from .quadrature import cumulative

    x = np.atleast_1d(np.asarray(x, dtype=float))
    order = np.argsort(x)
    pts = np.concatenate([[0.0], x[order]])
    f = lambda z: np.exp(-table.Q(z))
    with np.errstate(over="ignore", under="ignore"):
        c = cumulative(f, pts, rel_tol=1e-13)[1:]
    out = np.empty_like(c)
    out[order] = c
    return out
