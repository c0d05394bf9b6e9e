"""Greedy discrete transport: the one-mass fill Pi and the plan Pi-bar.

Pi[x, u] routes a scalar mass x through the sequence u in index order.
Pi-bar[a, b] stacks those fills for the prefixes of a, producing a plan
with row sums a, column sums b and support on the upper triangle whenever
the prefixes of a dominate the prefixes of b.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


class TransportError(ValidationError):
    """Prefix domination (or mass balance) fails; carries the first bad index."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


def pi(x: float, u) -> np.ndarray:
    """Greedy fill of mass ``x`` into slots ``u``: min(max(x - u_{0:k-1}, 0), u_k)."""
    u = np.asarray(u, dtype=float)
    total = float(u.sum())
    scale = max(1.0, total)
    if x < -1e-12 * scale or x > total + 1e-12 * scale:
        raise TransportError(f"mass {x} outside [0, {total}]")
    prev = np.concatenate(([0.0], np.cumsum(u)[:-1]))
    return np.clip(x - prev, 0.0, u)


def pi_bar(a, b, rtol: float = 1e-12) -> np.ndarray:
    """Transport plan with row sums ``a`` and column sums ``b``.

    Requires equal totals and prefix domination a_{0:k} >= b_{0:k}; both are
    checked with relative slack ``rtol``.  Row k of the result is
    Pi[a_{0:k}, b] - Pi[a_{0:k-1}, b].  Under domination the plan is zero
    strictly below the diagonal, which is what the coupling construction
    needs; a violated prefix therefore doubles as a runtime check that the
    candidate chain really bounds the network.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if (a < -1e-15).any() or (b < -1e-15).any():
        raise ValidationError("mass sequences must be nonnegative")
    scale = max(1.0, float(a.sum()), float(b.sum()))
    tol = rtol * scale
    if abs(a.sum() - b.sum()) > tol:
        raise TransportError(
            f"total masses differ: {a.sum()} vs {b.sum()}", index=None
        )
    cum_a = np.cumsum(a)
    cum_b = np.cumsum(b)
    n = min(len(a), len(b))
    bad = np.flatnonzero(cum_a[:n] < cum_b[:n] - tol)
    if bad.size:
        k = int(bad[0])
        raise TransportError(
            f"prefix domination fails at index {k}: "
            f"a[0:{k}] = {cum_a[k]} < b[0:{k}] = {cum_b[k]}",
            index=k,
        )
    prev_fill = np.zeros_like(b)
    plan = np.zeros((len(a), len(b)))
    for k in range(len(a)):
        fill = pi(min(cum_a[k], float(b.sum())), b)
        plan[k] = fill - prev_fill
        prev_fill = fill
    # greedy differences can leave -1e-17 noise; genuine negatives cannot occur
    plan[np.abs(plan) < 1e-15 * scale] = 0.0
    if (plan < 0).any():
        raise TransportError("plan has a negative entry", index=None)
    return plan
