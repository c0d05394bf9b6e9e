"""Truncated master equations, truncation certificates, and CDF dominance.

The truncation keeps the full diagonal of the generator: mass that jumps
out of the index set is absorbed, so the solved vector is a pointwise lower
bound on the true distribution and 1 minus its total is the absorbed flux.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .chain import BoundingChain
from .errors import InfeasibleError, ResourceLimitError, ValidationError
from .network import ClassPartition, ReactionNetwork, class_size, enumerate_class

DEFAULT_BUDGET = 1e-8
QUAD_TOL = 1e-8
MULTI_STATE_CAP = 1_000_000


def chain_generator(chain: BoundingChain, M: int) -> sp.csr_matrix:
    """Generator of a 1-D chain restricted to [0, M], diagonal kept full."""
    if M > chain.l_total:
        raise ValidationError(f"M={M} exceeds the chain horizon {chain.l_total}")
    rows, cols, vals = [], [], []
    for ell in range(M + 1):
        row = chain.row(ell)
        for k, rate in row.items():
            m = ell + k
            if 0 <= m <= M:
                rows.append(ell)
                cols.append(m)
                vals.append(rate)
        rows.append(ell)
        cols.append(ell)
        vals.append(-sum(row.values()))
    return sp.csr_matrix((vals, (rows, cols)), shape=(M + 1, M + 1))


def network_generator(network: ReactionNetwork, partition: ClassPartition,
                      n_max: int, cap: int = MULTI_STATE_CAP):
    """Generator on all states of class <= n_max, class-major lexicographic.

    Returns (Q, states, classes) with ``states`` the (n, d) state array and
    ``classes`` the class label per index.
    """
    blocks = []
    classes = []
    total = 0
    for ell in range(n_max + 1):
        n = class_size(ell, partition)
        total += n
        if total > cap:
            raise ResourceLimitError(
                f"state space above the cap of {cap} states at class {ell}"
            )
        if n:
            X = enumerate_class(ell, partition)
            blocks.append(X)
            classes.extend([ell] * n)
    states = np.vstack(blocks)
    classes = np.array(classes)
    index = {tuple(int(v) for v in s): i for i, s in enumerate(states)}
    rows, cols, vals = [], [], []
    exit_rate = np.zeros(len(states))
    for r in network.reactions:
        rates = r.propensity.evaluate_many(states)
        dests = states + np.asarray(r.change, dtype=np.int64)
        for i in np.flatnonzero(rates > 0):
            exit_rate[i] += rates[i]
            dest = tuple(int(v) for v in dests[i])
            j = index.get(dest)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(float(rates[i]))
    rows.extend(range(len(states)))
    cols.extend(range(len(states)))
    vals.extend(-exit_rate)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return Q, states, classes


@dataclass
class TruncatedCME:
    Q: sp.csr_matrix
    classes: np.ndarray
    p0: np.ndarray
    t_final: float
    budget: float
    sol: object
    states: np.ndarray | None = None

    def p(self, t):
        return self.sol(t)

    def p_report(self, t):
        return np.clip(self.sol(t), 0.0, None)

    def mass(self, t) -> float:
        return float(np.sum(self.sol(t)))

    def cdf_by_class(self, t, levels) -> np.ndarray:
        """P(class <= level) for each requested level, at one time."""
        p = self.p_report(t)
        return np.array([p[self.classes <= lv].sum() for lv in levels])


def solve_cme(Q: sp.spmatrix, p0, t_final: float,
              budget: float = DEFAULT_BUDGET, classes=None,
              states=None) -> TruncatedCME:
    """Integrate p' = p Q on [0, t_final] with dense output.

    The error budget sets the adaptive tolerances an order below it, so the
    reported global error stays within the budget for these dissipative
    systems; the certificate code adds the budget back into its bound.
    """
    p0 = np.asarray(p0, dtype=float)
    n = Q.shape[0]
    if p0.shape != (n,):
        raise ValidationError("p0 length does not match the index set")
    if abs(p0.sum() - 1.0) > 1e-9 or (p0 < 0).any():
        raise ValidationError("p0 must be a probability vector")
    if classes is None:
        classes = np.arange(n)
    QT = sp.csr_matrix(Q).T.tocsr()

    def rhs(_t, p):
        return QT @ p

    sol = solve_ivp(rhs, (0.0, float(t_final)), p0, method="BDF",
                    jac=QT, dense_output=True,
                    rtol=max(budget / 10.0, 1e-12),
                    atol=max(budget / 100.0, 1e-14))
    if not sol.success:
        raise InfeasibleError(
            f"CME integration failed at t={sol.t[-1]}: {sol.message}"
        )
    return TruncatedCME(Q=sp.csr_matrix(Q), classes=np.asarray(classes),
                        p0=p0, t_final=float(t_final), budget=budget,
                        sol=sol.sol, states=states)


def solve_chain_cme(chain: BoundingChain, M: int, p0, t_final: float,
                    budget: float = DEFAULT_BUDGET) -> TruncatedCME:
    Q = chain_generator(chain, M)
    return solve_cme(Q, p0, t_final, budget=budget, classes=np.arange(M + 1))


def solve_network_cme(network: ReactionNetwork, partition: ClassPartition,
                      n_max: int, x0, t_final: float,
                      budget: float = DEFAULT_BUDGET) -> TruncatedCME:
    Q, states, classes = network_generator(network, partition, n_max)
    p0 = np.zeros(len(classes))
    key = tuple(int(v) for v in x0)
    hits = np.flatnonzero((states == np.asarray(key)).all(axis=1))
    if hits.size != 1:
        raise ValidationError(f"initial state {key} is outside the index set")
    p0[hits[0]] = 1.0
    return solve_cme(Q, p0, t_final, budget=budget, classes=classes,
                     states=states)


def delta_p0(M: int, at: int) -> np.ndarray:
    if not 0 <= at <= M:
        raise ValidationError(f"delta at {at} is outside [0, {M}]")
    p0 = np.zeros(M + 1)
    p0[at] = 1.0
    return p0


def _simpson_weights(n: int, h: float) -> np.ndarray:
    # n odd number of points (even interval count)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def exit_flux(cme: TruncatedCME, N: int, tol: float = QUAD_TOL):
    """Outflow rate from classes <= N, and its time integral over [0, T_f].

    The flux at time t is sum over states of class <= N of p(t) times the
    rate into states of class > N; integration uses composite quadrature on
    the dense output, doubling the grid until the value moves less than
    ``tol``.
    """
    src = cme.classes <= N
    out_cols = cme.classes > N
    B = cme.Q[src][:, out_cols]
    u = np.asarray(B.sum(axis=1)).ravel()

    def flux(t):
        p = cme.sol(np.atleast_1d(np.asarray(t, dtype=float)))
        vals = u @ np.clip(p[src], 0.0, None)
        return float(vals[0]) if np.isscalar(t) else vals

    if u.size == 0 or not u.any():
        return flux, 0.0
    F_prev = None
    n = 129
    while True:
        grid = np.linspace(0.0, cme.t_final, n)
        vals = flux(grid)
        F = float(vals @ _simpson_weights(n, grid[1] - grid[0]))
        if F_prev is not None and abs(F - F_prev) < tol:
            return flux, F
        if n > 2 ** 17:
            return flux, F
        F_prev = F
        n = 2 * n - 1


@dataclass
class TruncationCertificate:
    N: int
    M: int
    t_final: float
    mass_deficit: float
    initial_tail: float
    flux: float
    solver_term: float
    bound: float
    bound_clipped: float

    def summary(self) -> str:
        return (f"E_T({self.N}) <= {self.bound_clipped:.6g} "
                f"(mass deficit {self.mass_deficit:.3g}, initial tail "
                f"{self.initial_tail:.3g}, flux {self.flux:.3g}, solver "
                f"{self.solver_term:.3g})")


def _certificate(cme: TruncatedCME, N: int) -> TruncationCertificate:
    M = len(cme.p0) - 1
    mass_deficit = max(0.0, 1.0 - cme.mass(cme.t_final))
    initial_tail = float(cme.p0[N + 1:].sum()) if N < M else 0.0
    _, F = exit_flux(cme, N)
    solver_term = cme.budget + QUAD_TOL
    bound = mass_deficit + initial_tail + F + solver_term
    return TruncationCertificate(
        N=N, M=M, t_final=cme.t_final, mass_deficit=mass_deficit,
        initial_tail=initial_tail, flux=F, solver_term=solver_term,
        bound=bound, bound_clipped=min(1.0, max(0.0, bound)),
    )


def truncation_certificate(chain: BoundingChain, p0, N: int, M: int,
                           t_final: float, budget: float = DEFAULT_BUDGET,
                           cme: TruncatedCME | None = None) -> TruncationCertificate:
    """Exit-probability bound for the window [0, N] inside the [0, M] solve."""
    if not 0 <= N <= M:
        raise ValidationError(f"need 0 <= N <= M, got N={N}, M={M}")
    if cme is None:
        cme = solve_chain_cme(chain, M, p0, t_final, budget=budget)
    return _certificate(cme, N)


def _flux_table(cme: TruncatedCME, t_grid: np.ndarray) -> np.ndarray:
    """flux_N(t) for every N in [0, M] on a time grid; shape (M+1, len(t))."""
    M = len(cme.p0) - 1
    P = np.clip(cme.sol(t_grid), 0.0, None)
    D = np.zeros((M + 1, len(t_grid)))
    coo = cme.Q.tocoo()
    up = coo.col > coo.row
    for i, j, q in zip(coo.row[up], coo.col[up], coo.data[up]):
        w = q * P[i]
        D[i] += w
        D[j] -= w
    return np.cumsum(D, axis=0)


def certificate_table(cme: TruncatedCME, tol: float = QUAD_TOL):
    """E_T(N) for all N from one solve; returns (bounds, parts dict)."""
    M = len(cme.p0) - 1
    mass_deficit = max(0.0, 1.0 - cme.mass(cme.t_final))
    initial_tail = np.concatenate(
        [np.cumsum(cme.p0[::-1])[::-1][1:], [0.0]]
    )  # initial_tail[N] = p0 mass strictly above N
    F_prev = None
    n = 129
    while True:
        t_grid = np.linspace(0.0, cme.t_final, n)
        table = _flux_table(cme, t_grid)
        F = table @ _simpson_weights(n, t_grid[1] - t_grid[0])
        if F_prev is not None and np.max(np.abs(F - F_prev)) < tol:
            break
        if n > 2 ** 13:  # (M+1) x n arrays; keep the refinement bounded
            break
        F_prev = F
        n = 2 * n - 1
    solver_term = cme.budget + QUAD_TOL
    bounds = mass_deficit + initial_tail + F + solver_term
    return bounds, {
        "mass_deficit": mass_deficit,
        "initial_tail": initial_tail,
        "flux": F,
        "solver_term": solver_term,
    }


def min_truncation(chain: BoundingChain, p0, M: int, t_final: float,
                   epsilon: float, budget: float = DEFAULT_BUDGET,
                   cme: TruncatedCME | None = None) -> int:
    """Smallest N in [0, M] with E_T(N) < epsilon.

    Precondition: the whole-box mass deficit (plus the solver term) must
    already be below epsilon, otherwise no window can certify and the box
    M itself has to grow.
    """
    if not 0 < epsilon:
        raise ValidationError("epsilon must be positive")
    if cme is None:
        cme = solve_chain_cme(chain, M, p0, t_final, budget=budget)
    deficit = max(0.0, 1.0 - cme.mass(t_final)) + cme.budget + QUAD_TOL
    if deficit >= epsilon:
        raise InfeasibleError(
            f"whole-box mass deficit {deficit:.3g} is not below "
            f"epsilon={epsilon}; increase M"
        )
    bounds, _ = certificate_table(cme)
    clipped = np.minimum(bounds, 1.0)
    feasible = np.flatnonzero(clipped < epsilon)
    if feasible.size == 0:
        raise InfeasibleError(f"no window [0, N] reaches E_T < {epsilon} "
                              f"inside M={M}")
    return int(feasible[0])


@dataclass
class DominanceReport:
    ok: bool
    max_violation: float
    worst: tuple | None
    checked: int
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def cdf_dominance(chain_cme: TruncatedCME, family, times,
                  levels=None) -> DominanceReport:
    """Check chain CDF <= network CDF + slack over times, levels, family.

    The chain solve is an absorbing truncation, hence a pointwise lower
    bound on the true chain law: no slack is needed on that side.  Each
    family member contributes its own mass deficit at time t plus both
    solver budgets as slack.
    """
    if levels is None:
        levels = np.arange(int(chain_cme.classes.max()) + 1)
    levels = np.asarray(levels)
    for theta_idx, member in enumerate(family):
        lhs0 = chain_cme.cdf_by_class(0.0, levels)
        rhs0 = member.cdf_by_class(0.0, levels)
        if np.any(lhs0 > rhs0 + 1e-9):
            raise ValidationError(
                f"initial CDFs are not ordered against family member "
                f"{theta_idx}; the dominance theorem does not apply"
            )
    worst = None
    max_violation = -np.inf
    checked = 0
    for t in np.asarray(times, dtype=float):
        lhs = chain_cme.cdf_by_class(t, levels)
        for theta_idx, member in enumerate(family):
            rhs = member.cdf_by_class(t, levels)
            slack = ((1.0 - member.mass(t)) + member.budget
                     + chain_cme.budget)
            gap = lhs - rhs - slack
            checked += len(levels)
            idx = int(np.argmax(gap))
            if gap[idx] > max_violation:
                max_violation = float(gap[idx])
                worst = (float(t), int(levels[idx]), theta_idx)
    ok = max_violation <= 0.0
    return DominanceReport(
        ok=ok, max_violation=max_violation, worst=worst, checked=checked,
        detail="dominance holds within slack" if ok else
        f"violated by {max_violation:.3g} at (t, level, member) = {worst}",
    )
