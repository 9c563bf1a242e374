"""Dense bounded-variable primal simplex.

Solves ``min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  lo <= x <= hi`` for
problems where ``x = lo`` satisfies every inequality row with slack and the
equality rows exactly. That holds for the tracking relaxation (the zero flow
is feasible), so a single phase started from the all-slack basis suffices.
Equality rows get an artificial variable fixed to [0, 0] which may leave the
basis but never re-enter it.

Entering and leaving variables follow Bland's rule, which rules out cycling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
OPT_TOL = 1e-9


class SimplexError(RuntimeError):
    pass


class IterationLimitWarning(RuntimeWarning):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    objective: float
    status: str  # "optimal" or "iteration_limit"
    iterations: int
    history: list = field(default_factory=list)


def simplex(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, lo=None, hi=None,
            max_iter: int = 50_000) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    lo = np.zeros(n) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, dtype=float)
    if np.any(~np.isfinite(lo)):
        raise ValueError("lower bounds must be finite")
    me, mu = A_eq.shape[0], A_ub.shape[0]
    m = me + mu

    r_eq = b_eq - A_eq @ lo
    r_ub = b_ub - A_ub @ lo
    if np.any(np.abs(r_eq) > FEAS_TOL) or np.any(r_ub < -FEAS_TOL):
        raise SimplexError("lower-bound point is not feasible; no phase-one available")

    # columns: structural | slack (ub rows) | artificial (eq rows)
    N = n + mu + me
    T = np.zeros((m, N))
    T[:me, :n] = A_eq
    T[me:, :n] = A_ub
    T[me:, n:n + mu] = np.eye(mu)
    T[:me, n + mu:] = np.eye(me)
    cost = np.concatenate([c, np.zeros(mu + me)])
    lower = np.concatenate([lo, np.zeros(mu + me)])
    upper = np.concatenate([hi, np.full(mu, np.inf), np.zeros(me)])
    fixed = upper - lower <= 0

    basis = np.concatenate([n + mu + np.arange(me), n + np.arange(mu)]).astype(np.int64)
    at_upper = np.zeros(N, dtype=bool)
    xB = np.concatenate([r_eq, r_ub]).clip(min=0.0)
    is_basic = np.zeros(N, dtype=bool)
    is_basic[basis] = True
    d = cost - cost[basis] @ T

    def nonbasic_value(j):
        return upper[j] if at_upper[j] else lower[j]

    def current_x():
        x = np.where(at_upper, upper, lower).astype(float)
        x[basis] = xB
        return x

    history = [float(c @ lo)]
    status = "optimal"
    it = 0
    while True:
        cand = ~is_basic & ~fixed & (((~at_upper) & (d < -OPT_TOL)) | (at_upper & (d > OPT_TOL)))
        idx = np.flatnonzero(cand)
        if idx.size == 0:
            break
        if it >= max_iter:
            status = "iteration_limit"
            warnings.warn(f"simplex stopped after {max_iter} iterations; returning last feasible basis",
                          IterationLimitWarning, stacklevel=2)
            break
        it += 1
        j = int(idx[0])
        s = -1.0 if at_upper[j] else 1.0
        alpha = s * T[:, j]

        # ratio test; Bland tie-break on the smallest basic variable index
        t_best = upper[j] - lower[j]
        r_best = -1
        with np.errstate(divide="ignore", invalid="ignore"):
            dec = alpha > PIVOT_TOL
            inc = alpha < -PIVOT_TOL
            ratios = np.full(m, np.inf)
            ratios[dec] = (xB[dec] - lower[basis[dec]]) / alpha[dec]
            ub = upper[basis[inc]]
            ratios[inc] = np.where(np.isfinite(ub), (ub - xB[inc]) / -alpha[inc], np.inf)
        ratios = np.maximum(ratios, 0.0)
        if m:
            t_row = ratios.min()
            if t_row < t_best or (t_row == t_best and np.isfinite(t_row)):
                ties = np.flatnonzero(ratios == t_row)
                r_best = int(ties[np.argmin(basis[ties])])
                t_best = t_row
        if not np.isfinite(t_best):
            raise SimplexError("unbounded direction in a bounded problem")

        xB -= t_best * alpha
        if r_best < 0:
            at_upper[j] = not at_upper[j]
        else:
            leaving = basis[r_best]
            at_upper[leaving] = alpha[r_best] < 0
            entering_value = nonbasic_value(j) + s * t_best
            piv = T[r_best, j]
            T[r_best] /= piv
            col = T[:, j].copy()
            col[r_best] = 0.0
            T -= np.outer(col, T[r_best])
            d -= d[j] * T[r_best]
            basis[r_best] = j
            is_basic[leaving] = False
            is_basic[j] = True
            at_upper[j] = False
            xB[r_best] = entering_value
        history.append(float(c @ current_x()[:n]))

    x = current_x()[:n]
    x = np.clip(x, lo, hi)
    res = max(np.abs(A_eq @ x - b_eq).max(initial=0.0), (A_ub @ x - b_ub).max(initial=0.0))
    if res > FEAS_TOL:
        raise SimplexError(f"returned basis violates constraints by {res:.3g}")
    return SimplexResult(x, float(c @ x), status, it, history)
