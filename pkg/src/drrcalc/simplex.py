"""Dense bounded-variable revised simplex with dual extraction.

Solves the computational standard form

    minimize    c @ x
    subject to  A @ x = b,    lb <= x <= ub   (entries may be +-inf)

with a two-phase method.  Phase 1 minimizes the sum of artificial variables;
its duals give a Farkas-style ray when the problem is infeasible.  Phase 2
runs on the real objective with artificials pinned to zero.

Pricing is Dantzig (most negative reduced cost) with a switch to Bland's rule
after a run of degenerate pivots, which guarantees finiteness.  The basis
inverse is held densely and updated by rank-one elimination, with periodic
refactorization to bound drift.  Geometric-mean row/column equilibration is
applied before the solve and undone on output.

This solver targets correctness and small problems (a few hundred rows); the
higher layers can route large instances to an external backend with the same
result contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure

_AT_LB = 0
_AT_UB = 1
_FREE = 2  # nonbasic free variable parked at zero

_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-9
_COST_TOL = 1e-9
_DEGEN_SWITCH = 60  # consecutive degenerate pivots before Bland's rule
_REFACTOR_EVERY = 100


@dataclass
class StandardResult:
    status: str                  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    obj: float = np.nan
    y: np.ndarray | None = None  # row duals, d(obj)/d(b)
    z: np.ndarray | None = None  # reduced costs (bound duals live here)
    farkas: np.ndarray | None = None  # row vector proving infeasibility
    iterations: int = 0


def _equilibrate(A, b, c, lb, ub, passes=2):
    """Geometric-mean scaling.  Returns scaled copies plus the scale vectors."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    for _ in range(passes):
        M = np.abs(A) * r[:, None] * s[None, :]
        for i in range(m):
            nz = M[i][M[i] > 0]
            if nz.size:
                r[i] /= np.sqrt(nz.min() * nz.max())
        M = np.abs(A) * r[:, None] * s[None, :]
        for j in range(n):
            nz = M[:, j][M[:, j] > 0]
            if nz.size:
                s[j] /= np.sqrt(nz.min() * nz.max())
    As = A * r[:, None] * s[None, :]
    bs = b * r
    cs = c * s
    with np.errstate(invalid="ignore"):
        lbs = np.where(np.isfinite(lb), lb / s, lb)
        ubs = np.where(np.isfinite(ub), ub / s, ub)
    return As, bs, cs, lbs, ubs, r, s


class _Tableau:
    """Revised-simplex working set over the standard form with artificials."""

    def __init__(self, A, b, c_phase2, lb, ub):
        m, n = A.shape
        self.m = m
        self.n_struct = n
        # Artificial block: one column per row, sign chosen after the initial
        # nonbasic point is fixed so every artificial starts nonnegative.
        self.ncols = n + m
        self.A = np.hstack([A, np.zeros((m, m))])
        self.b = b.astype(float)
        self.lb = np.concatenate([lb, np.zeros(m)])
        self.ub = np.concatenate([ub, np.full(m, np.inf)])
        self.c2 = np.concatenate([c_phase2, np.zeros(m)])

        self.status = np.empty(self.ncols, dtype=np.int8)
        for j in range(n):
            if np.isfinite(self.lb[j]):
                self.status[j] = _AT_LB
            elif np.isfinite(self.ub[j]):
                self.status[j] = _AT_UB
            else:
                self.status[j] = _FREE

        x0 = self._nonbasic_values(np.arange(n))
        resid = self.b - A @ x0
        for i in range(m):
            self.A[i, n + i] = 1.0 if resid[i] >= 0 else -1.0
        self.basis = np.arange(n, n + m)
        self.status[n:] = _AT_LB  # irrelevant while basic; reset on leave
        self.xB = np.abs(resid)
        self.Binv = np.diag(np.where(resid >= 0, 1.0, -1.0))
        self.iterations = 0

    def _nonbasic_values(self, cols):
        vals = np.zeros(len(cols))
        for k, j in enumerate(cols):
            if self.status[j] == _AT_LB and np.isfinite(self.lb[j]):
                vals[k] = self.lb[j]
            elif self.status[j] == _AT_UB and np.isfinite(self.ub[j]):
                vals[k] = self.ub[j]
        return vals

    def full_x(self):
        x = np.zeros(self.ncols)
        nonbasic = np.setdiff1d(np.arange(self.ncols), self.basis, assume_unique=False)
        x[nonbasic] = self._nonbasic_values(nonbasic)
        x[self.basis] = self.xB
        return x

    def _refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by pivots
            raise NumericalFailure("basis became singular") from exc
        x = self.full_x()
        nonbasic_contrib = self.b - self.A @ x + self.A[:, self.basis] @ self.xB
        self.xB = self.Binv @ nonbasic_contrib

    def run(self, c, allow_unbounded):
        """Minimize c over the current region.  Returns 'optimal'/'unbounded'."""
        m, ncols = self.m, self.ncols
        degen_run = 0
        max_iter = 2000 + 60 * (m + ncols)
        while True:
            self.iterations += 1
            if self.iterations % _REFACTOR_EVERY == 0:
                self._refactor()
            if self.iterations > max_iter:
                raise NumericalFailure(
                    f"simplex iteration limit ({max_iter}) exhausted"
                )
            y = c[self.basis] @ self.Binv
            in_basis = np.zeros(ncols, dtype=bool)
            in_basis[self.basis] = True
            nonbasic = np.flatnonzero(~in_basis)
            d = c[nonbasic] - y @ self.A[:, nonbasic]

            st = self.status[nonbasic]
            can_inc = ((st == _AT_LB) | (st == _FREE)) & (d < -_COST_TOL)
            can_dec = ((st == _AT_UB) | (st == _FREE)) & (d > _COST_TOL)
            eligible = can_inc | can_dec
            if not eligible.any():
                return "optimal", y

            use_bland = degen_run >= _DEGEN_SWITCH
            idx = np.flatnonzero(eligible)
            if use_bland:
                pick = idx[np.argmin(nonbasic[idx])]
            else:
                pick = idx[np.argmax(np.abs(d[idx]))]
            j = nonbasic[pick]
            direction = 1.0 if can_inc[pick] else -1.0

            u = self.Binv @ self.A[:, j]
            # Ratio test: basic variables move by -t*direction*u.
            step = np.inf
            leave = -1
            leave_to = _AT_LB
            su = direction * u
            for i in range(m):
                if su[i] > _PIVOT_TOL:
                    lo = self.lb[self.basis[i]]
                    if np.isfinite(lo):
                        t = (self.xB[i] - lo) / su[i]
                        if t < step - 1e-12 or (
                            abs(t - step) <= 1e-12
                            and (leave < 0 or self.basis[i] < self.basis[leave])
                        ):
                            step, leave, leave_to = t, i, _AT_LB
                elif su[i] < -_PIVOT_TOL:
                    hi = self.ub[self.basis[i]]
                    if np.isfinite(hi):
                        t = (self.xB[i] - hi) / su[i]
                        if t < step - 1e-12 or (
                            abs(t - step) <= 1e-12
                            and (leave < 0 or self.basis[i] < self.basis[leave])
                        ):
                            step, leave, leave_to = t, i, _AT_UB
            span = self.ub[j] - self.lb[j]
            bound_flip = np.isfinite(span) and span < step
            if bound_flip:
                step = span
            if not np.isfinite(step):
                if allow_unbounded:
                    return "unbounded", None
                raise NumericalFailure("phase-1 subproblem unbounded")

            if step < 1e-11:
                degen_run += 1
            else:
                degen_run = 0

            self.xB -= step * su
            if bound_flip:
                self.status[j] = _AT_UB if direction > 0 else _AT_LB
                continue

            # Pivot: j enters at row `leave`.
            out = self.basis[leave]
            self.status[out] = leave_to
            entering_val = (
                self.lb[j] if self.status[j] == _AT_LB and np.isfinite(self.lb[j])
                else self.ub[j] if self.status[j] == _AT_UB and np.isfinite(self.ub[j])
                else 0.0
            )
            self.basis[leave] = j
            self.xB[leave] = entering_val + direction * step
            piv = u[leave]
            if abs(piv) < _PIVOT_TOL:
                self._refactor()
                continue
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(u, row)
            self.Binv[leave] = row


def solve_standard(A, b, c, lb, ub, scale=True):
    """Two-phase simplex on the standard form; see module docstring."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape
    if m == 0:
        # Pure box problem: minimize each coordinate independently.
        x = np.where(c > 0, lb, np.where(c < 0, ub, np.where(np.isfinite(lb), lb, 0.0)))
        x = np.where(np.isfinite(x), x, 0.0)
        if np.any((c > 0) & ~np.isfinite(lb)) or np.any((c < 0) & ~np.isfinite(ub)):
            return StandardResult(status="unbounded")
        return StandardResult(status="optimal", x=x, obj=float(c @ x),
                              y=np.zeros(0), z=c.copy())

    if scale:
        As, bs, cs, lbs, ubs, rsc, csc = _equilibrate(A, b, c, lb, ub)
    else:
        As, bs, cs, lbs, ubs = A, b, c, lb, ub
        rsc = np.ones(m)
        csc = np.ones(n)

    tab = _Tableau(As, bs, cs, lbs, ubs)

    # Phase 1: drive artificials to zero.
    c1 = np.zeros(tab.ncols)
    c1[tab.n_struct:] = 1.0
    status, y1 = tab.run(c1, allow_unbounded=False)
    art_level = float(c1[tab.basis] @ tab.xB)
    if art_level > 1e-7:
        # Unscale the Farkas row: y proves y@b > sup_{box} y@A@x.
        farkas = y1 * rsc
        return StandardResult(status="infeasible", farkas=farkas,
                              iterations=tab.iterations)

    # Pin artificials and minimize the true objective.
    tab.ub[tab.n_struct:] = 0.0
    tab.lb[tab.n_struct:] = 0.0
    status, y2 = tab.run(tab.c2, allow_unbounded=True)
    if status == "unbounded":
        return StandardResult(status="unbounded", iterations=tab.iterations)

    xfull = tab.full_x()
    x = xfull[: tab.n_struct] * csc
    y = y2 * rsc
    z = c - y @ A
    return StandardResult(status="optimal", x=x, obj=float(c @ x), y=y, z=z,
                          iterations=tab.iterations)
