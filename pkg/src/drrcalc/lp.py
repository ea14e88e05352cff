"""Linear-program contract shared by every optimization layer.

A :class:`LinearProgram` is

    min or max   c @ x
    subject to   M_eq @ x == r_eq
                 M_in @ x <= r_in
                 lb <= x <= ub      (entries may be +-inf)

and a solve returns an :class:`LpSolution` with certified duals.

Dual sign convention (fixed once, asserted by ``certificate_errors``):
``mu_eq`` is free and equals d(objective)/d(r_eq); ``mu_in`` is nonnegative
for both senses, with d(objective)/d(r_in) = -mu_in for "min" and +mu_in for
"max".  Bound duals ``nu_lb``/``nu_ub`` are nonnegative.  Stationarity:

    min:  c - M_eq.T @ mu_eq + M_in.T @ mu_in = nu_lb - nu_ub
    max:  c - M_eq.T @ mu_eq - M_in.T @ mu_in = nu_ub - nu_lb

This matches the Lagrangian of a slacked minimization with free equality
multipliers and nonnegative inequality multipliers, so the duals of a
feasibility solve can be consumed directly as cut coefficients.

Two interchangeable backends implement the contract: ``"internal"`` (the
dense simplex in :mod:`drrcalc.simplex`) and ``"scipy"`` (HiGHS through
``scipy.optimize.linprog``).  ``DEFAULT_BACKEND`` picks scipy for speed; the
internal solver is cross-checked against it in the test suite and can be
forced everywhere via configuration.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import simplex
from .errors import DimensionMismatch, NumericalFailure

DEFAULT_BACKEND = "scipy"

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"


def _as_matrix(M, ncols):
    if M is None:
        return np.zeros((0, ncols))
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    return M


@dataclass
class LinearProgram:
    c: np.ndarray
    sense: str = "min"
    M_eq: np.ndarray | None = None
    r_eq: np.ndarray | None = None
    M_in: np.ndarray | None = None
    r_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.M_eq = _as_matrix(self.M_eq, n)
        self.M_in = _as_matrix(self.M_in, n)
        self.r_eq = (np.zeros(0) if self.r_eq is None
                     else np.atleast_1d(np.asarray(self.r_eq, dtype=float)))
        self.r_in = (np.zeros(0) if self.r_in is None
                     else np.atleast_1d(np.asarray(self.r_in, dtype=float)))
        self.lb = (np.full(n, -np.inf) if self.lb is None
                   else np.asarray(self.lb, dtype=float).copy())
        self.ub = (np.full(n, np.inf) if self.ub is None
                   else np.asarray(self.ub, dtype=float).copy())
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        if self.M_eq.shape != (self.r_eq.size, n) or self.M_in.shape != (self.r_in.size, n):
            raise DimensionMismatch(
                f"constraint blocks inconsistent with {n} variables: "
                f"eq {self.M_eq.shape}x{self.r_eq.size}, in {self.M_in.shape}x{self.r_in.size}"
            )
        if self.lb.size != n or self.ub.size != n:
            raise DimensionMismatch("bound vectors must match the variable count")
        for name, arr in (("c", self.c), ("M_eq", self.M_eq), ("M_in", self.M_in),
                          ("r_eq", self.r_eq), ("r_in", self.r_in)):
            if np.isnan(arr).any():
                raise DimensionMismatch(f"NaN coefficients in {name}")

    @property
    def nvar(self) -> int:
        return self.c.size


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = np.nan
    mu_eq: np.ndarray | None = None
    mu_in: np.ndarray | None = None
    nu_lb: np.ndarray | None = None
    nu_ub: np.ndarray | None = None
    farkas: np.ndarray | None = None  # (y_eq, y_in) row vector on infeasibility
    backend: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def solve_lp(lp: LinearProgram, backend: str | None = None) -> LpSolution:
    """Solve `lp` and return a status-correct result with certified duals."""
    backend = backend or DEFAULT_BACKEND
    if backend == "internal":
        sol = _solve_internal(lp)
    elif backend == "scipy":
        sol = _solve_scipy(lp)
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    if sol.status == INFEASIBLE and sol.farkas is None:
        sol.farkas = _farkas_from_elastic(lp, backend)
        if sol.farkas is None:
            # The elastic relaxation proved the constraints satisfiable, so
            # the backend's infeasible verdict was the presolve shorthand for
            # "not optimal": a feasible LP without an optimum is unbounded.
            sol.status = UNBOUNDED
    return sol


# --- internal backend ---------------------------------------------------------

def _solve_internal(lp: LinearProgram) -> LpSolution:
    n = lp.nvar
    m_eq = lp.r_eq.size
    m_in = lp.r_in.size
    sign = 1.0 if lp.sense == "min" else -1.0
    # Standard form: append one slack per inequality row.
    A = np.zeros((m_eq + m_in, n + m_in))
    A[:m_eq, :n] = lp.M_eq
    A[m_eq:, :n] = lp.M_in
    A[m_eq:, n:] = np.eye(m_in)
    b = np.concatenate([lp.r_eq, lp.r_in])
    c = np.concatenate([sign * lp.c, np.zeros(m_in)])
    lb = np.concatenate([lp.lb, np.zeros(m_in)])
    ub = np.concatenate([lp.ub, np.full(m_in, np.inf)])

    res = simplex.solve_standard(A, b, c, lb, ub)
    if res.status == "infeasible":
        y = res.farkas
        return LpSolution(status=INFEASIBLE, backend="internal",
                          farkas=np.concatenate([y[:m_eq], y[m_eq:]]))
    if res.status == "unbounded":
        return LpSolution(status=UNBOUNDED, backend="internal")

    y_eq = res.y[:m_eq]
    y_in = res.y[m_eq:]
    z = res.z[:n]
    # res is in min space; bound duals read off the reduced costs identically
    # for both senses, only mu_eq and the objective flip.
    mu_in = np.maximum(-y_in, 0.0)
    nu_lb = np.maximum(z, 0.0)
    nu_ub = np.maximum(-z, 0.0)
    if lp.sense == "min":
        mu_eq = y_eq
        obj = res.obj
    else:
        mu_eq = -y_eq
        obj = -res.obj
    return LpSolution(status=OPTIMAL, x=res.x[:n], objective=float(obj),
                      mu_eq=mu_eq, mu_in=mu_in, nu_lb=nu_lb, nu_ub=nu_ub,
                      backend="internal")


# --- scipy / HiGHS backend -----------------------------------------------------

def _solve_scipy(lp: LinearProgram) -> LpSolution:
    sign = 1.0 if lp.sense == "min" else -1.0
    bounds = list(zip(
        np.where(np.isfinite(lp.lb), lp.lb, -np.inf),
        np.where(np.isfinite(lp.ub), lp.ub, np.inf),
    ))
    res = linprog(
        sign * lp.c,
        A_ub=lp.M_in if lp.r_in.size else None,
        b_ub=lp.r_in if lp.r_in.size else None,
        A_eq=lp.M_eq if lp.r_eq.size else None,
        b_eq=lp.r_eq if lp.r_eq.size else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        return LpSolution(status=INFEASIBLE, backend="scipy")
    if res.status == 3:
        return LpSolution(status=UNBOUNDED, backend="scipy")
    if res.status != 0:
        raise NumericalFailure(f"scipy/HiGHS failed: {res.message}")

    m_eq, m_in = lp.r_eq.size, lp.r_in.size
    y_eq = res.eqlin.marginals if m_eq else np.zeros(0)
    y_in = res.ineqlin.marginals if m_in else np.zeros(0)
    low = res.lower.marginals
    upp = res.upper.marginals
    # linprog ran in min space: same reduced-cost reading for both senses.
    mu_in = np.maximum(-np.asarray(y_in, dtype=float), 0.0)
    nu_lb = np.maximum(low, 0.0)
    nu_ub = np.maximum(-upp, 0.0)
    if lp.sense == "min":
        mu_eq = np.asarray(y_eq, dtype=float)
        obj = res.fun
    else:
        mu_eq = -np.asarray(y_eq, dtype=float)
        obj = -res.fun
    return LpSolution(status=OPTIMAL, x=np.asarray(res.x, dtype=float),
                      objective=float(obj), mu_eq=mu_eq, mu_in=mu_in,
                      nu_lb=nu_lb, nu_ub=nu_ub, backend="scipy")


# --- certificates ----------------------------------------------------------------

def _farkas_from_elastic(lp: LinearProgram, backend: str) -> np.ndarray | None:
    """Build an infeasibility ray from the duals of the elastic relaxation."""
    n = lp.nvar
    m_eq, m_in = lp.r_eq.size, lp.r_in.size
    # min sum of violations; original objective dropped.
    c = np.concatenate([np.zeros(n), np.ones(2 * m_eq + m_in)])
    M_eq = np.hstack([lp.M_eq, np.eye(m_eq), -np.eye(m_eq), np.zeros((m_eq, m_in))])
    M_in = np.hstack([lp.M_in, np.zeros((m_in, 2 * m_eq)), -np.eye(m_in)])
    lb = np.concatenate([lp.lb, np.zeros(2 * m_eq + m_in)])
    ub = np.concatenate([lp.ub, np.full(2 * m_eq + m_in, np.inf)])
    elastic = LinearProgram(c=c, sense="min", M_eq=M_eq, r_eq=lp.r_eq,
                            M_in=M_in, r_in=lp.r_in, lb=lb, ub=ub)
    sol = solve_lp(elastic, backend=backend)
    if not sol.optimal or sol.objective <= 1e-9:
        return None
    # min-sense elastic duals: d(obj)/d(r_eq) = mu_eq, d(obj)/d(r_in) = -mu_in.
    return np.concatenate([sol.mu_eq, -sol.mu_in])


def verify_farkas(lp: LinearProgram, ray: np.ndarray, tol: float = 1e-7) -> float:
    """Return the proven infeasibility margin y@r - sup_box y@M@x (> 0 = proof)."""
    m_eq = lp.r_eq.size
    y_eq = ray[:m_eq]
    y_in = ray[m_eq:]
    if np.any(y_in > tol):
        return -np.inf  # wrong sign for <= rows
    g = y_eq @ lp.M_eq + y_in @ lp.M_in
    sup = 0.0
    for j in range(lp.nvar):
        if g[j] > tol:
            if not np.isfinite(lp.ub[j]):
                return -np.inf
            sup += g[j] * lp.ub[j]
        elif g[j] < -tol:
            if not np.isfinite(lp.lb[j]):
                return -np.inf
            sup += g[j] * lp.lb[j]
    return float(y_eq @ lp.r_eq + y_in @ lp.r_in - sup)


def certificate_errors(lp: LinearProgram, sol: LpSolution) -> dict:
    """Residuals of the optimality certificate; see the module docstring."""
    if not sol.optimal:
        raise ValueError("certificate check requires an Optimal solution")
    x = sol.x
    scale = 1.0 + max(
        np.abs(lp.c).max(initial=0.0),
        np.abs(lp.r_eq).max(initial=0.0),
        np.abs(lp.r_in).max(initial=0.0),
    )
    primal_eq = (np.abs(lp.M_eq @ x - lp.r_eq).max(initial=0.0))
    primal_in = max(0.0, (lp.M_in @ x - lp.r_in).max(initial=-np.inf))
    with np.errstate(invalid="ignore"):
        lo = np.where(np.isfinite(lp.lb), lp.lb - x, 0.0)
        hi = np.where(np.isfinite(lp.ub), x - lp.ub, 0.0)
    primal_bounds = max(lo.max(initial=0.0), hi.max(initial=0.0))

    if lp.sense == "min":
        stat = lp.c - lp.M_eq.T @ sol.mu_eq + lp.M_in.T @ sol.mu_in \
            - sol.nu_lb + sol.nu_ub
        dual_obj = sol.mu_eq @ lp.r_eq - sol.mu_in @ lp.r_in
    else:
        stat = lp.c - lp.M_eq.T @ sol.mu_eq - lp.M_in.T @ sol.mu_in \
            + sol.nu_lb - sol.nu_ub
        dual_obj = sol.mu_eq @ lp.r_eq + sol.mu_in @ lp.r_in
    lbf = np.where(np.isfinite(lp.lb), lp.lb, 0.0)
    ubf = np.where(np.isfinite(lp.ub), lp.ub, 0.0)
    lb_term = float((np.where(np.isfinite(lp.lb), sol.nu_lb, 0.0) * lbf).sum())
    ub_term = float((np.where(np.isfinite(lp.ub), sol.nu_ub, 0.0) * ubf).sum())
    if lp.sense == "min":
        dual_obj += lb_term - ub_term
    else:
        dual_obj += ub_term - lb_term

    comp = np.abs(sol.mu_in * (lp.r_in - lp.M_in @ x)).max(initial=0.0)
    return {
        "primal": max(primal_eq, primal_in, primal_bounds) / scale,
        "stationarity": np.abs(stat).max(initial=0.0) / scale,
        "complementarity": comp / scale,
        "gap": abs(sol.objective - dual_obj) / scale,
        "min_mu_in": float(sol.mu_in.min(initial=0.0)),
    }


# --- debugging export --------------------------------------------------------------

def to_mps(lp: LinearProgram, name: str = "DRRLP") -> str:
    """Render the program in free MPS format (debugging aid)."""
    out = io.StringIO()
    out.write(f"NAME {name}\n")
    if lp.sense == "max":
        out.write("OBJSENSE\n MAX\n")
    out.write("ROWS\n N  OBJ\n")
    for i in range(lp.r_eq.size):
        out.write(f" E  EQ{i}\n")
    for i in range(lp.r_in.size):
        out.write(f" L  IN{i}\n")
    out.write("COLUMNS\n")
    for j in range(lp.nvar):
        if lp.c[j] != 0.0:
            out.write(f" X{j} OBJ {lp.c[j]!r}\n")
        for i in range(lp.r_eq.size):
            if lp.M_eq[i, j] != 0.0:
                out.write(f" X{j} EQ{i} {lp.M_eq[i, j]!r}\n")
        for i in range(lp.r_in.size):
            if lp.M_in[i, j] != 0.0:
                out.write(f" X{j} IN{i} {lp.M_in[i, j]!r}\n")
    out.write("RHS\n")
    for i in range(lp.r_eq.size):
        if lp.r_eq[i] != 0.0:
            out.write(f" RHS EQ{i} {lp.r_eq[i]!r}\n")
    for i in range(lp.r_in.size):
        if lp.r_in[i] != 0.0:
            out.write(f" RHS IN{i} {lp.r_in[i]!r}\n")
    out.write("BOUNDS\n")
    for j in range(lp.nvar):
        lo, hi = lp.lb[j], lp.ub[j]
        if not np.isfinite(lo) and not np.isfinite(hi):
            out.write(f" FR BND X{j}\n")
            continue
        if np.isfinite(lo):
            out.write(f" LO BND X{j} {lo!r}\n")
        else:
            out.write(f" MI BND X{j}\n")
        if np.isfinite(hi):
            out.write(f" UP BND X{j} {hi!r}\n")
    out.write("ENDATA\n")
    return out.getvalue()
