"""Heuristic worst-case oracle: many starts, alternating block maximization.

Each scenario point seeds an alternation between two LPs: multipliers at
fixed w, then w at fixed multipliers.  Both half-steps maximize the same
bilinear objective over their own block, so the value sequence is
nondecreasing and the final multiplier step leaves the reported violation
equal to the exact fixed-w dual value.

Scenario starts come from a fixed uniform sample of the initial box (drawn
once per run from the seed) plus per-iteration projections of the forecast
onto every current facet.  Scenarios are independent, so the batch can run
across a process pool; results merge in scenario order, which keeps output
identical for any worker count.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from .caseio import StudyConfig
from .dispatch_model import CompactPsd
from .errors import DrrError, NumericalFailure, ZeroNormal
from .lp import OPTIMAL, LinearProgram, solve_lp
from .maxmin_milp import MaxMinSolution, cut_vector, dualize
from .polytope import Polytope

_CUT_DEDUPE_TOL = 1e-6


@dataclass(frozen=True)
class ScenarioSet:
    s1: tuple[np.ndarray, ...]
    s2: tuple[np.ndarray, ...]

    def combined(self) -> list[np.ndarray]:
        return list(self.s1) + list(self.s2)


def gen_s1(W0: Polytope, n: int, seed: int) -> list[np.ndarray]:
    """Uniform per-coordinate sample of the initial box; fixed across a run."""
    lo, hi = W0.box_bounds()
    if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
        raise ValueError("initial region must be a bounded box")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(size=(n, W0.dim))
    return [lo + p * (hi - lo) for p in pts]


def gen_s2(W: Polytope, w_bar) -> list[np.ndarray]:
    """Projection of the forecast onto each facet hyperplane of W."""
    w_bar = np.asarray(w_bar, dtype=float)
    pts = []
    for i in range(W.n_facets):
        h = W.H[i]
        hh = float(h @ h)
        if hh < 1e-24:
            raise ZeroNormal(f"facet {i} has a zero normal")
        pts.append(w_bar - ((h @ w_bar - W.f[i]) / hh) * h)
    return pts


def make_scenarios(W0: Polytope, W: Polytope, w_bar, cfg: StudyConfig) -> ScenarioSet:
    return ScenarioSet(s1=tuple(gen_s1(W0, cfg.s1_count, cfg.seed)),
                       s2=tuple(gen_s2(W, w_bar)))


def _project_into(W: Polytope, w0: np.ndarray, backend) -> np.ndarray:
    """1-norm projection of w0 onto W (an LP, deterministic)."""
    n = W.dim
    c = np.concatenate([np.zeros(n), np.ones(n)])
    M_in = np.vstack([
        np.hstack([W.H, np.zeros((W.n_facets, n))]),
        np.hstack([np.eye(n), -np.eye(n)]),
        np.hstack([-np.eye(n), -np.eye(n)]),
    ])
    r_in = np.concatenate([W.f, w0, -w0])
    lp = LinearProgram(c=c, sense="min", M_in=M_in, r_in=r_in)
    sol = solve_lp(lp, backend=backend)
    if sol.status != OPTIMAL:
        raise NumericalFailure("projection into the current region failed")
    return sol.x[:n]


def alternate_solve(m: CompactPsd, W: Polytope, w0, cfg: StudyConfig) -> MaxMinSolution:
    """Alternating maximization from one starting point."""
    dmm = dualize(m, W)
    w = np.asarray(w0, dtype=float)
    if not W.contains(w, tol=1e-9):
        w = _project_into(W, w, cfg.lp_backend)

    sequence: list[float] = []
    F_prev = -np.inf
    alpha = delta = None
    rounds = 0
    for rounds in range(1, cfg.alt_max_rounds + 1):
        mult = solve_lp(dmm.multiplier_lp_at(w), backend=cfg.lp_backend)
        if mult.status != OPTIMAL:
            raise NumericalFailure(f"multiplier step returned {mult.status}")
        F = mult.objective
        na = dmm.n_alpha
        alpha, delta = mult.x[:na], mult.x[na:]
        sequence.append(F)
        if F - F_prev <= cfg.eps_alt or rounds == cfg.alt_max_rounds:
            break  # always stop on a multiplier step
        F_prev = F
        wstep = solve_lp(dmm.w_lp_at(alpha, delta), backend=cfg.lp_backend)
        if wstep.status != OPTIMAL:
            raise NumericalFailure(f"w step returned {wstep.status}")
        w = wstep.x
        sequence.append(wstep.objective + float(alpha @ m.b - delta @ m.d))
    return MaxMinSolution(F=float(sequence[-1] if rounds and sequence else 0.0),
                          w_star=w, alpha=alpha, delta=delta, theta=None,
                          method="iblp",
                          diagnostics={"rounds": rounds,
                                       "sequence": sequence})


# Worker-side globals installed once per process by the pool initializer.
_WORKER_ARGS: tuple | None = None


def _init_worker(m, W, cfg):
    global _WORKER_ARGS
    _WORKER_ARGS = (m, W, cfg)


def _solve_scenario(task):
    idx, w0 = task
    m, W, cfg = _WORKER_ARGS
    try:
        sol = alternate_solve(m, W, w0, cfg)
        sol.diagnostics["scenario"] = idx
        return idx, sol, None
    except DrrError as exc:
        return idx, None, f"scenario {idx}: {exc}"


def run_iblp(m: CompactPsd, W: Polytope, scenarios: ScenarioSet,
             cfg: StudyConfig) -> list[MaxMinSolution]:
    """Alternate-solve every scenario; keep deduplicated positive violations.

    Failures are collected per scenario and only raised when no scenario
    succeeds.  The result order follows scenario order for any thread count.
    """
    tasks = list(enumerate(scenarios.combined()))
    if not tasks:
        raise ValueError("scenario set is empty")

    if cfg.thread_count > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=cfg.thread_count, initializer=_init_worker,
                initargs=(m, W, cfg)) as pool:
            outcomes = list(pool.map(_solve_scenario, tasks,
                                     chunksize=max(1, len(tasks) // (4 * cfg.thread_count))))
    else:
        _init_worker(m, W, cfg)
        outcomes = [_solve_scenario(t) for t in tasks]

    failures = [err for _, _, err in outcomes if err]
    solutions = [sol for _, sol, _ in outcomes if sol is not None]
    if not solutions:
        raise NumericalFailure(
            "all scenarios failed: " + "; ".join(failures[:5]))

    positive = [s for s in solutions if s.F > cfg.eps_term]
    kept: list[MaxMinSolution] = []
    kept_vectors: list[np.ndarray] = []
    for s in positive:
        normal, offset = cut_vector(s, m)
        norm = np.linalg.norm(normal)
        if norm < 1e-12:
            kept.append(s)  # degenerate direction; engine decides what it means
            continue
        vec = np.concatenate([normal, [offset]]) / norm
        if any(np.abs(vec - v).max() < _CUT_DEDUPE_TOL for v in kept_vectors):
            continue
        kept_vectors.append(vec)
        kept.append(s)
    return kept
