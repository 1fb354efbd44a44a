"""Convergence studies and work-precision sweeps over the benchmark problems."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .integrators import InnerSolverConfig, NewtonConfig, StepFailure, integrate
from .problems import Problem, make_problem, reference_solution

__all__ = [
    "ConvergenceRow",
    "ConvergenceStudy",
    "WorkPrecisionRow",
    "error_norm",
    "fit_slope",
    "run_convergence",
    "run_work_precision",
    "matched_speedups",
    "reference_state",
    "SLOPE_WINDOW",
]

SLOPE_WINDOW = (1e-13, 1e-2)


def error_norm(diff: np.ndarray, norm: str = "l2") -> float:
    """``l2`` is the Euclidean norm divided by ``sqrt(d)``; ``linf`` the max norm."""
    diff = np.asarray(diff, dtype=float)
    if norm == "l2":
        return float(np.linalg.norm(diff) / math.sqrt(diff.size))
    if norm == "linf":
        return float(np.max(np.abs(diff)))
    raise ValueError(f"unknown norm {norm!r}; use 'l2' or 'linf'")


def fit_slope(
    H: Sequence[float], errors: Sequence[Optional[float]], window: Tuple[float, float] = SLOPE_WINDOW
) -> Optional[float]:
    """Least-squares slope of log(error) against log(H).

    Only points with a finite error inside ``window`` count; fewer than two
    such points give ``None``.
    """
    lo, hi = window
    pts = [
        (math.log(h), math.log(e))
        for h, e in zip(H, errors)
        if e is not None and math.isfinite(e) and lo <= e <= hi
    ]
    if len(pts) < 2 or len({p[0] for p in pts}) < 2:
        return None
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def _problem(problem: Union[str, Problem], overrides=None) -> Tuple[str, Problem]:
    if isinstance(problem, Problem):
        return problem.system.name, problem
    return problem, make_problem(problem, overrides)


def reference_state(p: Problem, tol: float = 1e-12) -> np.ndarray:
    """Terminal state: the exact solution when known, otherwise an adaptive reference run."""
    t1 = p.t_span[1]
    if p.system.exact_solution is not None:
        return np.asarray(p.system.exact_solution(t1), dtype=float)
    return reference_solution(p.system.without_split(), p.t_span, p.y0, tol=tol)


def _config_dict(cfg: Any) -> Dict[str, Any]:
    try:
        return asdict(cfg)
    except TypeError:
        return {}


@dataclass
class ConvergenceRow:
    steps: int
    H: float
    error: Optional[float]
    seconds: float
    failure: Optional[str] = None


@dataclass
class ConvergenceStudy:
    scheme: str
    problem: str
    config: Dict[str, Any]
    steps: List[int]
    norm: str = "l2"
    rows: List[ConvergenceRow] = field(default_factory=list)
    slope: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _check_steps(steps: Sequence[int]) -> List[int]:
    steps = [int(n) for n in steps]
    if any(n < 1 for n in steps):
        raise ValueError("step counts must be positive")
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError("step counts must be strictly increasing")
    return steps


def run_convergence(
    scheme: str,
    problem: Union[str, Problem],
    steps: Sequence[int],
    *,
    overrides: Union[None, dict, str] = None,
    reference: Optional[np.ndarray] = None,
    norm: str = "l2",
    inner: Optional[InnerSolverConfig] = None,
    newton: Optional[NewtonConfig] = None,
    reference_tol: float = 1e-12,
) -> ConvergenceStudy:
    """Integrate with ``H = T / N`` for every ``N`` in ``steps`` and fit the slope.

    A row whose integration fails keeps ``error=None`` and its message, and
    is left out of the fit.
    """
    steps = _check_steps(steps)
    name, p = _problem(problem, overrides)
    error_norm(np.zeros(1), norm)
    study = ConvergenceStudy(str(scheme), name, _config_dict(p.config), steps, norm)
    if not steps:
        return study
    if reference is None:
        reference = reference_state(p, reference_tol)
    t0, t1 = p.t_span
    for n in steps:
        H = (t1 - t0) / n
        start = time.perf_counter()
        try:
            res = integrate(scheme, p.system, p.t_span, p.y0, H, inner, newton, embedded=False, store=False)
            err = error_norm(res.y_final - reference, norm)
            study.rows.append(ConvergenceRow(n, H, err, time.perf_counter() - start))
        except (StepFailure, FloatingPointError, ValueError) as exc:
            study.rows.append(ConvergenceRow(n, H, None, time.perf_counter() - start, str(exc)))
    study.slope = fit_slope([r.H for r in study.rows], [r.error for r in study.rows])
    return study


@dataclass
class WorkPrecisionRow:
    scheme: str
    problem: str
    H: float
    error: Optional[float]
    seconds: Optional[float]
    newton_iters: int = 0
    inner_steps: int = 0
    inner_mode: Optional[str] = None
    substeps: Optional[int] = None
    failure: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)


def run_work_precision(
    schemes: Sequence[str],
    problem: Union[str, Problem],
    H_list: Sequence[float],
    *,
    overrides: Union[None, dict, str] = None,
    reference: Optional[np.ndarray] = None,
    inner: Optional[InnerSolverConfig] = None,
    newton: Optional[NewtonConfig] = None,
    repeats: int = 3,
    norm: str = "l2",
    reference_tol: float = 1e-12,
) -> List[WorkPrecisionRow]:
    """Error and median wall time (over ``repeats`` runs) for every scheme and ``H``.

    Only the integration loop is timed. Single-rate base tableaus get no
    inner-solver columns.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    rows: List[WorkPrecisionRow] = []
    if not H_list or not schemes:
        return rows
    name, p = _problem(problem, overrides)
    if reference is None:
        reference = reference_state(p, reference_tol)
    inner = inner or InnerSolverConfig()
    from .methods import BASE_TABLEAUS

    for scheme in schemes:
        multirate = scheme not in BASE_TABLEAUS
        mode = inner.mode if multirate else None
        substeps = inner.substeps if multirate and inner.mode != "adaptive" else None
        for H in H_list:
            times = []
            try:
                for _ in range(repeats):
                    start = time.perf_counter()
                    res = integrate(scheme, p.system, p.t_span, p.y0, float(H), inner, newton,
                                    embedded=False, store=False)
                    times.append(time.perf_counter() - start)
            except (StepFailure, FloatingPointError, ValueError) as exc:
                rows.append(WorkPrecisionRow(scheme, name, float(H), None, None,
                                             inner_mode=mode, substeps=substeps, failure=str(exc)))
                continue
            rows.append(
                WorkPrecisionRow(
                    scheme,
                    name,
                    float(H),
                    error_norm(res.y_final - reference, norm),
                    max(statistics.median(times), 1e-9),
                    res.stats.newton_iterations,
                    res.stats.inner_steps,
                    mode,
                    substeps,
                )
            )
    return rows


def _interp_time(curve: List[WorkPrecisionRow], error: float) -> Optional[float]:
    """Cheapest time on the piecewise log-log curve ``curve`` (ordered by H) at ``error``."""
    best = None
    for a, b in zip(curve, curve[1:]):
        lo, hi = sorted((a.error, b.error))
        if not (lo <= error <= hi):
            continue
        if hi == lo:
            t = min(a.seconds, b.seconds)
        else:
            w = (math.log(error) - math.log(a.error)) / (math.log(b.error) - math.log(a.error))
            t = math.exp(math.log(a.seconds) + w * (math.log(b.seconds) - math.log(a.seconds)))
        best = t if best is None else min(best, t)
    return best


def matched_speedups(
    rows: Sequence[WorkPrecisionRow], baseline: str, candidate: str, match_factor: float = 2.0
) -> List[Tuple[float, float]]:
    """``(error, speedup)`` for each ``candidate`` row with a matching ``baseline`` time.

    The baseline time at the candidate's error comes from log-log
    interpolation between neighbouring baseline runs (by ``H``). When no
    segment brackets the error, the cheapest baseline run whose error is
    within ``match_factor`` counts instead. Candidate rows with no match are
    skipped.
    """
    ok = [r for r in rows if r.error is not None and r.error > 0 and r.seconds]
    base = sorted((r for r in ok if r.scheme == baseline), key=lambda r: r.H)
    out = []
    for r in (r for r in ok if r.scheme == candidate):
        t = _interp_time(base, r.error)
        if t is None:
            near = [b.seconds for b in base if r.error / match_factor <= b.error <= r.error * match_factor]
            t = min(near) if near else None
        if t is not None:
            out.append((r.error, t / r.seconds))
    return out
