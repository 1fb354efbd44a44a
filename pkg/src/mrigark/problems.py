"""Benchmark problems: Gray--Scott reaction-diffusion, KPR and the inverter chain."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .integrators import InnerSolverConfig, PartitionedSystem, inner_solve
from .stability import omega_matrix

__all__ = [
    "GrayScottConfig",
    "KprConfig",
    "InverterChainConfig",
    "Problem",
    "gray_scott",
    "kpr",
    "inverter_chain",
    "inverter_input",
    "inverter_g",
    "reference_solution",
    "make_problem",
    "PROBLEMS",
    "NonPositiveStateError",
]


class NonPositiveStateError(ValueError):
    pass


@dataclass(frozen=True)
class Problem:
    system: PartitionedSystem
    y0: np.ndarray
    t_span: Tuple[float, float]
    config: Any


# -- Gray--Scott -------------------------------------------------------------------


@dataclass(frozen=True)
class GrayScottConfig:
    """Periodic ``n x n`` grid on the unit square, spacing ``1/n``.

    ``initial="smooth"`` starts from ``u = 1 - b/2, v = b/4`` with the
    periodic bump ``b = sin^2(pi x) sin^2(pi y)``. ``initial="patch"`` uses
    ``(u, v) = (1, 0)`` except on a centered square of side ``patch`` where
    ``(u, v) = (0.5, 0.25)``; its jumps excite the stiff diffusion modes.
    """

    n: int = 16
    eps_u: float = 0.0625
    eps_v: float = 0.0312
    k: float = 0.0520
    f: float = 0.0180
    t_final: float = 30.0
    initial: str = "smooth"
    patch: float = 0.25

    def __post_init__(self):
        if self.n < 8:
            raise ValueError("Gray-Scott grid needs n >= 8")
        if self.initial not in ("smooth", "patch"):
            raise ValueError(f"initial must be 'smooth' or 'patch', got {self.initial!r}")


def periodic_laplacian(n: int) -> sp.csr_matrix:
    """Five-point Laplacian on a periodic ``n x n`` grid with spacing ``1/n``."""
    h = 1.0 / n
    e = np.ones(n)
    d1 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil")
    d1[0, n - 1] = 1.0
    d1[n - 1, 0] = 1.0
    d1 = d1.tocsr()
    eye = sp.identity(n, format="csr")
    return ((sp.kron(eye, d1) + sp.kron(d1, eye)) / h**2).tocsr()


def gray_scott_initial(cfg: GrayScottConfig) -> np.ndarray:
    n = cfg.n
    x = np.arange(n) / n
    xx, yy = np.meshgrid(x, x, indexing="ij")
    if cfg.initial == "smooth":
        b = (np.sin(np.pi * xx) ** 2 * np.sin(np.pi * yy) ** 2).ravel()
        return np.concatenate([1.0 - 0.5 * b, 0.25 * b])
    inside = (np.abs(xx - 0.5) <= cfg.patch / 2) & (np.abs(yy - 0.5) <= cfg.patch / 2)
    u = np.where(inside, 0.5, 1.0).ravel()
    v = np.where(inside, 0.25, 0.0).ravel()
    return np.concatenate([u, v])


def gray_scott(cfg: GrayScottConfig = GrayScottConfig()) -> PartitionedSystem:
    """Diffusion is the slow part, reaction the fast part; state is ``[u; v]``."""
    n2 = cfg.n * cfg.n
    lap = periodic_laplacian(cfg.n)
    diff = sp.block_diag([cfg.eps_u * lap, cfg.eps_v * lap], format="csr")
    ff, kk = cfg.f, cfg.k

    def slow(t, y):
        return diff @ y

    def fast(t, y):
        u, v = y[:n2], y[n2:]
        uv2 = u * v * v
        return np.concatenate([-uv2 + ff * (1.0 - u), uv2 - (ff + kk) * v])

    def fast_jac(t, y):
        u, v = y[:n2], y[n2:]
        return sp.bmat(
            [
                [sp.diags(-v * v - ff), sp.diags(-2.0 * u * v)],
                [sp.diags(v * v), sp.diags(2.0 * u * v - ff - kk)],
            ],
            format="csr",
        )

    return PartitionedSystem(
        dim=2 * n2,
        fast_rhs=fast,
        slow_rhs=slow,
        fast_jac=fast_jac,
        slow_jac=lambda t, y: diff,
        name="gray-scott",
    )


# -- KPR ------------------------------------------------------------------------------


@dataclass(frozen=True)
class KprConfig:
    lambda_f: float = -10.0
    lambda_s: float = -1.0
    xi: float = 0.1
    alpha: float = 1.0
    omega: float = 20.0
    t_final: float = 5.0 * math.pi / 2.0


def kpr_exact(cfg: KprConfig) -> Callable[[float], np.ndarray]:
    w = cfg.omega
    return lambda t: np.array([math.sqrt(3.0 + math.cos(w * t)), math.sqrt(2.0 + math.cos(t))])


def kpr(cfg: KprConfig = KprConfig()) -> PartitionedSystem:
    """Two-component system, first component fast, with known exact solution."""
    om = omega_matrix(cfg.lambda_f, cfg.lambda_s, cfg.xi, cfg.alpha).real
    w = cfg.omega

    def parts(t, y):
        yf, ys = y
        if yf <= 0.0 or ys <= 0.0:
            raise NonPositiveStateError(f"KPR state must stay positive, got {y!r} at t={t!r}")
        r = np.array([(-3.0 + yf * yf - math.cos(w * t)) / (2 * yf),
                      (-2.0 + ys * ys - math.cos(t)) / (2 * ys)])
        drift = np.array([w * math.sin(w * t) / (2 * yf), math.sin(t) / (2 * ys)])
        return om @ r - drift, r

    def fast(t, y):
        return np.array([parts(t, y)[0][0], 0.0])

    def slow(t, y):
        return np.array([0.0, parts(t, y)[0][1]])

    def dr(t, y):
        # derivative of each row of (r, drift) with respect to its own component
        yf, ys = y
        d_r = np.array([0.5 + (3.0 + math.cos(w * t)) / (2 * yf * yf),
                        0.5 + (2.0 + math.cos(t)) / (2 * ys * ys)])
        d_drift = np.array([-w * math.sin(w * t) / (2 * yf * yf), -math.sin(t) / (2 * ys * ys)])
        return d_r, d_drift

    def jac_full(t, y):
        d_r, d_drift = dr(t, y)
        return om * d_r[None, :] - np.diag(d_drift)

    def fast_jac(t, y):
        j = jac_full(t, y)
        j[1] = 0.0
        return j

    def slow_jac(t, y):
        j = jac_full(t, y)
        j[0] = 0.0
        return j

    return PartitionedSystem(
        dim=2,
        fast_rhs=fast,
        slow_rhs=slow,
        fast_mask=np.array([True, False]),
        fast_jac=fast_jac,
        slow_jac=slow_jac,
        exact_solution=kpr_exact(cfg),
        name="kpr",
    )


# -- inverter chain ------------------------------------------------------------------------


@dataclass(frozen=True)
class InverterChainConfig:
    """Chain of ``m`` inverters driven by a trapezoidal input pulse.

    The fast partition is a window of inverters around the moving signal:
    every inverter with ``|U'| > active_tol`` plus ``half_width`` neighbours on
    each side (the first ``half_width`` inverters also join while the input
    changes during the step).
    """

    m: int = 500
    u_op: float = 5.0
    u_t: float = 1.0
    gain: float = 100.0
    u0: float = 0.0
    t_final: float = 100.0
    half_width: int = 20
    active_tol: float = 1e-3


def inverter_input(t: float) -> float:
    if 5.0 <= t <= 10.0:
        return t - 5.0
    if 10.0 <= t <= 15.0:
        return 5.0
    if 15.0 <= t <= 17.0:
        return 2.5 * (17.0 - t)
    return 0.0


def inverter_g(ug, ud, us, u_t=1.0):
    """``max(ug - us - u_t, 0)^2 - max(ug - ud - u_t, 0)^2``."""
    return np.maximum(ug - us - u_t, 0.0) ** 2 - np.maximum(ug - ud - u_t, 0.0) ** 2


def inverter_initial(cfg: InverterChainConfig) -> np.ndarray:
    i = np.arange(1, cfg.m + 1)
    return np.where(i % 2 == 0, 6.246e-3, 5.0)


def _inverter_parts(cfg: InverterChainConfig):
    ut, gam, uop, u0 = cfg.u_t, cfg.gain, cfg.u_op, cfg.u0
    m = cfg.m
    # lower bidiagonal CSR pattern: row 0 holds (0,0), row i holds (i,i-1), (i,i)
    indptr = np.concatenate([[0], np.arange(1, 2 * m, 2)])
    indices = np.empty(2 * m - 1, dtype=np.int32)
    indices[0] = 0
    indices[1::2] = np.arange(m - 1)
    indices[2::2] = np.arange(1, m)
    rows = np.repeat(np.arange(m), np.diff(indptr))

    def gates(t, y):
        gate = np.empty(m)
        gate[0] = inverter_input(t)
        gate[1:] = y[:-1]
        return gate

    def rhs(t, y):
        return uop - y - gam * inverter_g(gates(t, y), y, u0, ut)

    def jac(t, y, row_weight=None):
        gate = gates(t, y)
        on_s = np.maximum(gate - u0 - ut, 0.0)
        on_d = np.maximum(gate - y - ut, 0.0)
        # d g / d ug = 2 on_s - 2 on_d ; d g / d ud = 2 on_d
        data = np.empty(2 * m - 1)
        data[0::2] = -1.0 - gam * 2.0 * on_d
        data[1::2] = -gam * (2.0 * on_s - 2.0 * on_d)[1:]
        if row_weight is not None:
            data *= row_weight[rows]
        return sp.csr_matrix((data, indices, indptr), shape=(m, m))

    return rhs, jac


def inverter_window(cfg: InverterChainConfig, t: float, y: np.ndarray, H: float, rhs) -> np.ndarray:
    """Boolean fast mask for the step ``[t, t + H]``."""
    m, hw = cfg.m, cfg.half_width
    mask = np.zeros(m, dtype=bool)
    active = np.flatnonzero(np.abs(rhs(t, y)) > cfg.active_tol)
    if active.size:
        lo = max(active.min() - hw, 0)
        hi = min(active.max() + hw + 1, m)
        mask[lo:hi] = True
    if t < 17.0 and t + H > 5.0:
        mask[: min(hw, m)] = True
    return mask


def inverter_chain(cfg: InverterChainConfig = InverterChainConfig()) -> PartitionedSystem:
    """Component-partitioned chain whose fast window is recomputed every step."""
    rhs, jac = _inverter_parts(cfg)

    def split(mask):
        fm = mask.astype(float)
        sm = 1.0 - fm
        return PartitionedSystem(
            dim=cfg.m,
            fast_rhs=lambda t, y: fm * rhs(t, y),
            slow_rhs=lambda t, y: sm * rhs(t, y),
            fast_mask=mask,
            fast_jac=lambda t, y: jac(t, y, fm),
            slow_jac=lambda t, y: jac(t, y, sm),
            name="inverter-chain",
        )

    def repartition(t, y, H):
        return split(inverter_window(cfg, t, y, H, rhs))

    base = split(np.zeros(cfg.m, dtype=bool))
    base.repartition = repartition
    return base


# -- reference solutions ----------------------------------------------------------------------


def reference_solution(
    sys: PartitionedSystem,
    t_span: Tuple[float, float],
    y0: np.ndarray,
    times: Optional[Sequence[float]] = None,
    tol: float = 1e-12,
) -> np.ndarray:
    """States at ``times`` (default: the end point) from an adaptive 5(4) solve of the full system.

    Integration restarts at every checkpoint, so checkpoints are hit exactly.
    """
    t0, t1 = map(float, t_span)
    times = [t1] if times is None else [float(x) for x in times]
    cfg = InnerSolverConfig(mode="adaptive", abs_tol=tol, rel_tol=tol)
    y = np.array(y0, dtype=float, copy=True)
    t = t0
    out = []
    for tc in times:
        if tc < t:
            raise ValueError("reference checkpoints must be increasing and inside t_span")
        if tc > t:
            y = inner_solve(lambda th, v, t=t: sys.rhs(t + th, v), y, tc - t, cfg).v
            t = tc
        out.append(y.copy())
    return np.array(out) if len(out) > 1 else out[0]


# -- registry ---------------------------------------------------------------------------------

PROBLEMS = {
    "gray-scott": GrayScottConfig,
    "kpr": KprConfig,
    "inverter-chain": InverterChainConfig,
}


def _config(name: str, overrides: Union[None, dict, str]) -> Any:
    key = name.lower().replace("_", "-")
    if key not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(PROBLEMS)}")
    cls = PROBLEMS[key]
    if overrides is None:
        return cls()
    if isinstance(overrides, str):
        with open(overrides, encoding="utf-8") as fh:
            overrides = json.load(fh)
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise KeyError(f"unknown {key} config keys: {', '.join(sorted(unknown))}")
    return cls(**overrides)


def make_problem(name: str, overrides: Union[None, dict, str] = None) -> Problem:
    """Build a problem by name, with optional config overrides (dict or JSON file path)."""
    cfg = _config(name, overrides)
    if isinstance(cfg, GrayScottConfig):
        return Problem(gray_scott(cfg), gray_scott_initial(cfg), (0.0, cfg.t_final), cfg)
    if isinstance(cfg, KprConfig):
        sys = kpr(cfg)
        return Problem(sys, sys.exact_solution(0.0), (0.0, cfg.t_final), cfg)
    return Problem(inverter_chain(cfg), inverter_initial(cfg), (0.0, cfg.t_final), cfg)
