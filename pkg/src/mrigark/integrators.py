"""SPC and IPC multirate steps, the single-rate DIRK step and their solvers.

Implicit stages are solved with a simplified Newton iteration on the full
system. The fast "corrector" ODEs are handed to :func:`inner_solve`, which
runs a Dormand--Prince 5(4) pair (adaptive or fixed substeps) or, for stiff
fast parts, a fixed-substep ESDIRK method.

For component-partitioned systems (``fast_mask`` set) only the fast
components are integrated numerically; the slow components of the corrector
are polynomials in time and are evaluated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .tableaux import ButcherTableau, IpcScheme, MultirateScheme, SpcScheme

__all__ = [
    "PartitionedSystem",
    "StepStats",
    "StepResult",
    "InnerSolverConfig",
    "NewtonConfig",
    "NewtonError",
    "SingularIterationMatrix",
    "InnerSolverError",
    "StepFailure",
    "newton_solve_stage",
    "fd_jacobian",
    "inner_solve",
    "spc_step",
    "ipc_step",
    "dirk_step",
    "integrate",
    "IntegrationResult",
]

Rhs = Callable[[float, np.ndarray], np.ndarray]
Jac = Callable[[float, np.ndarray], Union[np.ndarray, sp.spmatrix]]


class NewtonError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularIterationMatrix(NewtonError):
    pass


class InnerSolverError(RuntimeError):
    def __init__(self, message: str, theta: float):
        super().__init__(message)
        self.theta = theta


class StepFailure(RuntimeError):
    def __init__(self, message: str, step: int, t: float):
        super().__init__(message)
        self.step = step
        self.t = t


# -- problem and bookkeeping types ----------------------------------------------


@dataclass
class PartitionedSystem:
    """``y' = fast_rhs(t, y) + slow_rhs(t, y)``.

    ``fast_mask`` marks a component partition: ``slow_rhs`` must vanish on the
    masked components and ``fast_rhs`` off them. ``repartition(t, y, H)``,
    when given, returns the system to use for the step starting at ``t``
    (used for moving fast windows).
    """

    dim: int
    fast_rhs: Rhs
    slow_rhs: Rhs
    fast_mask: Optional[np.ndarray] = None
    fast_jac: Optional[Jac] = None
    slow_jac: Optional[Jac] = None
    exact_solution: Optional[Callable[[float], np.ndarray]] = None
    repartition: Optional[Callable[[float, np.ndarray, float], "PartitionedSystem"]] = None
    name: str = ""

    def __post_init__(self):
        if self.fast_mask is not None:
            mask = np.asarray(self.fast_mask, dtype=bool)
            if mask.shape != (self.dim,):
                raise ValueError(f"fast_mask must have shape ({self.dim},)")
            self.fast_mask = mask

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.fast_rhs(t, y) + self.slow_rhs(t, y)

    @property
    def has_jacobian(self) -> bool:
        return self.fast_jac is not None and self.slow_jac is not None

    def jac(self, t: float, y: np.ndarray):
        return _add_mats(self.fast_jac(t, y), self.slow_jac(t, y))

    @property
    def slow_mask(self) -> Optional[np.ndarray]:
        return None if self.fast_mask is None else ~self.fast_mask

    def without_split(self) -> "PartitionedSystem":
        """The same right-hand side with everything treated as slow."""
        zero = lambda t, y: np.zeros_like(y)
        zjac = lambda t, y: np.zeros((self.dim, self.dim))
        return PartitionedSystem(
            dim=self.dim,
            fast_rhs=zero,
            slow_rhs=self.rhs,
            fast_jac=zjac if self.has_jacobian else None,
            slow_jac=self.jac if self.has_jacobian else None,
            exact_solution=self.exact_solution,
            name=self.name,
        )


def _add_mats(a, b):
    if sp.issparse(a) or sp.issparse(b):
        return sp.csr_matrix(a) + sp.csr_matrix(b)
    return np.asarray(a) + np.asarray(b)


@dataclass
class StepStats:
    newton_iterations: int = 0
    rhs_evals: int = 0
    jacobian_evals: int = 0
    factorizations: int = 0
    linear_solves: int = 0
    inner_steps: int = 0
    inner_rhs_evals: int = 0

    def add(self, other: "StepStats") -> "StepStats":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class StepResult:
    y_next: np.ndarray
    y_embedded: Optional[np.ndarray] = None
    stats: StepStats = field(default_factory=StepStats)

    @property
    def embedded_error(self) -> Optional[float]:
        if self.y_embedded is None:
            return None
        return float(np.linalg.norm(self.y_next - self.y_embedded) / math.sqrt(self.y_next.size))


@dataclass(frozen=True)
class InnerSolverConfig:
    """How the fast corrector ODEs are solved.

    ``mode`` is ``"adaptive"`` (Dormand--Prince with PI control),
    ``"fixed"`` (Dormand--Prince, ``substeps`` equal steps) or
    ``"implicit"`` (``substeps`` equal steps of ``implicit_method``, a DIRK
    base tableau name from :data:`mrigark.methods.BASE_TABLEAUS`).
    """

    mode: str = "adaptive"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    substeps: int = 10
    implicit_method: str = "ESDIRK4(3)6"
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.mode not in ("adaptive", "fixed", "implicit"):
            raise ValueError(f"unknown inner solver mode {self.mode!r}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("inner tolerances must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-12
    max_iter: int = 25
    slow_ratio: float = 0.2
    refresh_every: int = 8


# -- linear algebra ---------------------------------------------------------------


def fd_jacobian(f: Rhs, t: float, y: np.ndarray, f0: Optional[np.ndarray] = None) -> np.ndarray:
    """Column-wise forward differences with step ``sqrt(eps) * (1 + |y_j|)``."""
    y = np.asarray(y, dtype=float)
    if f0 is None:
        f0 = f(t, y)
    n = y.size
    jac = np.empty((f0.size, n))
    eps = math.sqrt(np.finfo(float).eps)
    yp = y.copy()
    for j in range(n):
        h = eps * (1.0 + abs(y[j]))
        yp[j] = y[j] + h
        jac[:, j] = (f(t, yp) - f0) / h
        yp[j] = y[j]
    return jac


DENSE_LU_MAX = 200


class _IterationMatrix:
    """Factorization of ``I - h J`` with a ``solve`` method.

    Sparse Jacobians of small systems are densified: below a couple of
    hundred unknowns a dense LU is cheaper than SuperLU's setup cost.
    """

    def __init__(self, jac, h: float):
        n = jac.shape[0]
        if sp.issparse(jac) and n <= DENSE_LU_MAX:
            jac = jac.toarray()
        if sp.issparse(jac):
            m = (sp.identity(n, format="csc") - h * sp.csc_matrix(jac)).tocsc()
            try:
                lu = spla.splu(m)
            except RuntimeError as exc:
                raise SingularIterationMatrix(f"singular iteration matrix: {exc}") from exc
            self.solve = lu.solve
        else:
            m = np.eye(n) - h * np.asarray(jac)
            lu, piv = sla.lu_factor(m, check_finite=False)
            if np.any(np.diag(lu) == 0.0) or not np.all(np.isfinite(lu)):
                raise SingularIterationMatrix("singular iteration matrix")
            self.solve = lambda b: sla.lu_solve((lu, piv), b, check_finite=False)


def _norm(v: np.ndarray) -> float:
    return float(np.abs(v).max()) if v.size else 0.0


def newton_solve_stage(
    residual: Callable[[np.ndarray], np.ndarray],
    guess: np.ndarray,
    solve: Callable[[np.ndarray], np.ndarray],
    tol: float = 1e-12,
    max_iter: int = 25,
    refresh: Optional[Callable[[np.ndarray], Callable[[np.ndarray], np.ndarray]]] = None,
    slow_ratio: float = 0.2,
    stats: Optional[StepStats] = None,
    refresh_every: int = 8,
) -> np.ndarray:
    """Simplified Newton for ``residual(Y) = 0``.

    ``solve(b)`` applies the inverse of the (frozen) iteration matrix. When
    the residual shrinks by less than ``slow_ratio`` per iteration and
    ``refresh`` is given, ``solve = refresh(Y)`` is rebuilt at the current
    iterate; the same happens after ``refresh_every`` iterations without a
    rebuild. Converged means ``max|residual| <= tol * (1 + max|Y|)``.
    """
    y = np.array(guess, dtype=float, copy=True)
    stats = stats if stats is not None else StepStats()
    prev = math.inf
    res_norm = math.inf
    since_refresh = 0
    for it in range(max_iter + 1):
        r = residual(y)
        res_norm = _norm(r)
        if not math.isfinite(res_norm):
            break
        if res_norm <= tol * (1.0 + _norm(y)):
            return y
        if it == max_iter:
            break
        if refresh is not None and it > 0 and (
            res_norm > slow_ratio * prev or since_refresh >= refresh_every
        ):
            solve = refresh(y)
            since_refresh = 0
        since_refresh += 1
        prev = res_norm
        y -= solve(r)
        stats.newton_iterations += 1
        stats.linear_solves += 1
    raise NewtonError(
        f"Newton iteration did not converge (residual {res_norm:.3e})", res_norm, max_iter
    )


class _StageSolver:
    """Solves DIRK stages ``Y = base + h a_ii f(T, Y)`` for one right-hand side.

    The Jacobian is evaluated once (lazily) and factorizations are cached per
    ``h a_ii``, so SDIRK methods factor once per step.
    """

    def __init__(self, rhs: Rhs, jac: Optional[Jac], newton: NewtonConfig, stats: StepStats):
        self.rhs = rhs
        self.jac_fn = jac
        self.newton = newton
        self.stats = stats
        self._jac = None
        self._lu: Dict[float, _IterationMatrix] = {}

    def _eval_jac(self, t, y):
        self.stats.jacobian_evals += 1
        if self.jac_fn is not None:
            return self.jac_fn(t, y)
        f0 = self.rhs(t, y)
        self.stats.rhs_evals += y.size + 1
        return fd_jacobian(self.rhs, t, y, f0)

    def _solver(self, h):
        if h not in self._lu:
            self.stats.factorizations += 1
            self._lu[h] = _IterationMatrix(self._jac, h)
        return self._lu[h].solve

    def solve(
        self, t: float, base: np.ndarray, h: float, guess: np.ndarray, alt_guess: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(Y, f(t, Y))``.

        With ``alt_guess``, Newton starts from whichever guess has the
        smaller residual (explicit extrapolations are good for mild steps
        and poor for stiff ones).
        """
        if alt_guess is not None:
            r0 = _norm(guess - base - h * self.rhs(t, guess))
            r1 = _norm(alt_guess - base - h * self.rhs(t, alt_guess))
            self.stats.rhs_evals += 2
            if r1 < r0:
                guess = alt_guess
        if self._jac is None:
            self._jac = self._eval_jac(t, guess)
        holder = {}

        def residual(y):
            fy = self.rhs(t, y)
            self.stats.rhs_evals += 1
            holder["f"], holder["y"] = fy, y.copy()
            return y - base - h * fy

        def refresh(y):
            self._jac = self._eval_jac(t, y)
            self._lu.clear()
            return self._solver(h)

        y = newton_solve_stage(
            residual,
            guess,
            self._solver(h),
            tol=self.newton.tol,
            max_iter=self.newton.max_iter,
            refresh=refresh,
            slow_ratio=self.newton.slow_ratio,
            stats=self.stats,
            refresh_every=self.newton.refresh_every,
        )
        return y, holder["f"]


def _dirk_stages(
    tab: ButcherTableau, solver: _StageSolver, t: float, y: np.ndarray, h: float
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    if not tab.is_diagonally_implicit:
        raise ValueError("fully implicit base tableaus are not supported; use a DIRK method")
    a, c = tab.a, tab.c
    ys, ks = [], []
    f0 = None
    for i in range(tab.stages):
        base = y.copy()
        for j in range(i):
            if a[i, j] != 0.0:
                base += h * a[i, j] * ks[j]
        ti = t + c[i] * h
        if a[i, i] == 0.0:
            yi = base
            ki = solver.rhs(ti, yi)
            solver.stats.rhs_evals += 1
        else:
            if not ks and f0 is None:
                f0 = solver.rhs(t, y)
                solver.stats.rhs_evals += 1
            explicit = base + h * a[i, i] * (ks[-1] if ks else f0)
            yi, ki = solver.solve(ti, base, h * a[i, i], ys[-1] if ys else y, explicit)
        ys.append(yi)
        ks.append(ki)
    return ys, ks


# -- inner solver ---------------------------------------------------------------------

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_DP_E = _DP_B - _DP_B4


def _dp_step(rhs, theta, v, h, k0):
    ks = [k0]
    for i in range(1, 7):
        vi = v.copy()
        for j, aij in enumerate(_DP_A[i]):
            if aij != 0.0:
                vi += h * aij * ks[j]
        ks.append(rhs(theta + _DP_C[i] * h, vi))
    v_new = v + h * sum(b * k for b, k in zip(_DP_B, ks) if b != 0.0)
    err = h * sum(e * k for e, k in zip(_DP_E, ks))
    return v_new, err, ks[-1]


@dataclass
class InnerResult:
    v: np.ndarray
    steps: int
    rhs_evals: int


def _initial_step(rhs, v0, f0, length, atol, rtol):
    scale = atol + rtol * np.abs(v0)
    d0 = np.sqrt(np.mean((v0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, length)
    f1 = rhs(h0, v0 + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, length)


def inner_solve(
    rhs: Rhs,
    v0: np.ndarray,
    length: float,
    cfg: Optional[InnerSolverConfig] = None,
    jac: Optional[Jac] = None,
    newton: Optional[NewtonConfig] = None,
    stats: Optional[StepStats] = None,
) -> InnerResult:
    """Integrate ``v' = rhs(theta, v)`` from ``theta = 0`` to ``length``.

    ``jac`` is only used in ``implicit`` mode (finite differences otherwise).
    """
    cfg = cfg or InnerSolverConfig()
    v0 = np.array(v0, dtype=float, copy=True)
    if length < 0:
        raise ValueError("length must be non-negative")
    if length == 0.0 or v0.size == 0:
        return InnerResult(v0, 0, 0)
    if cfg.mode == "implicit":
        return _implicit_fixed(rhs, v0, length, cfg, jac, newton or NewtonConfig(), stats)
    if cfg.mode == "fixed":
        h = length / cfg.substeps
        v = v0
        k = rhs(0.0, v)
        for n in range(cfg.substeps):
            v, _, k = _dp_step(rhs, n * h, v, h, k)
        return InnerResult(v, cfg.substeps, 1 + 6 * cfg.substeps)
    return _adaptive(rhs, v0, length, cfg)


def _adaptive(rhs, v0, length, cfg):
    atol, rtol = cfg.abs_tol, cfg.rel_tol
    theta, v = 0.0, v0
    k = rhs(0.0, v)
    nfev = 1
    if not np.all(np.isfinite(k)):
        raise InnerSolverError("non-finite right-hand side at theta=0.0", 0.0)
    h = _initial_step(rhs, v, k, length, atol, rtol)
    nfev += 1
    steps = 0
    err_prev = 1e-4
    safety, beta, alpha = 0.9, 0.4 / 5, 0.7 / 5
    while theta < length:
        if steps >= cfg.max_steps:
            raise InnerSolverError(f"inner solver exceeded {cfg.max_steps} steps", theta)
        h = min(h, length - theta)
        if not h > 1e-14 * max(abs(theta), length):
            raise InnerSolverError(f"inner step size underflow at theta={theta!r}", theta)
        with np.errstate(invalid="ignore", over="ignore"):
            v_new, err, k_new = _dp_step(rhs, theta, v, h, k)
        nfev += 6
        scale = atol + rtol * np.maximum(np.abs(v), np.abs(v_new))
        en = float(np.sqrt(np.mean((err / scale) ** 2)))
        if math.isfinite(en) and en <= 1.0:
            theta = theta + h
            if length - theta <= 1e-13 * length:
                theta = length
            v, k = v_new, k_new
            steps += 1
            en = max(en, 1e-10)
            fac = safety * en ** (-alpha) * err_prev**beta
            err_prev = en
            h *= min(5.0, max(0.2, fac))
        else:
            if not math.isfinite(en):
                h *= 0.1
            else:
                h *= max(0.2, safety * en ** (-1 / 5))
    return InnerResult(v, steps, nfev)


def _implicit_fixed(rhs, v0, length, cfg, jac, newton, stats):
    from .methods import BASE_TABLEAUS

    try:
        tab = BASE_TABLEAUS[cfg.implicit_method]
    except KeyError:
        raise ValueError(
            f"unknown implicit inner method {cfg.implicit_method!r}; "
            f"available: {', '.join(BASE_TABLEAUS)}"
        ) from None
    local = StepStats()
    solver = _StageSolver(rhs, jac, newton, local)
    h = length / cfg.substeps
    v = v0
    for n in range(cfg.substeps):
        theta = n * h
        ys, ks = _dirk_stages(tab, solver, theta, v, h)
        v = ys[-1] if tab.is_stiffly_accurate else v + h * sum(b * k for b, k in zip(tab.b, ks))
    if stats is not None:
        stats.newton_iterations += local.newton_iterations
        stats.jacobian_evals += local.jacobian_evals
        stats.factorizations += local.factorizations
        stats.linear_solves += local.linear_solves
    return InnerResult(v, cfg.substeps, local.rhs_evals)


# -- corrector helpers --------------------------------------------------------------------


def _forcing_coeffs(poly_row_coeffs: np.ndarray, tendencies: Sequence[np.ndarray], dim: int):
    """``G_k = sum_j coeffs[k, j] f_j``; ``coeffs`` has shape ``(K+1, n)``."""
    out = np.zeros((poly_row_coeffs.shape[0], dim))
    for k, row in enumerate(poly_row_coeffs):
        for w, f in zip(row, tendencies):
            if w != 0.0:
                out[k] += w * f
    return out


def _poly_value(g: np.ndarray, tau: float) -> np.ndarray:
    out = g[-1].copy()
    for gk in g[-2::-1]:
        out = out * tau + gk
    return out


def _poly_antideriv(g: np.ndarray, tau: float) -> np.ndarray:
    """``sum_k g_k tau^(k+1)/(k+1)``."""
    kmax = g.shape[0] - 1
    out = g[kmax] / (kmax + 1)
    for k in range(kmax - 1, -1, -1):
        out = out * tau + g[k] / (k + 1)
    return out * tau


def _corrector(
    sys: PartitionedSystem,
    t0: float,
    scale: float,
    v0: np.ndarray,
    g: np.ndarray,
    H: float,
    cfg: InnerSolverConfig,
    newton: NewtonConfig,
    stats: StepStats,
) -> np.ndarray:
    """Solve ``v' = scale f^F(t0 + scale theta, v) + sum_k (theta/H)^k g_k`` on ``[0, H]``."""
    if scale == 0.0:
        return v0 + H * _poly_antideriv(g, 1.0)
    mask = sys.fast_mask
    if mask is None:
        def rhs(theta, v):
            return scale * sys.fast_rhs(t0 + scale * theta, v) + _poly_value(g, theta / H)

        jac = None
        if sys.fast_jac is not None:
            jac = lambda theta, v: _scale_mat(sys.fast_jac(t0 + scale * theta, v), scale)
        res = inner_solve(rhs, v0, H, cfg, jac, newton, stats)
        stats.inner_steps += res.steps
        stats.inner_rhs_evals += res.rhs_evals
        return res.v

    fast = np.flatnonzero(mask)
    slow = np.flatnonzero(~mask)
    gs = g[:, slow]
    gf = g[:, fast]
    full = v0.copy()

    def slow_part(theta):
        return v0[slow] + H * _poly_antideriv(gs, theta / H)

    def assemble(theta, w):
        full[slow] = slow_part(theta)
        full[fast] = w
        return full

    def rhs(theta, w):
        fx = sys.fast_rhs(t0 + scale * theta, assemble(theta, w))
        return scale * fx[fast] + _poly_value(gf, theta / H)

    jac = None
    if sys.fast_jac is not None:
        def jac(theta, w):
            jm = sys.fast_jac(t0 + scale * theta, assemble(theta, w))
            return _scale_mat(_submatrix(jm, fast), scale)

    out = np.empty_like(v0)
    out[slow] = slow_part(H)
    if fast.size:
        res = inner_solve(rhs, v0[fast], H, cfg, jac, newton, stats)
        stats.inner_steps += res.steps
        stats.inner_rhs_evals += res.rhs_evals
        out[fast] = res.v
    return out


def _scale_mat(m, s):
    return m * s


def _submatrix(m, idx):
    if idx.size and idx[-1] - idx[0] + 1 == idx.size:
        lo, hi = idx[0], idx[-1] + 1
        return sp.csr_matrix(m)[lo:hi, lo:hi] if sp.issparse(m) else np.asarray(m)[lo:hi, lo:hi]
    if sp.issparse(m):
        return sp.csr_matrix(m)[idx][:, idx]
    return np.asarray(m)[np.ix_(idx, idx)]


# -- steppers ---------------------------------------------------------------------------------


def _full_jac(sys: PartitionedSystem) -> Optional[Jac]:
    return sys.jac if sys.has_jacobian else None


def dirk_step(
    tab: ButcherTableau,
    f: Union[Rhs, PartitionedSystem],
    t0: float,
    y: np.ndarray,
    H: float,
    jac: Optional[Jac] = None,
    newton: Optional[NewtonConfig] = None,
    embedded: bool = True,
) -> StepResult:
    """One step of a diagonally implicit (or explicit) Runge--Kutta method."""
    if isinstance(f, PartitionedSystem):
        jac = jac or _full_jac(f)
        f = f.rhs
    y = np.asarray(y, dtype=float)
    stats = StepStats()
    if H == 0.0:
        return StepResult(y.copy(), None, stats)
    solver = _StageSolver(f, jac, newton or NewtonConfig(), stats)
    ys, ks = _dirk_stages(tab, solver, t0, y, H)
    y_next = y + H * sum(b * k for b, k in zip(tab.b, ks) if b != 0.0)
    y_hat = None
    if embedded and tab.b_hat is not None:
        y_hat = y + H * sum(b * k for b, k in zip(tab.b_hat, ks) if b != 0.0)
    return StepResult(y_next, y_hat, stats)


def spc_step(
    s: SpcScheme,
    sys: PartitionedSystem,
    t: float,
    y: np.ndarray,
    H: float,
    cfg: Optional[InnerSolverConfig] = None,
    newton: Optional[NewtonConfig] = None,
    embedded: bool = True,
) -> StepResult:
    """One step predictor-corrector step.

    The predictor is the base DIRK method applied to the full right-hand
    side. Its slow tendencies drive one fast ODE over the whole step.
    """
    cfg = cfg or InnerSolverConfig()
    newton = newton or NewtonConfig()
    y = np.asarray(y, dtype=float)
    stats = StepStats()
    solver = _StageSolver(sys.rhs, _full_jac(sys), newton, stats)
    ys, _ = _dirk_stages(s.base, solver, t, y, H)
    c = s.base.c
    fs = [sys.slow_rhs(t + c[i] * H, yi) for i, yi in enumerate(ys)]
    stats.rhs_evals += len(ys)
    g = _forcing_coeffs(s.gamma.coeffs[:, 0, :], fs, y.size)
    y_next = _corrector(sys, t, 1.0, y, g, H, cfg, newton, stats)
    y_hat = None
    if embedded and s.gamma_hat is not None:
        g_hat = _forcing_coeffs(s.gamma_hat.coeffs[:, 0, :], fs, y.size)
        y_hat = _corrector(sys, t, 1.0, y, g_hat, H, cfg, newton, stats)
    return StepResult(y_next, y_hat, stats)


def ipc_step(
    s: IpcScheme,
    sys: PartitionedSystem,
    t: float,
    y: np.ndarray,
    H: float,
    cfg: Optional[InnerSolverConfig] = None,
    newton: Optional[NewtonConfig] = None,
    embedded: bool = True,
) -> StepResult:
    """One internal-stage predictor-corrector step.

    Each stage is predicted implicitly, then corrected by a fast ODE over
    ``[c_{i-1} H, c_i H]`` started from the previous corrected stage. Stages
    with equal abscissae are corrected in closed form.
    """
    cfg = cfg or InnerSolverConfig()
    newton = newton or NewtonConfig()
    y = np.asarray(y, dtype=float)
    stats = StepStats()
    solver = _StageSolver(sys.rhs, _full_jac(sys), newton, stats)
    a, c, dc = s.base.a, s.base.c, s.delta_c
    n = s.stages
    gam = s.gamma.coeffs
    psi = s.psi.coeffs
    f_full: List[np.ndarray] = []
    f_slow: List[np.ndarray] = []
    f_pred: List[np.ndarray] = []
    stages: List[np.ndarray] = []
    prev = y
    for i in range(n):
        ti = t + c[i] * H
        base = y.copy()
        for j in range(i):
            if a[i, j] != 0.0:
                base += H * a[i, j] * f_full[j]
        if a[i, i] == 0.0:
            y_pred = base
        else:
            y_pred, _ = solver.solve(ti, base, H * a[i, i], prev)
        f_pred.append(sys.slow_rhs(ti, y_pred))
        stats.rhs_evals += 1
        g = _forcing_coeffs(gam[:, i, :i], f_slow, y.size) + _forcing_coeffs(
            psi[:, i, : i + 1], f_pred, y.size
        )
        t_prev = t + (c[i - 1] if i else 0.0) * H
        yi = _corrector(sys, t_prev, dc[i], prev, g, H, cfg, newton, stats)
        fsi = sys.slow_rhs(ti, yi)
        f_slow.append(fsi)
        f_full.append(sys.fast_rhs(ti, yi) + fsi)
        stats.rhs_evals += 2
        stages.append(yi)
        prev = yi
    y_hat = None
    if embedded and s.gamma_hat is not None and s.psi_hat is not None:
        start = stages[-2] if n > 1 else y
        t_prev = t + (c[-2] if n > 1 else 0.0) * H
        g_hat = _forcing_coeffs(s.gamma_hat.coeffs[:, 0, :], f_slow, y.size) + _forcing_coeffs(
            s.psi_hat.coeffs[:, 0, :], f_pred, y.size
        )
        y_hat = _corrector(sys, t_prev, dc[-1], start, g_hat, H, cfg, newton, stats)
    return StepResult(stages[-1], y_hat, stats)


# -- driver -----------------------------------------------------------------------------------


@dataclass
class IntegrationResult:
    t: np.ndarray
    y: np.ndarray
    stats: StepStats
    embedded_errors: np.ndarray

    @property
    def y_final(self) -> np.ndarray:
        return self.y[-1]


def _resolve(scheme):
    if isinstance(scheme, str):
        from .methods import BASE_TABLEAUS, registry_lookup

        if scheme in BASE_TABLEAUS:
            return BASE_TABLEAUS[scheme]
        return registry_lookup(scheme)
    return scheme


def integrate(
    scheme: Union[MultirateScheme, ButcherTableau, str],
    sys: PartitionedSystem,
    t_span: Tuple[float, float],
    y0: np.ndarray,
    H: float,
    cfg: Optional[InnerSolverConfig] = None,
    newton: Optional[NewtonConfig] = None,
    embedded: bool = True,
    store: bool = True,
) -> IntegrationResult:
    """Fixed-step integration over ``t_span``; the last step is shortened to land on the end.

    ``scheme`` may be a multirate scheme, a base tableau (single-rate DIRK on
    the full right-hand side) or a registry / base-tableau name.
    """
    scheme = _resolve(scheme)
    t0, t1 = map(float, t_span)
    if H <= 0:
        raise ValueError("H must be positive")
    y = np.array(y0, dtype=float, copy=True)
    ts, ys, errs = [t0], [y.copy()], []
    stats = StepStats()
    span = t1 - t0
    nsteps = int(math.ceil(span / H - 1e-9)) if span > 0 else 0
    t = t0
    for n in range(nsteps):
        h = min(H, t1 - t)
        if n == nsteps - 1:
            h = t1 - t
        if h <= 0:
            break
        step_sys = sys.repartition(t, y, h) if sys.repartition is not None else sys
        try:
            if isinstance(scheme, ButcherTableau):
                res = dirk_step(scheme, step_sys, t, y, h, newton=newton, embedded=embedded)
            elif isinstance(scheme, SpcScheme):
                res = spc_step(scheme, step_sys, t, y, h, cfg, newton, embedded)
            elif isinstance(scheme, IpcScheme):
                res = ipc_step(scheme, step_sys, t, y, h, cfg, newton, embedded)
            else:
                raise TypeError(f"cannot integrate with {type(scheme).__name__}")
        except (NewtonError, InnerSolverError) as exc:
            raise StepFailure(f"step {n} at t={t!r} failed: {exc}", n, t) from exc
        y = res.y_next
        t = t0 + (n + 1) * H if n < nsteps - 1 else t1
        stats.add(res.stats)
        err = res.embedded_error
        errs.append(np.nan if err is None else err)
        if store:
            ts.append(t)
            ys.append(y.copy())
    if not store:
        ts, ys = [t0, t], [np.array(y0, dtype=float), y]
    return IntegrationResult(np.array(ts), np.array(ys), stats, np.array(errs))
