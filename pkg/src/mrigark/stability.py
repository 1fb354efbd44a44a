"""Linear stability of the multirate schemes.

Scalar functions use the split Dahlquist problem ``y' = lambda_F y + lambda_S y``
with ``zf = H lambda_F`` and ``zs = H lambda_S``. Matrix functions use the
2x2 test problem ``y' = Omega y`` with ``Z = H Omega`` and the component
partition (first component fast, second slow).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .phi import phi_series, stability_weights_ipc, stability_weights_spc
from .tableaux import IpcScheme, MultirateScheme, SpcScheme

__all__ = [
    "MatrixTestParams",
    "StabilityQuery",
    "SingularMatrixError",
    "omega_matrix",
    "coupled_Z",
    "base_R",
    "spc_scalar_R",
    "spc_zs_limit",
    "spc_matrix_M",
    "ipc_scalar_R",
    "ipc_frak_M",
    "ipc_matrix_M",
    "scalar_R",
    "matrix_M",
    "sector_fan",
    "scan_region",
    "write_region_csv",
]

INFINITE_RHO = 1e6
_STABLE_SLACK = 1e-12


class SingularMatrixError(ValueError):
    pass


def _solve(m, b):
    try:
        out = np.linalg.solve(m, b)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise SingularMatrixError("singular or ill-conditioned matrix")
    return out


# -- test problem -------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixTestParams:
    lambda_f: complex
    lambda_s: complex
    xi: float = 0.1
    alpha: float = 1.0
    H: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.xi < 1.0:
            raise ValueError("xi must lie in (0, 1)")
        if self.alpha == 0.0:
            raise ValueError("alpha must be nonzero")

    @property
    def omega(self) -> np.ndarray:
        return omega_matrix(self.lambda_f, self.lambda_s, self.xi, self.alpha)

    @property
    def Z(self) -> np.ndarray:
        return self.H * self.omega


def omega_matrix(lambda_f, lambda_s, xi: float, alpha: float) -> np.ndarray:
    """``[[lf, (1-xi)(lf-ls)/alpha], [-alpha xi (lf-ls), ls]]``; eigenvalues are
    ``xi lf + (1-xi) ls`` and ``(1-xi) lf + xi ls``."""
    d = lambda_f - lambda_s
    dtype = complex if np.iscomplexobj(np.asarray([lambda_f, lambda_s])) else float
    return np.array(
        [[lambda_f, (1.0 - xi) * d / alpha], [-alpha * xi * d, lambda_s]], dtype=dtype
    )


def coupled_Z(zf, zs, xi: float = 0.1, alpha: float = 1.0) -> np.ndarray:
    return omega_matrix(complex(zf), complex(zs), xi, alpha)


# -- SPC --------------------------------------------------------------------------------


def _resolvent_ones(a: np.ndarray, z) -> np.ndarray:
    """``(I - z A)^{-1} 1`` for lower-triangular ``A``, vectorized over ``z``.

    Returns shape ``(s,) + z.shape``.
    """
    z = np.asarray(z, dtype=complex)
    s = a.shape[0]
    x = np.empty((s,) + z.shape, dtype=complex)
    for i in range(s):
        acc = np.ones(z.shape, dtype=complex)
        for j in range(i):
            if a[i, j] != 0.0:
                acc = acc + z * a[i, j] * x[j]
        den = 1.0 - z * a[i, i]
        if np.any(den == 0):
            raise SingularMatrixError("z at a pole of the base method")
        x[i] = acc / den
    return x


def base_R(tab, z):
    """Stability function ``1 + z b^T (I - zA)^{-1} 1`` of a DIRK tableau."""
    z = np.asarray(z, dtype=complex)
    x = _resolvent_ones(tab.a, z)
    out = 1.0 + z * np.tensordot(tab.b, x, axes=1)
    return out[()] if out.ndim == 0 else out


def spc_scalar_R(s: SpcScheme, zf, zs):
    """``phi_0(zf) + zs mu(zf)^T (I - (zf+zs) A)^{-1} 1``; ``zs`` may be an array."""
    mu, _ = stability_weights_spc(s, zf)
    zs = np.asarray(zs, dtype=complex)
    x = _resolvent_ones(s.base.a, zf + zs)
    out = np.exp(complex(zf)) + zs * np.tensordot(mu, x, axes=1)
    return out[()] if out.ndim == 0 else out


def spc_zs_limit(s: SpcScheme, zf) -> complex:
    """Limit of the scalar stability function as ``zs -> -infinity``."""
    a = s.base.a
    if np.any(np.diag(a) == 0.0):
        raise SingularMatrixError(
            f"{s.name}: base matrix is singular (zero diagonal); the zs-limit is unavailable"
        )
    mu, _ = stability_weights_spc(s, zf)
    return complex(np.exp(complex(zf)) - mu @ np.linalg.solve(a, np.ones(a.shape[0])))


def spc_matrix_M(s: SpcScheme, Z) -> np.ndarray:
    """2x2 transfer matrix of one SPC step on ``y' = (Z/H) y``.

    ``Z[0, 0]`` is the fast diagonal entry, ``Z[0, 1]`` couples the slow
    component into the fast equation, ``Z[1, 0]`` the fast into the slow one.
    """
    Z = np.asarray(Z, dtype=complex)
    zf, wf, ws, zs = Z[0, 0], Z[0, 1], Z[1, 0], Z[1, 1]
    a, b = s.base.a, s.base.b
    n = s.stages
    big = np.eye(2 * n) - np.kron(Z, a)
    rhs = np.kron(np.eye(2), np.ones((n, 1)))
    stages = _solve(big, rhs)  # (2n, 2): columns respond to y_F, y_S
    yf, ys = stages[:n], stages[n:]
    slow_tend = ws * yf + zs * ys  # H f^S at the stages, (n, 2)
    _, mu_t = stability_weights_spc(s, zf)
    ph = phi_series(zf, 1)
    m = np.zeros((2, 2), dtype=complex)
    m[0] = [ph[0], wf * ph[1]]
    m[0] += wf * (mu_t @ slow_tend)
    m[1] = [0.0, 1.0]
    m[1] += b @ slow_tend
    return m


# -- IPC ----------------------------------------------------------------------------------


def _ipc_parts(s: IpcScheme):
    a = s.base.a
    return np.diag(np.diag(a)), np.tril(a, -1), np.eye(s.stages, k=-1)


def ipc_frak_M(s: IpcScheme, zf, zs) -> np.ndarray:
    """Stage matrix ``I - diag(phi_0(dc zf)) L - zs mu - zs z nu (I - zD)^{-1} T``."""
    d, t, ell = _ipc_parts(s)
    n = s.stages
    z = complex(zf) + complex(zs)
    mu, nu, _, _ = stability_weights_ipc(s, zf)
    e0 = np.exp(s.delta_c * complex(zf))
    inner = _solve(np.eye(n) - z * d, t.astype(complex))
    return np.eye(n) - e0[:, None] * ell - zs * mu - zs * z * (nu @ inner)


def ipc_scalar_R(s: IpcScheme, zf, zs) -> complex:
    d, _, _ = _ipc_parts(s)
    n = s.stages
    zf, zs = complex(zf), complex(zs)
    z = zf + zs
    _, nu, _, _ = stability_weights_ipc(s, zf)
    rhs = zs * (nu @ _solve(np.eye(n) - z * d, np.ones(n, dtype=complex)))
    rhs[0] += np.exp(s.delta_c[0] * zf)
    return complex(_solve(ipc_frak_M(s, zf, zs), rhs)[-1])


def _ipc_scalar_R_batch(s: IpcScheme, zf, zs: np.ndarray) -> np.ndarray:
    """Vectorized over an array of ``zs`` for one ``zf``."""
    d, t, ell = _ipc_parts(s)
    n = s.stages
    zf = complex(zf)
    zs = np.asarray(zs, dtype=complex).ravel()
    z = zf + zs
    mu, nu, _, _ = stability_weights_ipc(s, zf)
    dd = np.diag(d)
    den = 1.0 - z[:, None] * dd[None, :]  # (N, n)
    inv_t = t[None, :, :] / den[:, :, None]  # (I - zD)^{-1} T, D diagonal
    frak = (
        np.eye(n)[None]
        - (np.exp(s.delta_c * zf)[:, None] * ell)[None]
        - zs[:, None, None] * mu[None]
        - (zs * z)[:, None, None] * np.einsum("ij,njk->nik", nu, inv_t)
    )
    rhs = zs[:, None] * np.einsum("ij,nj->ni", nu, 1.0 / den)
    rhs[:, 0] += np.exp(s.delta_c[0] * zf)
    with np.errstate(all="ignore"):
        try:
            sol = np.linalg.solve(frak, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            sol = np.stack([_safe_solve(f, r) for f, r in zip(frak, rhs)])
    return sol[:, -1]


def _safe_solve(m, b):
    try:
        return np.linalg.solve(m, b)
    except np.linalg.LinAlgError:
        return np.full_like(b, np.inf)


def ipc_matrix_M(s: IpcScheme, Z) -> np.ndarray:
    """2x2 transfer matrix of one IPC step on ``y' = (Z/H) y``."""
    Z = np.asarray(Z, dtype=complex)
    zf, wf, ws, zs = Z[0, 0], Z[0, 1], Z[1, 0], Z[1, 1]
    d, t, ell = _ipc_parts(s)
    n = s.stages
    dc = s.delta_c
    _, _, mu_t, nu_t = stability_weights_ipc(s, zf)
    ph = phi_series(dc * zf, 1)  # (n, 2)
    e0 = ph[:, 0]
    f1 = dc * ph[:, 1]
    gbar = s.gamma.bar
    pbar = s.psi.bar
    eye2 = np.eye(2)
    # predicted stages: Y* = P ((I2 x 1) y + (Z x T) Y)
    p = _solve(np.eye(2 * n) - np.kron(Z, d), np.eye(2 * n, dtype=complex))
    w = np.hstack([ws * np.eye(n), zs * np.eye(n)])  # slow tendency map, (n, 2n)
    pz_t = p @ np.kron(Z, t)
    p_one = p @ np.kron(eye2, np.ones((n, 1)))
    top = np.vstack([wf * mu_t, gbar])  # acts on W Y
    top_star = np.vstack([wf * nu_t, pbar])  # acts on W Y*
    shift = np.block([[e0[:, None] * ell, wf * f1[:, None] * ell], [np.zeros((n, n)), ell]])
    n1 = np.eye(2 * n) - shift - top @ w - top_star @ w @ pz_t
    e1 = np.zeros((n, 1))
    e1[0] = 1.0
    start = np.block([[e0[:, None] * e1, wf * f1[:, None] * e1], [np.zeros((n, 1)), e1]])
    n2 = start + top_star @ w @ p_one
    sol = _solve(n1, n2)
    return np.array([sol[n - 1], sol[2 * n - 1]])


# -- dispatch -----------------------------------------------------------------------------


def scalar_R(s: MultirateScheme, zf, zs):
    if isinstance(s, SpcScheme):
        return spc_scalar_R(s, zf, zs)
    if np.ndim(zs) == 0:
        return ipc_scalar_R(s, zf, zs)
    zs = np.asarray(zs)
    return _ipc_scalar_R_batch(s, zf, zs).reshape(zs.shape)


def matrix_M(s: MultirateScheme, Z) -> np.ndarray:
    return spc_matrix_M(s, Z) if isinstance(s, SpcScheme) else ipc_matrix_M(s, Z)


# -- region scanning -------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityQuery:
    """Region scan over a rectangle of ``zs`` values.

    ``rho = math.inf`` uses a fan of radius ``1e6``; ``rho = 0`` uses only
    ``zf = 0``. For matrix scans ``xi`` and ``coupling_alpha`` fix the test
    matrix; ``literal_matrix`` evaluates ``M(Z(zf, zf))`` instead of
    ``M(Z(zf, zs))``.
    """

    rho: float = math.inf
    alpha_deg: float = 90.0
    n_radii: int = 24
    n_angles: int = 17
    window: Tuple[float, float, float, float] = (-10.0, 0.0, -10.0, 10.0)
    resolution: Union[int, Tuple[int, int]] = 41
    xi: float = 0.1
    coupling_alpha: float = 1.0
    literal_matrix: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha_deg <= 90.0:
            raise ValueError("alpha_deg must lie in (0, 90]")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        x0, x1, y0, y1 = self.window
        if not (x1 >= x0 and y1 >= y0):
            raise ValueError("window must be (x0, x1, y0, y1) with x0 <= x1 and y0 <= y1")

    @property
    def shape(self) -> Tuple[int, int]:
        r = self.resolution
        return (r, r) if isinstance(r, int) else tuple(r)

    def grid(self) -> np.ndarray:
        """``zs`` grid of shape ``(ny, nx)``; row index runs along the imaginary axis."""
        x0, x1, y0, y1 = self.window
        nx, ny = self.shape
        re = np.linspace(x0, x1, nx)
        im = np.linspace(y0, y1, ny)
        return re[None, :] + 1j * im[:, None]


def sector_fan(rho: float, alpha_deg: float, n_radii: int = 24, n_angles: int = 17) -> np.ndarray:
    """``zf`` samples of ``{|zf| <= rho, |arg zf - pi| <= alpha}`` plus ``zf = 0``."""
    if rho == 0:
        return np.array([0j])
    r_max = INFINITE_RHO if math.isinf(rho) else rho
    radii = np.logspace(math.log10(r_max * 1e-3), math.log10(r_max), n_radii)
    ang = np.deg2rad(np.linspace(-alpha_deg, alpha_deg, n_angles))
    fan = -(radii[:, None] * np.exp(1j * ang[None, :])).ravel()
    return np.concatenate([[0j], fan])


def scan_region(
    s: MultirateScheme, q: StabilityQuery, kind: str = "scalar", fan: Optional[np.ndarray] = None
) -> np.ndarray:
    """Boolean grid (shape of ``q.grid()``): True where the step is stable for every fan ``zf``."""
    if kind not in ("scalar", "matrix"):
        raise ValueError("kind must be 'scalar' or 'matrix'")
    zs = q.grid()
    if fan is None:
        fan = sector_fan(q.rho, q.alpha_deg, q.n_radii, q.n_angles)
    worst = np.zeros(zs.shape)
    flat = zs.ravel()
    for zf in fan:
        if kind == "scalar":
            with np.errstate(all="ignore"):
                vals = np.abs(scalar_R(s, zf, flat))
        else:
            vals = np.array([_spectral_radius(s, zf, z, q) for z in flat])
        vals = np.where(np.isfinite(vals), vals, np.inf)
        worst = np.maximum(worst, vals.reshape(zs.shape))
    return worst <= 1.0 + _STABLE_SLACK


def _spectral_radius(s, zf, zs, q: StabilityQuery) -> float:
    second = zf if q.literal_matrix else zs
    try:
        m = matrix_M(s, coupled_Z(zf, second, q.xi, q.coupling_alpha))
    except SingularMatrixError:
        return math.inf
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def write_region_csv(path_or_file, q: StabilityQuery, inside: np.ndarray) -> None:
    zs = q.grid()
    own = isinstance(path_or_file, str)
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh)
        w.writerow(["re_zs", "im_zs", "inside"])
        for z, ok in zip(zs.ravel(), inside.ravel()):
            w.writerow([repr(float(z.real)), repr(float(z.imag)), int(bool(ok))])
    finally:
        if own:
            fh.close()
