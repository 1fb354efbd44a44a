"""phi-functions ``phi_0(z) = e^z``, ``phi_{k+1}(z) = int_0^1 e^{z(1-t)} t^k dt``.

This normalization differs from the common ``phi_k = sum z^j/(j+k)!`` one by a
factor ``(k-1)!``. It satisfies ``phi_{k+1}(0) = 1/(k+1)`` and the recurrence
``phi_{k+1}(z) = (k phi_k(z) - 1) / z`` for ``k >= 1``.

The upward recurrence loses about ``log10(k/|z|)`` digits per step once
``k > |z|``, so those entries come from the Taylor series
``phi_k(z) = (k-1)! sum_j z^j / (j+k)!`` instead, whose terms are then
monotonically decreasing.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .tableaux import IpcScheme, SpcScheme

__all__ = ["phi", "phi_series", "stability_weights_spc", "stability_weights_ipc", "K_MAX"]

K_MAX = 12
SERIES_RADIUS = 0.5
_SERIES_TOL = 1e-17
_SERIES_MAX_TERMS = 400


def _phi_taylor(z: np.ndarray, k: int) -> np.ndarray:
    """Taylor series of ``phi_k`` for ``k >= 1``, summed until terms are negligible."""
    term = np.full(z.shape, 1.0 / k, dtype=z.dtype)
    total = term.copy()
    for j in range(_SERIES_MAX_TERMS):
        term = term * z / (j + k + 1)
        total = total + term
        if np.all(np.abs(term) <= _SERIES_TOL * np.abs(total)):
            break
    return total


def _phi_upward(z: np.ndarray, kmax: int) -> np.ndarray:
    out = np.empty(z.shape + (kmax + 1,), dtype=z.dtype)
    ez = np.exp(z)
    out[..., 0] = ez
    if kmax == 0:
        return out
    # entries near zero overflow or divide by zero here; the series replaces them
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out[..., 1] = (ez - 1.0) / z
        for k in range(1, kmax):
            out[..., k + 1] = (k * out[..., k] - 1.0) / z
    return out


def phi_series(z, kmax: int = K_MAX) -> np.ndarray:
    """``[phi_0(z), ..., phi_kmax(z)]`` along a new trailing axis.

    ``z`` may be a scalar or array, real or complex.
    """
    if kmax < 0:
        raise ValueError("kmax must be non-negative")
    z = np.asarray(z)
    z = z.astype(np.result_type(z.dtype, np.float64))
    out = _phi_upward(z, kmax)
    r = np.abs(z)
    for k in range(1, kmax + 1):
        use = r < max(float(k), SERIES_RADIUS)
        if np.any(use):
            out[..., k][use] = _phi_taylor(z[use], k)
    return out


def phi(k: int, z):
    """Single ``phi_k(z)``; returns a scalar for scalar input."""
    if k < 0:
        raise ValueError("k must be non-negative")
    val = phi_series(z, k)[..., k]
    return val[()] if np.ndim(val) == 0 else val


def stability_weights_spc(s: SpcScheme, zf) -> Tuple[np.ndarray, np.ndarray]:
    """``mu = sum_k gamma^k phi_{k+1}(zf)`` and ``mu~ = sum_k gamma^k phi_{k+2}(zf)/(k+1)``."""
    g = s.gamma.coeffs[:, 0, :]
    kdeg = g.shape[0] - 1
    ph = phi_series(complex(zf), kdeg + 2)
    k = np.arange(kdeg + 1)
    mu = ph[k + 1] @ g
    mu_tilde = (ph[k + 2] / (k + 1)) @ g
    return mu, mu_tilde


def stability_weights_ipc(s: IpcScheme, zf):
    """``(mu, nu, mu~, nu~)`` matrices for the IPC transfer functions.

    ``mu = sum_k diag(phi_{k+1}(dc zf)) Gamma^k``, ``nu`` likewise with ``Psi``;
    the tilde versions use ``diag(dc * phi_{k+2}(dc zf) / (k+1))``.
    """
    dc = s.delta_c
    kdeg = max(s.gamma.degree, s.psi.degree)
    ph = phi_series(dc * complex(zf), kdeg + 2)  # (s, kdeg + 3)
    n = s.stages
    mu = np.zeros((n, n), dtype=complex)
    nu = np.zeros((n, n), dtype=complex)
    mu_t = np.zeros((n, n), dtype=complex)
    nu_t = np.zeros((n, n), dtype=complex)
    for k in range(kdeg + 1):
        gk = s.gamma.coeffs[k] if k <= s.gamma.degree else 0.0
        pk = s.psi.coeffs[k] if k <= s.psi.degree else 0.0
        w = ph[:, k + 1][:, None]
        wt = (dc * ph[:, k + 2] / (k + 1))[:, None]
        mu += w * gk
        nu += w * pk
        mu_t += wt * gk
        nu_t += wt * pk
    return mu, nu, mu_t, nu_t
