"""Residuals of the order, consistency and structure conditions of a scheme.

Every check returns a list of :class:`ConditionReport`. A report is
``required`` when the condition is needed for the order the scheme
advertises; conditions beyond that order, and checks on embedded rows, are
still evaluated but only for information.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .methods import available_methods, registry_lookup
from .tableaux import ButcherTableau, IpcScheme, MultirateScheme, SpcScheme

__all__ = [
    "ConditionReport",
    "QuadratureConstants",
    "quadrature_constants",
    "default_tolerance",
    "base_order_residuals",
    "spc_consistency",
    "spc_order_residuals",
    "ipc_consistency",
    "ipc_order_residuals",
    "verify_scheme",
    "all_required_pass",
    "EXACT_TOL",
    "DECIMAL_TOL",
    "USER_TOL",
]

EXACT_TOL = 1e-13
DECIMAL_TOL = 1e-10
USER_TOL = 1e-9

# The IPC 4a condition weights its second sum by a constant that is not
# defined elsewhere; the 1/((k+1)(k+3)) family is used, by analogy with the
# SPC 4a condition. The fourth-order IPC method only checks out this way.
IPC_4A_WEIGHTS = "omega"


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    residual: float
    tolerance: float
    passed: bool
    anchor: str
    required: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _report(cid, residual, tol, anchor, required=True) -> ConditionReport:
    r = float(residual)
    return ConditionReport(cid, r, tol, bool(abs(r) <= tol), anchor, bool(required))


@dataclass(frozen=True)
class QuadratureConstants:
    zeta: np.ndarray
    omega: np.ndarray
    xi: np.ndarray


def quadrature_constants(kmax: int) -> QuadratureConstants:
    """``zeta_k``, ``omega_k``, ``xi_k`` for ``k = 0..kmax``."""
    k = np.arange(kmax + 1, dtype=float)
    return QuadratureConstants(
        zeta=1.0 / ((k + 1) * (k + 2)),
        omega=1.0 / ((k + 1) * (k + 3)),
        xi=1.0 / ((k + 1) * (k + 2) * (k + 3)),
    )


def default_tolerance(scheme: MultirateScheme) -> float:
    """1e-13 for exact registry methods, 1e-10 for decimal ones, 1e-9 otherwise."""
    if scheme.name in available_methods() and registry_lookup(scheme.name) is scheme:
        return EXACT_TOL if scheme.exact else DECIMAL_TOL
    return USER_TOL


# -- base method ---------------------------------------------------------------

_BASE_CONDITIONS = [
    ("B1", 1, "b.1 = 1"),
    ("B2", 2, "b.c = 1/2"),
    ("B3a", 3, "b.c^2 = 1/3"),
    ("B3b", 3, "b.Ac = 1/6"),
    ("B4a", 4, "b.c^3 = 1/4"),
    ("B4b", 4, "(b*c).Ac = 1/8"),
    ("B4c", 4, "b.Ac^2 = 1/12"),
    ("B4d", 4, "b.AAc = 1/24"),
]


def _base_values(a, b, c):
    ac = a @ c
    return [
        b.sum() - 1.0,
        b @ c - 0.5,
        b @ c**2 - 1.0 / 3.0,
        b @ ac - 1.0 / 6.0,
        b @ c**3 - 0.25,
        (b * c) @ ac - 0.125,
        b @ (a @ c**2) - 1.0 / 12.0,
        b @ (a @ ac) - 1.0 / 24.0,
    ]


def base_order_residuals(
    t: ButcherTableau,
    up_to: int = 4,
    tol: float = EXACT_TOL,
    weights: Optional[np.ndarray] = None,
    prefix: str = "",
) -> List[ConditionReport]:
    """Classical Runge--Kutta order conditions through order ``up_to``."""
    if up_to not in (1, 2, 3, 4):
        raise ValueError("up_to must be 1, 2, 3 or 4")
    b = t.b if weights is None else np.asarray(weights, dtype=float)
    vals = _base_values(t.a, b, t.c)
    return [
        _report(prefix + cid, v, tol, anchor)
        for (cid, order, anchor), v in zip(_BASE_CONDITIONS, vals)
        if order <= up_to
    ]


# -- SPC -----------------------------------------------------------------------


def spc_consistency(s: SpcScheme, tol: Optional[float] = None) -> List[ConditionReport]:
    """``b = gamma_bar`` and internal consistency of the ``gamma`` row."""
    tol = default_tolerance(s) if tol is None else tol
    out = [
        _report("SPC-b", np.max(np.abs(s.base.b - s.gamma_bar)), tol, "b = gamma_bar"),
    ]
    for k, gk in enumerate(s.gamma.coeffs):
        target = 1.0 if k == 0 else 0.0
        out.append(_report(f"SPC-ic{k}", gk.sum() - target, tol, f"sum_j gamma_j^{k} = {target:g}"))
    if s.gamma_hat is not None:
        for k, gk in enumerate(s.gamma_hat.coeffs):
            target = 1.0 if k == 0 else 0.0
            out.append(
                _report(f"SPC-hat-ic{k}", gk.sum() - target, tol,
                        f"sum_j gamma_hat_j^{k} = {target:g}", required=False)
            )
    return out


def _spc_coupling(gamma: np.ndarray, a, c, tol, order, prefix):
    q = quadrature_constants(gamma.shape[0] - 1)
    g_zeta = np.tensordot(q.zeta, gamma, axes=1)
    g_omega = np.tensordot(q.omega, gamma, axes=1)
    vals = [
        ("3a", 3, g_zeta @ c - 1.0 / 6.0, "sum_k zeta_k gamma^k . c = 1/6"),
        ("4a", 4, g_omega @ c - 1.0 / 8.0, "sum_k omega_k gamma^k . c = 1/8"),
        ("4b", 4, g_zeta @ c**2 - 1.0 / 12.0, "sum_k zeta_k gamma^k . c^2 = 1/12"),
        ("4d", 4, g_zeta @ (a @ c) - 1.0 / 24.0, "sum_k zeta_k gamma^k . Ac = 1/24"),
    ]
    return [_report(prefix + cid, v, tol, anchor, required=n <= order) for cid, n, v, anchor in vals]


def spc_order_residuals(
    s: SpcScheme, tol: Optional[float] = None, embedded: bool = False
) -> List[ConditionReport]:
    """Coupling conditions 3a, 4a, 4b, 4d plus base conditions.

    With ``embedded=True`` the embedded row and ``b_hat`` are checked against
    ``embedded_order`` instead; those reports are informational.
    """
    tol = default_tolerance(s) if tol is None else tol
    base = s.base
    if embedded:
        if s.gamma_hat is None:
            return []
        order = s.embedded_order or 1
        gamma = s.gamma_hat.coeffs[:, 0, :]
        weights = s.gamma_hat_bar
        prefix = "SPC-hat-"
    else:
        order = s.order
        gamma = s.gamma.coeffs[:, 0, :]
        weights = base.b
        prefix = "SPC-"
    out = _spc_coupling(gamma, base.a, base.c, tol, order, prefix)
    out += base_order_residuals(base, min(max(order, 1), 4), tol, weights, prefix + "base-")
    if embedded:
        out = [ConditionReport(**{**r.to_dict(), "required": False}) for r in out]
    return out


# -- IPC -----------------------------------------------------------------------


def _lower_ones(s):
    return np.tril(np.ones((s, s)))


def _shift(s):
    return np.eye(s, k=-1)


def ipc_consistency(s: IpcScheme, tol: Optional[float] = None) -> List[ConditionReport]:
    """Self-consistency, internal consistency and the simplifying assumption."""
    tol = default_tolerance(s) if tol is None else tol
    n = s.stages
    a = s.base.a
    d = np.diag(a)
    t = np.tril(a, -1)
    e = _lower_ones(n)
    out = [
        _report("IPC-T", np.max(np.abs(t - e @ s.gamma.bar)), tol, "T = E Gamma_bar"),
        _report("IPC-D", np.max(np.abs(np.diag(d) - e @ s.psi.bar)), tol, "D = E Psi_bar"),
    ]
    ones = np.ones(n)
    for k in range(max(s.gamma.degree, s.psi.degree) + 1):
        pk = _coeff(s.psi, k) + _coeff(s.gamma, k)
        target = s.delta_c if k == 0 else np.zeros(n)
        out.append(
            _report(f"IPC-ic{k}", np.max(np.abs(pk @ ones - target)), tol,
                    f"(Psi^{k} + Gamma^{k}) 1 = {'delta_c' if k == 0 else '0'}")
        )
    out += _simplifying_reports(s, tol)
    if s.gamma_hat is not None and s.psi_hat is not None:
        for k in range(max(s.gamma_hat.degree, s.psi_hat.degree) + 1):
            total = (_coeff(s.psi_hat, k) + _coeff(s.gamma_hat, k)).sum()
            target = s.delta_c[-1] if k == 0 else 0.0
            out.append(
                _report(f"IPC-hat-ic{k}", total - target, tol,
                        f"sum(psi_hat^{k} + gamma_hat^{k}) = {'delta_c_s' if k == 0 else '0'}",
                        required=False)
            )
    return out


def _coeff(p, k):
    return p.coeffs[k] if k <= p.degree else np.zeros(p.shape)


def simplifying_residuals(s: IpcScheme) -> np.ndarray:
    """``max |Gamma^k - Psi^k D^+ T|`` for each ``k``.

    ``D^+`` inverts the nonzero diagonal entries and zeroes the rest; with a
    zero first diagonal (ESDIRK) the first row of ``T`` vanishes, so the
    product is unaffected by the excluded index.
    """
    a = s.base.a
    d = np.diag(a)
    t = np.tril(a, -1)
    dinv = np.where(d != 0.0, 1.0 / np.where(d != 0.0, d, 1.0), 0.0)
    kmax = max(s.gamma.degree, s.psi.degree)
    return np.array([
        np.max(np.abs(_coeff(s.gamma, k) - (_coeff(s.psi, k) * dinv) @ t))
        for k in range(kmax + 1)
    ])


def _simplifying_reports(s: IpcScheme, tol: float) -> List[ConditionReport]:
    d = np.diag(s.base.a)
    zero = np.flatnonzero(d == 0.0)
    note = ""
    if zero.size:
        warnings.warn(
            f"{s.name}: zero diagonal at stage(s) {list(zero + 1)} excluded from the "
            "simplifying-assumption check",
            stacklevel=3,
        )
        note = f" (stages {', '.join(str(i + 1) for i in zero)} excluded)"
    return [
        _report(f"IPC-simp{k}", r, max(tol, 1e-12), f"Gamma^{k} = Psi^{k} D^-1 T{note}")
        for k, r in enumerate(simplifying_residuals(s))
    ]


def _ipc_values(gamma, psi, a, c, delta_c):
    """Residuals of 3a, 3b, 4a..4i for coefficient stacks ``gamma``/``psi``."""
    n = len(c)
    kmax = gamma.shape[0] - 1
    q = quadrature_constants(kmax)
    d = np.diag(np.diag(a))
    t = np.tril(a, -1)
    ell = _shift(n)
    es = np.zeros(n)
    es[-1] = 1.0
    dcm = _lower_ones(n) * delta_c[None, :]
    p = psi + gamma
    s_zeta = ell @ a + np.tensordot(q.zeta, p, axes=1)
    s_omega = 0.5 * ell @ a + np.tensordot(q.omega, p, axes=1)
    s_xi = 0.5 * ell @ a + np.tensordot(q.xi, p, axes=1)
    psi_zeta = np.tensordot(q.zeta, psi, axes=1)
    gamma_zeta = np.tensordot(q.zeta, gamma, axes=1)
    ac = a @ c
    dc2 = delta_c**2
    return {
        "3a": delta_c @ s_zeta @ c - 1 / 6,
        "3b": es @ (d @ ac + 0.5 * t @ c**2) - 1 / 6,
        "4a": (delta_c * (ell @ c)) @ s_zeta @ c + dc2 @ s_omega @ c - 1 / 8,
        "4b": ((es @ d) * c) @ ac + 0.5 * ((es @ t) * c) @ c**2 - 1 / 8,
        "4c": delta_c @ s_zeta @ c**2 - 1 / 12,
        "4d": es @ (d @ (a @ c**2) + t @ c**3 / 3) - 1 / 12,
        "4e": delta_c @ ell @ dcm @ s_zeta @ c + dc2 @ s_xi @ c - 1 / 24,
        "4f": delta_c @ (ell @ d + psi_zeta) @ ac
        + 0.5 * delta_c @ (ell @ t + gamma_zeta) @ c**2 - 1 / 24,
        "4g": delta_c @ s_zeta @ ac - 1 / 24,
        "4h": es @ a @ (d @ ac + 0.5 * t @ c**2) - 1 / 24,
        "4i": es @ d @ a @ ac + es @ t @ dcm @ s_zeta @ c - 1 / 24,
    }


def _stack(p, kmax):
    return np.array([_coeff(p, k) for k in range(kmax + 1)])


def ipc_order_residuals(s: IpcScheme, tol: Optional[float] = None) -> List[ConditionReport]:
    """Coupling conditions 3a, 3b and 4a-4i, plus base conditions."""
    tol = default_tolerance(s) if tol is None else tol
    kmax = max(s.gamma.degree, s.psi.degree)
    vals = _ipc_values(_stack(s.gamma, kmax), _stack(s.psi, kmax), s.base.a, s.base.c, s.delta_c)
    out = []
    for cid, v in vals.items():
        anchor = f"IPC coupling condition {cid}"
        if cid == "4a":
            anchor += f" (second-sum weights read as {IPC_4A_WEIGHTS})"
        out.append(_report("IPC-" + cid, v, tol, anchor, required=int(cid[0]) <= s.order))
    out += base_order_residuals(s.base, min(s.order, 4), tol, prefix="IPC-base-")
    return out


# -- driver --------------------------------------------------------------------


def verify_scheme(s: MultirateScheme, tol: Optional[float] = None) -> List[ConditionReport]:
    """Every applicable check for ``s``."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if isinstance(s, SpcScheme):
            return (
                spc_consistency(s, tol)
                + spc_order_residuals(s, tol)
                + spc_order_residuals(s, tol, embedded=True)
            )
        return ipc_consistency(s, tol) + ipc_order_residuals(s, tol)


def all_required_pass(reports: Iterable[ConditionReport]) -> bool:
    return all(r.passed for r in reports if r.required)


def failed(reports: Sequence[ConditionReport]) -> List[ConditionReport]:
    return [r for r in reports if r.required and not r.passed]
