"""Value types for slow base tableaus and time-dependent coupling coefficients.

Coupling coefficients are matrix-valued polynomials in the scaled time
``tau = theta / H``. A :class:`CouplingPolynomial` stores the coefficient
matrices ``coeffs[k]`` of ``tau**k``; SPC schemes use a single row
(shape ``(1, s)``), IPC schemes use square ``(s, s)`` blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "ButcherTableau",
    "CouplingPolynomial",
    "SpcScheme",
    "IpcScheme",
    "MultirateScheme",
    "poly_eval",
    "poly_integral",
    "scheme_to_dict",
    "scheme_from_dict",
    "dump_scheme",
    "load_scheme",
]

ROW_SUM_TOL = 1e-13


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Runge--Kutta coefficients ``(A, b, b_hat, c)``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    b_hat: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "a", _frozen(self.a))
        object.__setattr__(self, "b", _frozen(self.b))
        object.__setattr__(self, "c", _frozen(self.c))
        if self.b_hat is not None:
            object.__setattr__(self, "b_hat", _frozen(self.b_hat))
        s = self.stages
        if self.a.shape != (s, s) or self.b.shape != (s,) or self.c.shape != (s,):
            raise ValueError(
                f"inconsistent tableau shapes: a{self.a.shape}, b{self.b.shape}, c{self.c.shape}"
            )
        if self.b_hat is not None and self.b_hat.shape != (s,):
            raise ValueError(f"b_hat must have shape ({s},), got {self.b_hat.shape}")

    @property
    def stages(self) -> int:
        return len(self.c)

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.a).copy()

    @property
    def is_explicit(self) -> bool:
        return not np.any(np.triu(self.a))

    @property
    def is_diagonally_implicit(self) -> bool:
        """True when the strictly upper part of ``a`` vanishes (explicit included)."""
        return not np.any(np.triu(self.a, 1))

    @property
    def is_sdirk(self) -> bool:
        d = self.diagonal
        return self.is_diagonally_implicit and d[0] != 0.0 and np.all(d == d[0])

    @property
    def is_esdirk(self) -> bool:
        d = self.diagonal
        return (
            self.is_diagonally_implicit
            and self.stages > 1
            and d[0] == 0.0
            and d[1] != 0.0
            and np.all(d[1:] == d[1])
        )

    @property
    def is_stiffly_accurate(self) -> bool:
        return bool(np.array_equal(self.a[-1], self.b))

    def row_sum_residual(self) -> float:
        """Largest ``|sum_j a[i, j] - c[i]|``."""
        return float(np.max(np.abs(self.a.sum(axis=1) - self.c)))


@dataclass(frozen=True, eq=False)
class CouplingPolynomial:
    """Matrix polynomial ``sum_k coeffs[k] * tau**k``."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, None, :]
        if arr.ndim != 3:
            raise ValueError("coefficients must be a sequence of matrices")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def zeros(cls, rows: int, cols: int, degree: int = 0) -> "CouplingPolynomial":
        return cls(np.zeros((degree + 1, rows, cols)))

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[1:]

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def __getitem__(self, k: int) -> np.ndarray:
        return self.coeffs[k]

    def __call__(self, tau: float) -> np.ndarray:
        return poly_eval(self, tau)

    @property
    def bar(self) -> np.ndarray:
        """Integral over ``[0, 1]``."""
        return poly_integral(self, 1.0)


def poly_eval(p: CouplingPolynomial, tau: float) -> np.ndarray:
    """Evaluate ``sum_k coeffs[k] * tau**k`` by Horner's rule."""
    out = np.zeros(p.shape)
    for ck in p.coeffs[::-1]:
        out = out * tau + ck
    return out


def poly_integral(p: CouplingPolynomial, tau: float) -> np.ndarray:
    """Evaluate ``sum_k coeffs[k] * tau**(k+1) / (k+1)``."""
    out = np.zeros(p.shape)
    for k in range(p.degree, -1, -1):
        out = out * tau + p.coeffs[k] / (k + 1)
    return out * tau


@dataclass(frozen=True, eq=False)
class SpcScheme:
    """Step predictor-corrector scheme: base tableau plus ``gamma(t)`` row."""

    name: str
    base: ButcherTableau
    gamma: CouplingPolynomial
    order: int
    gamma_hat: Optional[CouplingPolynomial] = None
    embedded_order: Optional[int] = None
    exact: bool = True

    family = "SPC"

    def __post_init__(self):
        s = self.base.stages
        if self.gamma.shape != (1, s):
            raise ValueError(f"gamma must be a 1x{s} polynomial row, got {self.gamma.shape}")
        if self.gamma_hat is not None and self.gamma_hat.shape != (1, s):
            raise ValueError(f"gamma_hat must be a 1x{s} polynomial row")

    @property
    def stages(self) -> int:
        return self.base.stages

    @property
    def gamma_bar(self) -> np.ndarray:
        return self.gamma.bar[0]

    @property
    def gamma_hat_bar(self) -> Optional[np.ndarray]:
        return None if self.gamma_hat is None else self.gamma_hat.bar[0]


@dataclass(frozen=True, eq=False)
class IpcScheme:
    """Internal-stage predictor-corrector scheme.

    ``gamma`` couples previously corrected slow tendencies (strictly lower
    triangular), ``psi`` couples predicted ones (lower triangular). The
    optional embedded rows are ``1 x s`` polynomials.
    """

    name: str
    base: ButcherTableau
    gamma: CouplingPolynomial
    psi: CouplingPolynomial
    order: int
    gamma_hat: Optional[CouplingPolynomial] = None
    psi_hat: Optional[CouplingPolynomial] = None
    embedded_order: Optional[int] = None
    exact: bool = True
    delta_c: np.ndarray = field(init=False, repr=False)

    family = "IPC"

    def __post_init__(self):
        s = self.base.stages
        if self.gamma.shape != (s, s) or self.psi.shape != (s, s):
            raise ValueError(f"gamma and psi must be {s}x{s} polynomials")
        for ck in self.gamma.coeffs:
            if np.any(np.triu(ck)):
                raise ValueError("gamma coefficients must be strictly lower triangular")
        for ck in self.psi.coeffs:
            if np.any(np.triu(ck, 1)):
                raise ValueError("psi coefficients must be lower triangular")
        c = self.base.c
        if c[0] < 0.0 or c[-1] > 1.0 or np.any(np.diff(c) < 0.0):
            raise ValueError("IPC base abscissae must be non-decreasing within [0, 1]")
        if not self.base.is_diagonally_implicit:
            raise ValueError("IPC base method must be diagonally implicit")
        if not self.base.is_stiffly_accurate:
            raise ValueError("IPC base method must be stiffly accurate")
        for row in (self.gamma_hat, self.psi_hat):
            if row is not None and row.shape != (1, s):
                raise ValueError(f"embedded rows must be 1x{s} polynomials")
        object.__setattr__(self, "delta_c", _frozen(np.diff(c, prepend=0.0)))

    @property
    def stages(self) -> int:
        return self.base.stages


MultirateScheme = Union[SpcScheme, IpcScheme]


# -- JSON export / import -----------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def _strs(arr) -> list:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 0:
        return _num(arr)
    return [_strs(a) for a in arr]


def _floats(obj) -> np.ndarray:
    return np.array(obj, dtype=float)


def scheme_to_dict(scheme: MultirateScheme) -> dict:
    """Serialize a scheme; every number becomes a round-trip decimal string."""
    base = scheme.base
    doc = {
        "name": scheme.name,
        "family": scheme.family,
        "order": scheme.order,
        "embedded_order": scheme.embedded_order,
        "exact": scheme.exact,
        "a": _strs(base.a),
        "b": _strs(base.b),
        "b_hat": None if base.b_hat is None else _strs(base.b_hat),
        "c": _strs(base.c),
    }
    if isinstance(scheme, SpcScheme):
        doc["gamma"] = _strs(scheme.gamma.coeffs)
        doc["gamma_hat"] = None if scheme.gamma_hat is None else _strs(scheme.gamma_hat.coeffs)
        doc["psi"] = []
    else:
        doc["gamma"] = _strs(scheme.gamma.coeffs)
        doc["psi"] = _strs(scheme.psi.coeffs)
        doc["gamma_hat"] = None if scheme.gamma_hat is None else _strs(scheme.gamma_hat.coeffs)
        doc["psi_hat"] = None if scheme.psi_hat is None else _strs(scheme.psi_hat.coeffs)
    return doc


def scheme_from_dict(doc: dict) -> MultirateScheme:
    base = ButcherTableau(
        a=_floats(doc["a"]),
        b=_floats(doc["b"]),
        c=_floats(doc["c"]),
        b_hat=None if doc.get("b_hat") is None else _floats(doc["b_hat"]),
    )
    family = doc.get("family", "SPC").upper()
    common = dict(
        name=doc["name"],
        base=base,
        order=int(doc["order"]),
        embedded_order=doc.get("embedded_order"),
        exact=bool(doc.get("exact", False)),
    )

    def poly(key):
        val = doc.get(key)
        return None if val is None else CouplingPolynomial(_floats(val))

    if family == "SPC":
        return SpcScheme(gamma=poly("gamma"), gamma_hat=poly("gamma_hat"), **common)
    if family == "IPC":
        return IpcScheme(
            gamma=poly("gamma"),
            psi=poly("psi"),
            gamma_hat=poly("gamma_hat"),
            psi_hat=poly("psi_hat"),
            **common,
        )
    raise ValueError(f"unknown scheme family {family!r}")


def dump_scheme(scheme: MultirateScheme, indent: Optional[int] = 2) -> str:
    return json.dumps(scheme_to_dict(scheme), indent=indent)


def load_scheme(source: Union[str, bytes, Sequence]) -> MultirateScheme:
    """Load a scheme from a JSON string or a path to a JSON file."""
    text = source
    if isinstance(source, str) and not source.lstrip().startswith("{"):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    return scheme_from_dict(json.loads(text))
