"""Registry of the coupled SPC and IPC multirate methods.

Tableau conventions used in the transcriptions below:

* SPC: rows of the slow base matrix ``A``, then the ``gamma(t)`` row, then
  the embedded ``gamma_hat(t)`` row. ``b`` is the last row of ``A`` (every
  registered base is stiffly accurate); ``b_hat`` is the integral of the
  embedded row over ``[0, 1]``.
* IPC: a ``Gamma(t)`` block (strictly lower) next to a ``Psi(t)`` block
  (lower), the embedded ``gamma_hat | psi_hat`` row last. Where the base
  method is not printed separately it is rebuilt from ``T = E Gamma_bar``
  and ``D = E Psi_bar`` in exact rational arithmetic.

Polynomials are written as ``(constant, slope)`` pairs, i.e. ``c0 + c1 t``.
Coefficients with surds are evaluated from their closed forms; rational ones
go through :class:`fractions.Fraction`.
"""

from __future__ import annotations

from fractions import Fraction as Fr
from typing import Callable, Dict, List, Sequence

import numpy as np

from .tableaux import ButcherTableau, CouplingPolynomial, IpcScheme, MultirateScheme, SpcScheme

__all__ = ["available_methods", "registry_lookup", "UnknownMethodError", "BASE_TABLEAUS"]

SQRT2 = np.sqrt(2.0)
INV_SQRT2 = 1.0 / SQRT2
G2 = 1.0 - INV_SQRT2  # diagonal of Alexander's SDIRK2 and TR-BDF2


class UnknownMethodError(KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(
            f"unknown method {name!r}; available: {', '.join(available_methods())}"
        )

    def __str__(self):
        return self.args[0]


def _row(pairs: Sequence) -> np.ndarray:
    """``[(c0, c1), ...]`` -> coefficient array of shape ``(2, 1, s)``."""
    arr = np.array([[float(p[0]) for p in pairs], [float(p[1]) for p in pairs]])
    return arr[:, None, :]


def _f(rows: Sequence[Sequence]) -> np.ndarray:
    return np.array([[float(x) for x in r] for r in rows])


# -- slow base methods ---------------------------------------------------------

# Alexander's two stage, second order, L-stable SDIRK.
SDIRK2 = ButcherTableau(
    a=[[G2, 0.0], [INV_SQRT2, G2]],
    b=[INV_SQRT2, G2],
    c=[G2, 1.0],
)

# TR-BDF2 in ESDIRK form.
TRBDF2 = ButcherTableau(
    a=[[0.0, 0.0, 0.0], [G2, G2, 0.0], [0.5 * INV_SQRT2, 0.5 * INV_SQRT2, G2]],
    b=[0.5 * INV_SQRT2, 0.5 * INV_SQRT2, G2],
    c=[0.0, 2.0 - SQRT2, 1.0],
)

_SDIRK3M_A = [
    [Fr(9, 40), 0, 0, 0],
    [Fr(163, 520), Fr(9, 40), 0, 0],
    [Fr(-6481433, 8838675), Fr(87795409, 70709400), Fr(9, 40), 0],
    [Fr(4032, 9943), Fr(6929, 15485), Fr(-723, 9272), Fr(9, 40)],
]
SDIRK3M = ButcherTableau(
    a=_f(_SDIRK3M_A),
    b=_f(_SDIRK3M_A[-1:])[0],
    c=_f([[Fr(9, 40), Fr(7, 13), Fr(11, 15), 1]])[0],
)

# Decimal-only table (16 printed digits).
_ESDIRK3_A = np.array([
    [0.0, 0.0, 0.0, 0.0],
    [0.4358665215084590, 0.4358665215084590, 0.0, 0.0],
    [0.2648804871412033, -0.09178037827254760, 0.4358665215084590, 0.0],
    [0.1921013555637903, -0.6181218831132021, 0.9901540060409528, 0.4358665215084590],
])
ESDIRK3 = ButcherTableau(
    a=_ESDIRK3_A,
    b=_ESDIRK3_A[-1],
    c=[0.0, 0.8717330430169180, 0.6089666303771147, 1.0],
)

_SDIRK4M_A = [
    [Fr(1, 4), 0, 0, 0, 0],
    [Fr(13, 20), Fr(1, 4), 0, 0, 0],
    [Fr(580, 1287), Fr(-175, 5148), Fr(1, 4), 0, 0],
    [Fr(12698, 37375), Fr(-201, 2990), Fr(891, 11500), Fr(1, 4), 0],
    [Fr(944, 1365), Fr(-400, 819), Fr(99, 35), Fr(-575, 252), Fr(1, 4)],
]
SDIRK4M = ButcherTableau(
    a=_f(_SDIRK4M_A),
    b=_f(_SDIRK4M_A[-1:])[0],
    c=_f([[Fr(1, 4), Fr(9, 10), Fr(2, 3), Fr(3, 5), 1]])[0],
)

# ESDIRK4(3)6L[2]SA, 16 printed digits; first and second columns coincide.
# a[5, 2] is printed as 0.2487...; the value below is forced by the row sum
# (c_6 = 1) and by b = gamma_bar.
_E4_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.25, 0.25, 0.0, 0.0, 0.0, 0.0],
    [-0.05177669529663688, -0.05177669529663688, 0.25, 0.0, 0.0, 0.0],
    [-0.07655460838455727, -0.07655460838455727, 0.5281092167691145, 0.25, 0.0, 0.0],
    [-0.7274063478261298, -0.7274063478261298, 1.584995061740679, 0.6598176339115803,
     0.25, 0.0],
    [-0.01558763503571650, -0.01558763503571650, 0.3876576709132035, 0.5017726195721632,
     -0.1082550204139335, 0.25],
])
ESDIRK4 = ButcherTableau(
    a=_E4_A,
    b=_E4_A[-1],
    c=[0.0, 0.5, (2.0 - SQRT2) / 4.0, 5.0 / 8.0, 26.0 / 25.0, 1.0],
)

BASE_TABLEAUS: Dict[str, ButcherTableau] = {
    "SDIRK2(1)2": SDIRK2,
    "ESDIRK2(1)3": TRBDF2,
    "SDIRK3(2)4": SDIRK3M,
    "ESDIRK3(2)4": ESDIRK3,
    "SDIRK4(3)5": SDIRK4M,
    "ESDIRK4(3)6": ESDIRK4,
}


def _with_b_hat(base: ButcherTableau, b_hat) -> ButcherTableau:
    return ButcherTableau(a=base.a, b=base.b, c=base.c, b_hat=b_hat)


def _spc(name, base, gamma, gamma_hat, order, embedded_order, exact=True) -> SpcScheme:
    gamma = CouplingPolynomial(_row(gamma))
    gamma_hat = CouplingPolynomial(_row(gamma_hat))
    return SpcScheme(
        name=name,
        base=_with_b_hat(base, gamma_hat.bar[0]),
        gamma=gamma,
        gamma_hat=gamma_hat,
        order=order,
        embedded_order=embedded_order,
        exact=exact,
    )


# -- SPC methods -----------------------------------------------------------------


def _spc_sdirk2() -> SpcScheme:
    return _spc(
        "SPC-SDIRK2(1)2",
        SDIRK2,
        gamma=[(5 * SQRT2 - 6, 12 - 9 * SQRT2), (7 - 5 * SQRT2, 9 * SQRT2 - 12)],
        gamma_hat=[(6 * SQRT2 - 36 / 5, 78 / 5 - 12 * SQRT2),
                   (41 / 5 - 6 * SQRT2, 12 * SQRT2 - 78 / 5)],
        order=2,
        embedded_order=1,
    )


def _spc_esdirk2() -> SpcScheme:
    g12 = (5 * INV_SQRT2 - 3, 6 - 9 * INV_SQRT2)
    h12 = (3 * SQRT2 - 18 / 5, 39 / 5 - 6 * SQRT2)
    return _spc(
        "SPC-ESDIRK2(1)3",
        TRBDF2,
        gamma=[g12, g12, (7 - 5 * SQRT2, 9 * SQRT2 - 12)],
        gamma_hat=[h12, h12, (41 / 5 - 6 * SQRT2, 12 * SQRT2 - 78 / 5)],
        order=2,
        embedded_order=1,
    )


def _spc_sdirk3() -> SpcScheme:
    return _spc(
        "SPC-SDIRK3(2)4",
        SDIRK3M,
        gamma=[
            (Fr(3, 2), Fr(-21765, 9943)),
            (Fr(-46850957023, 152236344800), Fr(18740344238109, 12407262101200)),
            (Fr(-2336165553, 30447268960), Fr(-2318739807, 928641703280)),
            (Fr(-231399837, 2003109800), Fr(341049771, 500777450)),
        ],
        gamma_hat=[
            (Fr(17, 9), Fr(-458, 153)),
            (Fr(-5, 7), Fr(1143703567597, 484654507050)),
            (Fr(-3214490524810792571, 14788625074813908864),
             Fr(12128361703356241349, 41321158297274157120)),
            (Fr(70261070970241507, 1643180563868212096),
             Fr(6985915649614123877, 20539757048352651200)),
        ],
        order=3,
        embedded_order=2,
    )


def _spc_esdirk3() -> SpcScheme:
    # Printed as 0.2435... and 0.2481...; corrected values restore
    # sum(gamma^1) = 0, gamma_bar = b and sum(gamma_hat^0) = 1.
    return _spc(
        "SPC-ESDIRK3(2)4",
        ESDIRK3,
        gamma=[
            (0.07530362905710443, 0.2335954530133717),
            (-2.542040109838414, 3.847836453450424),
            (3.198591776366924, -4.416875540651942),
            (0.2681447044143857, 0.3354436341881466),
        ],
        gamma_hat=[
            (0.3812962236875004, -0.5331294033713856),
            (-1.000000000000000, 0.1096316239241135),
            (1.688048335476923, -0.7855025327869668),
            (-0.06934455916442332, 1.209000312234239),
        ],
        order=3,
        embedded_order=2,
        exact=False,
    )


def _spc_sdirk4() -> SpcScheme:
    return _spc(
        "SPC-SDIRK4(3)5",
        SDIRK4M,
        gamma=[
            (Fr(487, 273), Fr(-142, 65)),
            (Fr(-475, 3276), Fr(-125, 182)),
            (Fr(99, 56), Fr(297, 140)),
            (Fr(-575, 252), 0),
            (Fr(-1, 8), Fr(3, 4)),
        ],
        gamma_hat=[
            (Fr(1, 27), Fr(357179, 270270)),
            (Fr(-17, 8), Fr(222331, 72072)),
            (Fr(110483689, 63252720), Fr(1135934341, 442769040)),
            (Fr(28581755, 18975816), Fr(-11524110095, 1461137832)),
            (Fr(-10434149, 63252720), Fr(636740663, 695779920)),
        ],
        order=4,
        embedded_order=3,
    )


def _spc_esdirk4() -> SpcScheme:
    # gamma_6 slope printed as -0.2447...; -0.3477... restores gamma_bar_6 =
    # a_66 and sum(gamma^1) = 0 with gamma_1 = gamma_2.
    g12 = (3.066401942782878, -6.163979155637189)
    h12 = (2.375000000000000, -4.935764673620373)
    return _spc(
        "SPC-ESDIRK4(3)6",
        ESDIRK4,
        gamma=[
            g12,
            g12,
            (-4.000000000000000, 8.775315341826407),
            (-0.5967621323323260, 2.197069503808978),
            (-0.9599111955850004, 1.703312350342134),
            (0.4238694423515700, -0.3477388847031400),
        ],
        gamma_hat=[
            h12,
            h12,
            (-3.058823529411765, 7.151127236629060),
            (-0.05607965938087753, 1.151758875793870),
            (-1.734976675593132, 3.303286684519598),
            (1.099879864385774, -1.734643449701781),
        ],
        order=4,
        embedded_order=3,
        exact=False,
    )


# -- IPC methods -------------------------------------------------------------------


def _square(entries: Dict, s: int) -> np.ndarray:
    """``{(i, j): (c0, c1)}`` with 1-based indices -> ``(2, s, s)`` array."""
    out = np.zeros((2, s, s))
    for (i, j), (c0, c1) in entries.items():
        out[0, i - 1, j - 1] = float(c0)
        out[1, i - 1, j - 1] = float(c1)
    return out


def _exact_base(gamma: Dict, psi: Dict, c: Sequence, s: int) -> ButcherTableau:
    """Rebuild ``A = E Gamma_bar + diag(E Psi_bar)`` in rational arithmetic."""

    def bar(entries):
        m = [[Fr(0)] * s for _ in range(s)]
        for (i, j), (c0, c1) in entries.items():
            m[i - 1][j - 1] = Fr(c0) + Fr(c1) / 2
        return m

    gb, pb = bar(gamma), bar(psi)
    a = [[Fr(0)] * s for _ in range(s)]
    for i in range(s):
        for j in range(s):
            t = sum((gb[l][j] for l in range(i + 1)), Fr(0))
            d = sum((pb[l][j] for l in range(i + 1)), Fr(0))
            a[i][j] = t + (d if i == j else 0)
    a_f = _f(a)
    return ButcherTableau(a=a_f, b=a_f[-1].copy(), c=[float(x) for x in c])


def _ipc(name, base, gamma, psi, gamma_hat, psi_hat, order, embedded_order) -> IpcScheme:
    return IpcScheme(
        name=name,
        base=base,
        gamma=CouplingPolynomial(gamma),
        psi=CouplingPolynomial(psi),
        gamma_hat=CouplingPolynomial(gamma_hat),
        psi_hat=CouplingPolynomial(psi_hat),
        order=order,
        embedded_order=embedded_order,
    )


def _ipc_sdirk2() -> IpcScheme:
    return _ipc(
        "IPC-SDIRK2(1)2",
        SDIRK2,
        gamma=[[[0, 0], [INV_SQRT2, 0]]],
        psi=[[[G2, 0], [INV_SQRT2 - 1, G2]]],
        gamma_hat=[[[3 / 5, 0]]],
        psi_hat=[[[INV_SQRT2 - 1, 2 / 5]]],
        order=2,
        embedded_order=1,
    )


def _ipc_esdirk2() -> IpcScheme:
    return _ipc(
        "IPC-ESDIRK2(1)3",
        TRBDF2,
        gamma=[[[0, 0, 0], [G2, 0, 0], [1.5 * INV_SQRT2 - 1, 0.5 * INV_SQRT2, 0]]],
        psi=[[[0, 0, 0], [0, G2, 0], [0, INV_SQRT2 - 1, G2]]],
        gamma_hat=[[[INV_SQRT2 - 7 / 10, 3 / 10, 0]]],
        psi_hat=[[[0, INV_SQRT2 - 1, 2 / 5]]],
        order=2,
        embedded_order=1,
    )


_IPC3_GAMMA = {
    (2, 1): (Fr(19, 120), 0),
    (3, 1): (Fr(1, 10), 0),
    (3, 2): (Fr(-1, 10), 0),
    (4, 1): (Fr(17341, 182400), 0),
    (4, 2): (Fr(-73, 70), 0),
    (4, 3): (Fr(687111, 425600), 0),
    (5, 1): (Fr(-21487, 60800), 0),
    (5, 2): (Fr(1618427, 1702400), 0),
    (5, 3): (Fr(-1144471, 1702400), 0),
    (5, 4): (Fr(3, 40), 0),
}
_IPC3_PSI = {
    (1, 1): (Fr(7, 40), 0),
    (2, 1): (Fr(-7, 40), 0),
    (2, 2): (Fr(7, 40), 0),
    (3, 2): (Fr(-7, 40), 0),
    (3, 3): (Fr(7, 40), 0),
    (4, 3): (Fr(-7, 40), 0),
    (4, 4): (Fr(7, 40), 0),
    (5, 4): (Fr(-7, 40), 0),
    (5, 5): (Fr(7, 40), 0),
}
_IPC3_C = [Fr(7, 40), Fr(1, 3), Fr(1, 3), 1, 1]


def _ipc_sdirk3() -> IpcScheme:
    s = 5
    return _ipc(
        "IPC-SDIRK3(2)5",
        _exact_base(_IPC3_GAMMA, _IPC3_PSI, _IPC3_C, s),
        gamma=_square(_IPC3_GAMMA, s)[:1],
        psi=_square(_IPC3_PSI, s)[:1],
        gamma_hat=_row([(Fr(2833, 60800), 0), (Fr(-9, 35), 0), (Fr(17257, 425600), 0),
                        (Fr(1, 6), 0), (0, 0)])[:1],
        psi_hat=_row([(0, 0), (0, 0), (0, 0), (Fr(-7, 40), 0), (Fr(107, 600), 0)])[:1],
        order=3,
        embedded_order=2,
    )


_IPC4_GAMMA = {
    (2, 1): (Fr(4, 7), Fr(-73, 70)),
    (3, 1): (Fr(2253133, 425250), Fr(-2592641, 425250)),
    (3, 2): (Fr(-30, 7), Fr(32, 7)),
    (4, 1): (Fr(-5, 14), Fr(-79813, 26425)),
    (4, 2): (Fr(-5, 6), Fr(417821, 79275)),
    (4, 3): (Fr(4, 9), Fr(-180296, 237825)),
    (5, 1): (Fr(6626912, 467775), Fr(-1709523149, 68615910)),
    (5, 2): (Fr(-81, 7), Fr(8462196, 449225)),
    (5, 3): (Fr(-8, 9), Fr(2352991367, 1035014400)),
    (5, 4): (Fr(-2, 11), Fr(180121, 143616)),
    (6, 1): (Fr(-796870764337, 204132332250), Fr(1646963990099, 204132332250)),
    (6, 2): (Fr(113260367, 22910475), Fr(-78294288, 7636825)),
    (6, 3): (Fr(-28671224497, 17595244800), Fr(49839881579, 17595244800)),
    (6, 4): (Fr(4299217, 2441472), Fr(-5075915, 2441472)),
    (6, 5): (Fr(-2, 3), Fr(152, 165)),
}
# The printed constant terms of psi_{6,3..5} are listed out of column order;
# they are matched to slopes by denominator, which makes E Psi_bar diagonal.
_IPC4_PSI = {
    (1, 1): (Fr(1, 5), 0),
    (2, 1): (Fr(-393, 140), Fr(73, 14)),
    (2, 2): (Fr(16, 7), Fr(-146, 35)),
    (3, 1): (Fr(-454241, 170100), Fr(454241, 85050)),
    (3, 2): (Fr(314516, 212625), Fr(-714082, 212625)),
    (3, 3): (Fr(3, 7), Fr(-16, 35)),
    (4, 1): (Fr(23293, 2268), Fr(-23293, 1134)),
    (4, 2): (Fr(-20473, 1890), Fr(20473, 945)),
    (4, 3): (Fr(-997, 19440), Fr(-2891, 9720)),
    (4, 4): (Fr(5285, 3888), Fr(-22537, 9720)),
    (5, 1): (Fr(-7713555547, 621579420), Fr(7713555547, 310789710)),
    (5, 2): (Fr(851872739, 70634025), Fr(-1703745478, 70634025)),
    (5, 3): (Fr(3353446993, 2260288800), Fr(-3353446993, 1130144400)),
    (5, 4): (Fr(-30061615, 12915936), Fr(137392139, 32289840)),
    (5, 5): (Fr(-52224, 639485), Fr(360242, 639485)),
    (6, 1): (Fr(-9215792648141, 898182261900), Fr(9215792648141, 449091130950)),
    (6, 2): (Fr(174867684313, 14580880875), Fr(-349735368626, 14580880875)),
    (6, 3): (Fr(-115392839939, 1306446926400), Fr(115392839939, 653223463200)),
    (6, 4): (Fr(-61269407807, 37327055040), Fr(61269407807, 18663527520)),
    (6, 5): (Fr(-9832286, 10871245), Fr(15316074, 10871245)),
    (6, 6): (Fr(11, 17), Fr(-76, 85)),
}
_IPC4_C = [Fr(1, 5), Fr(1, 4), Fr(1, 2), Fr(1, 2), Fr(3, 4), 1]


def _ipc_sdirk4() -> IpcScheme:
    s = 6
    return _ipc(
        "IPC-SDIRK4(3)6",
        _exact_base(_IPC4_GAMMA, _IPC4_PSI, _IPC4_C, s),
        gamma=_square(_IPC4_GAMMA, s),
        psi=_square(_IPC4_PSI, s),
        gamma_hat=_row([
            (Fr(-669461750351, 192124548000), Fr(694507614551, 96062274000)),
            (Fr(9560707, 2156280), Fr(-9882343, 1078140)),
            (Fr(-14640287027, 9936138240), Fr(13007509307, 4968069120)),
            (Fr(2715895, 1880064), Fr(-1639519, 940032)),
            (Fr(-35, 99), Fr(49, 99)),
            (0, 0),
        ]),
        psi_hat=_row([
            (Fr(-13988077, 1360800), Fr(13988077, 680400)),
            (Fr(10360601, 850500), Fr(-10360601, 425250)),
            (Fr(-1, 15), Fr(2, 15)),
            (Fr(-11, 6), Fr(11, 3)),
            (Fr(-7, 8), Fr(27, 20)),
            (Fr(5, 9), Fr(-7, 9)),
        ]),
        order=4,
        embedded_order=3,
    )


_BUILDERS: Dict[str, Callable[[], MultirateScheme]] = {
    "SPC-SDIRK2(1)2": _spc_sdirk2,
    "SPC-ESDIRK2(1)3": _spc_esdirk2,
    "SPC-SDIRK3(2)4": _spc_sdirk3,
    "SPC-ESDIRK3(2)4": _spc_esdirk3,
    "SPC-SDIRK4(3)5": _spc_sdirk4,
    "SPC-ESDIRK4(3)6": _spc_esdirk4,
    "IPC-SDIRK2(1)2": _ipc_sdirk2,
    "IPC-ESDIRK2(1)3": _ipc_esdirk2,
    "IPC-SDIRK3(2)5": _ipc_sdirk3,
    "IPC-SDIRK4(3)6": _ipc_sdirk4,
}
_CACHE: Dict[str, MultirateScheme] = {}


def available_methods() -> List[str]:
    return list(_BUILDERS)


def registry_lookup(name: str) -> MultirateScheme:
    """Return the registered scheme ``name`` (e.g. ``"SPC-SDIRK2(1)2"``)."""
    key = name.strip()
    if key not in _BUILDERS:
        raise UnknownMethodError(name)
    if key not in _CACHE:
        _CACHE[key] = _BUILDERS[key]()
    return _CACHE[key]
