"""Spin matrices, total-spin projectors and the two-qubit merging unitary.

All single-site bases are ordered by descending magnetization,
``m = +s, s - 1, ..., -s``.  Clebsch-Gordan coefficients follow the
Condon-Shortley convention and are evaluated exactly (squared values as
rationals) before conversion to floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial, sqrt
from typing import NamedTuple, Union

import numpy as np

__all__ = [
    "HalfInt",
    "SpinTriple",
    "as_halfint",
    "clebsch_gordan",
    "spin_operators",
    "total_spin_projector",
    "total_spin_squared",
    "two_level_spin",
    "merging_unitary",
    "effective_spins",
    "magnetizations",
]


@dataclass(frozen=True, order=True)
class HalfInt:
    """A non-negative integer or half-integer stored as twice its value."""

    twice: int

    def __post_init__(self):
        if self.twice < 0:
            raise ValueError(f"spin magnitude must be >= 0, got {self.twice}/2")

    @property
    def dim(self) -> int:
        return self.twice + 1

    @property
    def value(self) -> Fraction:
        return Fraction(self.twice, 2)

    def __float__(self) -> float:
        return self.twice / 2

    def __repr__(self) -> str:
        if self.twice % 2:
            return f"HalfInt({self.twice}/2)"
        return f"HalfInt({self.twice // 2})"


SpinLike = Union[HalfInt, int, float, Fraction]


def as_halfint(s: SpinLike) -> HalfInt:
    if isinstance(s, HalfInt):
        return s
    twice = Fraction(s) * 2
    if twice.denominator != 1:
        raise ValueError(f"{s!r} is not a multiple of 1/2")
    return HalfInt(int(twice))


def magnetizations(s: SpinLike) -> np.ndarray:
    """Magnetic quantum numbers ``m`` in the global (descending) order."""
    s = as_halfint(s)
    return (s.twice - 2 * np.arange(s.dim)) / 2


class SpinTriple(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray


def spin_operators(s: SpinLike) -> SpinTriple:
    """Return ``(Sx, Sy, Sz)`` for spin ``s`` as dense complex matrices."""
    s = as_halfint(s)
    sv = float(s)
    m = magnetizations(s)
    sp = np.zeros((s.dim, s.dim), dtype=complex)
    # <m+1|S+|m> sits just above the diagonal in descending order
    for k in range(1, s.dim):
        sp[k - 1, k] = sqrt(sv * (sv + 1) - m[k] * (m[k] + 1))
    sm = sp.conj().T
    return SpinTriple((sp + sm) / 2, (sp - sm) / 2j, np.diag(m).astype(complex))


def _fact(x: Fraction) -> int:
    if x.denominator != 1 or x < 0:
        raise ValueError(f"factorial of {x}")
    return factorial(int(x))


@lru_cache(maxsize=None)
def _cg_squared(tj1: int, tm1: int, tj2: int, tm2: int, tJ: int, tM: int) -> tuple[int, Fraction]:
    """Sign and exact square of <j1 m1; j2 m2 | J M> (Racah formula)."""
    j1, m1, j2, m2, J, M = (Fraction(t, 2) for t in (tj1, tm1, tj2, tm2, tJ, tM))
    if m1 + m2 != M or not abs(j1 - j2) <= J <= j1 + j2:
        return 0, Fraction(0)
    if abs(m1) > j1 or abs(m2) > j2 or abs(M) > J:
        return 0, Fraction(0)
    pref = Fraction(
        (tJ + 1) * _fact(J + j1 - j2) * _fact(J - j1 + j2) * _fact(j1 + j2 - J),
        _fact(j1 + j2 + J + 1),
    )
    pref *= (
        _fact(J + M) * _fact(J - M) * _fact(j1 - m1) * _fact(j1 + m1) * _fact(j2 - m2) * _fact(j2 + m2)
    )
    kmin = max(Fraction(0), j2 - J - m1, j1 + m2 - J)
    kmax = min(j1 + j2 - J, j1 - m1, j2 + m2)
    total = Fraction(0)
    k = kmin
    while k <= kmax:
        den = (
            _fact(k)
            * _fact(j1 + j2 - J - k)
            * _fact(j1 - m1 - k)
            * _fact(j2 + m2 - k)
            * _fact(J - j2 + m1 + k)
            * _fact(J - j1 - m2 + k)
        )
        total += Fraction((-1) ** int(k), den)
        k += 1
    if total == 0:
        return 0, Fraction(0)
    return (1 if total > 0 else -1), pref * total * total


def clebsch_gordan(j1: SpinLike, m1, j2: SpinLike, m2, J: SpinLike, M) -> float:
    """Condon-Shortley coefficient ``<j1 m1; j2 m2 | J M>``."""
    tw = []
    for v in (j1, m1, j2, m2, J, M):
        t = Fraction(float(v) if isinstance(v, HalfInt) else v) * 2
        if t.denominator != 1:
            raise ValueError(f"{v!r} is not a multiple of 1/2")
        tw.append(int(t))
    sign, sq = _cg_squared(*tw)
    return sign * sqrt(sq)


def total_spin_squared(s1: SpinLike, s2: SpinLike) -> np.ndarray:
    """``(S1 + S2)^2`` on the product space, factor order (s1, s2)."""
    a, b = spin_operators(s1), spin_operators(s2)
    i1, i2 = np.eye(len(a.z)), np.eye(len(b.z))
    out = 0
    for x, y in zip(a, b):
        t = np.kron(x, i2) + np.kron(i1, y)
        out = out + t @ t
    return out


def total_spin_projector(s1: SpinLike, s2: SpinLike, S: SpinLike) -> np.ndarray:
    """Projector onto total spin ``S`` of two spins, built from coupled states.

    Raises
    ------
    ValueError
        If ``S`` lies outside ``|s1 - s2| .. s1 + s2`` or has the wrong parity.
    """
    s1, s2, S = as_halfint(s1), as_halfint(s2), as_halfint(S)
    if not abs(s1.twice - s2.twice) <= S.twice <= s1.twice + s2.twice or (
        (s1.twice + s2.twice - S.twice) % 2
    ):
        raise ValueError(f"total spin {S} not reachable from {s1} x {s2}")
    m1s, m2s = magnetizations(s1), magnetizations(s2)
    vecs = []
    for M in magnetizations(S):
        v = np.zeros(s1.dim * s2.dim)
        for a, m1 in enumerate(m1s):
            for b, m2 in enumerate(m2s):
                if m1 + m2 == M:
                    v[a * s2.dim + b] = clebsch_gordan(
                        s1, Fraction(m1), s2, Fraction(m2), S, Fraction(M)
                    )
        vecs.append(v)
    basis = np.array(vecs).T
    return (basis @ basis.T).astype(complex)


def two_level_spin(alpha: float, beta: float, s: SpinLike = Fraction(3, 2)) -> SpinTriple:
    """Effective spin-1/2 acting on levels ``Sz = alpha`` (up) and ``beta`` (down)."""
    m = list(magnetizations(s))
    a, b = m.index(alpha), m.index(beta)
    d = len(m)
    x, y, z = (np.zeros((d, d), dtype=complex) for _ in range(3))
    x[a, b] = x[b, a] = 0.5
    y[a, b], y[b, a] = -0.5j, 0.5j
    z[a, a], z[b, b] = 0.5, -0.5
    return SpinTriple(x, y, z)


def _direct_sum(*triples: SpinTriple) -> SpinTriple:
    return SpinTriple(*(sum(parts) for parts in zip(*triples)))


def effective_spins() -> tuple[SpinTriple, SpinTriple]:
    """Effective spins ``S'`` and ``S''`` on a spin-3/2 site.

    ``S'`` acts as a spin-1/2 on the level pairs (-3/2, -1/2) and (+1/2, +3/2);
    ``S''`` on (-3/2, +1/2) and (-1/2, +3/2).  Within each pair the first
    level is the lower one.
    """
    sprime = _direct_sum(two_level_spin(-0.5, -1.5), two_level_spin(1.5, 0.5))
    sdouble = _direct_sum(two_level_spin(0.5, -1.5), two_level_spin(1.5, -0.5))
    return sprime, sdouble


def merging_unitary() -> np.ndarray:
    """4x4 permutation sending ``|m1>|m2>`` (two spin-1/2) to ``|3/2, m1 + 2 m2>``."""
    u = np.zeros((4, 4), dtype=complex)
    half = magnetizations(Fraction(1, 2))
    big = list(magnetizations(Fraction(3, 2)))
    for a, m1 in enumerate(half):
        for b, m2 in enumerate(half):
            u[big.index(m1 + 2 * m2), 2 * a + b] = 1.0
    return u
