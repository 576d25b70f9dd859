"""Measurement bases and the pre-normalization filter.

Spin-3/2 levels are indexed ``0..3`` for ``m = +3/2, +1/2, -1/2, -3/2``.
Bases are stored as rows of effect vectors ``|b_i>``; measuring outcome
``i`` contracts the site with ``<b_i|``.  The ``S_x`` variants are obtained
with ``R = exp(-i pi S_y / 2)``, which sends ``|m>_z`` to ``|m>_x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import sqrt

import numpy as np
from scipy.linalg import expm

from ..spin_algebra import spin_operators

__all__ = [
    "MeasurementBasis",
    "basis_catalog",
    "filter_pair",
    "spin_rotation",
    "leg_states",
    "product_leg_basis",
    "permuted",
    "P32", "P12", "M12", "M32",
]

P32, P12, M12, M32 = 0, 1, 2, 3
_R2 = 1 / sqrt(2)


def _e(k: int, d: int = 4) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[k] = 1
    return v


@dataclass(frozen=True)
class MeasurementBasis:
    """Projective basis (``vectors``) or two-outcome filter (``operators``)."""

    name: str
    vectors: np.ndarray | None = None
    operators: tuple[np.ndarray, ...] | None = None

    @property
    def is_povm(self) -> bool:
        return self.operators is not None

    @property
    def n_outcomes(self) -> int:
        return len(self.operators) if self.is_povm else len(self.vectors)

    def effects(self) -> list[np.ndarray]:
        """Kraus operators; for a projective basis these are rank-one ``|b><b|``."""
        if self.is_povm:
            return list(self.operators)
        return [np.outer(v, v.conj()) for v in self.vectors]

    def completeness_error(self) -> float:
        total = sum(k.conj().T @ k for k in self.effects())
        err = float(np.abs(total - np.eye(total.shape[0])).max())
        if not self.is_povm:
            gram = self.vectors.conj() @ self.vectors.T
            err = max(err, float(np.abs(gram - np.eye(len(gram))).max()))
        return err


@lru_cache(maxsize=None)
def spin_rotation() -> np.ndarray:
    """``exp(-i pi S_y / 2)`` for spin 3/2; column ``m`` is the ``S_x = m`` state."""
    return expm(-1j * np.pi / 2 * spin_operators(1.5).y)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def filter_pair(axis: str = "Z") -> tuple[np.ndarray, np.ndarray]:
    """Kraus pair ``(L, Lbar)``; ``axis="X"`` takes them diagonal in the S_x basis."""
    lo = np.diag([1 / sqrt(3), 1, 1, 1 / sqrt(3)]).astype(complex)
    hi = np.diag([sqrt(2 / 3), 0, 0, sqrt(2 / 3)]).astype(complex)
    if axis == "Z":
        return _frozen(lo), _frozen(hi)
    if axis == "X":
        r = spin_rotation()
        return _frozen(r @ lo @ r.conj().T), _frozen(r @ hi @ r.conj().T)
    raise ValueError(f"unknown axis {axis!r}")


def _alpha_z(theta: float) -> np.ndarray:
    ph = np.exp(-1j * theta)
    return np.array([
        _e(P32),
        _R2 * (ph * _e(M32) - _e(P12)),
        -_R2 * (ph * _e(M32) + _e(P12)),
        _e(M12),
    ])


def _mu(s: int) -> np.ndarray:
    return _R2 * (_e(M32) + (-1) ** s * _e(P12))


def _nu(s: int) -> np.ndarray:
    return _R2 * (_e(M12) + (-1) ** s * _e(P32))


def _rotate(vectors: np.ndarray) -> np.ndarray:
    return (spin_rotation() @ vectors.T).T


def basis_catalog(theta: float | None = None) -> dict[str, MeasurementBasis]:
    """Every basis used by the protocols, keyed by name.

    The theta-dependent bases ``alpha_z`` and ``alpha_x`` are included only
    when ``theta`` is given.
    """
    cat = dict(_fixed_catalog())
    if theta is not None:
        cat["alpha_z"] = MeasurementBasis("alpha_z", _alpha_z(theta))
        cat["alpha_x"] = MeasurementBasis("alpha_x", _rotate(_alpha_z(theta)))
    return cat


@lru_cache(maxsize=None)
def _fixed_catalog() -> dict[str, MeasurementBasis]:
    zhat = np.eye(4, dtype=complex)
    mu_nu = np.array([_mu(0), _mu(1), _nu(0), _nu(1)])
    mu_nu_p = np.array([
        _R2 * (_e(M12) + 1j * _e(P12)),
        _R2 * (_e(M12) - 1j * _e(P12)),
        _R2 * (_e(M32) + 1j * _e(P32)),
        _R2 * (_e(M32) - 1j * _e(P32)),
    ])
    # real-phase partner of mu_nu_prime; needed for the mixed (mu, nu) outcome pairs
    mu_nu_r = np.array([
        _R2 * (_e(M12) + _e(P12)),
        _R2 * (_e(M12) - _e(P12)),
        _R2 * (_e(M32) + _e(P32)),
        _R2 * (_e(M32) - _e(P32)),
    ])
    beta = _R2 * np.array([_mu(0) + _nu(0), _mu(0) - _nu(0), _mu(1) + _nu(1), _mu(1) - _nu(1)])
    alpha = np.array([_R2 * (_e(P32) + _e(M32)), _R2 * (_e(P32) - _e(M32)), _e(P12), _e(M12)])
    lz, lbz = filter_pair("Z")
    lx, lbx = filter_pair("X")
    vecs = {
        "zhat": zhat,
        "xhat": _rotate(zhat),
        "beta": beta,
        "alpha": alpha,
        "alpha_sx": _rotate(alpha),
        "mu_nu": mu_nu,
        "mu_nu_prime": mu_nu_p,
        "mu_nu_real": mu_nu_r,
    }
    cat = {name: MeasurementBasis(name, _frozen(v)) for name, v in vecs.items()}
    cat["filter_z"] = MeasurementBasis("filter_z", operators=(lz, lbz))
    cat["filter_x"] = MeasurementBasis("filter_x", operators=(lx, lbx))
    return cat


def permuted(vectors: np.ndarray, perm) -> np.ndarray:
    """Relabel spin levels: level ``k`` of each vector moves to ``perm[k]``."""
    out = np.zeros_like(vectors)
    out[:, list(perm)] = vectors
    return out


def leg_states(basis: str) -> np.ndarray:
    """Rows are the two states of a virtual qubit in the Z or X basis."""
    if basis == "Z":
        return np.eye(2, dtype=complex)
    if basis == "X":
        return _R2 * np.array([[1, 1], [1, -1]], dtype=complex)
    raise ValueError(f"unknown leg basis {basis!r}")


def product_leg_basis(site_matrix: np.ndarray, leg_bases: tuple[str, ...]) -> np.ndarray:
    """Physical basis that projects the site's virtual legs onto a product basis.

    ``site_matrix`` maps leg configurations to the physical space (a unitary
    for B sites and pendant spins).  Row ``i`` (legs in C order) is
    ``site_matrix @ t_i``, so contracting with it leaves ``conj(t_i)`` on the
    legs.
    """
    rows = [np.ones(1, dtype=complex)]
    for b in leg_bases:
        rows = [np.kron(r, s) for r in rows for s in leg_states(b)]
    return np.array([site_matrix @ r for r in rows])
