"""Pauli labels, Pauli frames and the entangling gates V_{m,n}.

A frame Pauli on one qubit is ``X^x Z^z`` (label ``I``, ``X``, ``Z`` or
``XZ``); global phases are not tracked.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from itertools import product

import numpy as np

__all__ = [
    "PAULI",
    "pauli_bits",
    "pauli_label",
    "pauli_matrix",
    "PauliFrame",
    "entangling_gate",
    "propagate_through_v",
    "rz",
    "rx",
    "match_up_to_scalar",
    "classify_pauli",
]

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.diag([1, -1]).astype(complex)
_Y = np.array([[0, -1j], [1j, 0]])
PAULI = {"I": _I, "X": _X, "Z": _Z, "XZ": _X @ _Z, "Y": _Y}
_LABELS = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "XZ"}


def pauli_bits(label: str) -> tuple[int, int]:
    if label == "Y":
        return (1, 1)
    for bits, lab in _LABELS.items():
        if lab == label:
            return bits
    raise ValueError(f"unknown Pauli label {label!r}")


def pauli_label(bits) -> str:
    return _LABELS[tuple(int(b) & 1 for b in bits)]


def pauli_matrix(label: str) -> np.ndarray:
    return PAULI[label]


def rz(theta: float) -> np.ndarray:
    """``|0><0| + e^{i theta} |1><1|``."""
    return np.diag([1, np.exp(1j * theta)])


def rx(theta: float) -> np.ndarray:
    """``|+><+| + e^{i theta} |-><-|``."""
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    return h @ rz(theta) @ h


@dataclass(frozen=True)
class PauliFrame:
    """Per-qubit ``(x, z)`` exponents; the frame operator is ``prod X^x Z^z``."""

    bits: tuple[tuple[int, int], ...]
    phase_tracked: bool = False

    @classmethod
    def identity(cls, n: int) -> "PauliFrame":
        return cls(((0, 0),) * n)

    def __len__(self) -> int:
        return len(self.bits)

    def label(self, q: int) -> str:
        return pauli_label(self.bits[q])

    def push(self, q: int, label: str) -> "PauliFrame":
        """Left-multiply qubit ``q`` by a Pauli (modulo phase)."""
        x, z = pauli_bits(label)
        bits = list(self.bits)
        bits[q] = (bits[q][0] ^ x, bits[q][1] ^ z)
        return PauliFrame(tuple(bits), self.phase_tracked)

    def compose(self, other: "PauliFrame") -> "PauliFrame":
        """Frame of ``self`` applied after ``other`` (modulo phase)."""
        if len(other) != len(self):
            raise ValueError("frames act on different registers")
        return PauliFrame(
            tuple((a[0] ^ b[0], a[1] ^ b[1]) for a, b in zip(self.bits, other.bits)),
            self.phase_tracked,
        )

    def matrix(self) -> np.ndarray:
        """Frame operator on the register, qubit 0 most significant."""
        return reduce(np.kron, [PAULI[pauli_label(b)] for b in self.bits], np.eye(1))

    def to_list(self) -> list[str]:
        return [pauli_label(b) for b in self.bits]


def entangling_gate(m: str, n: str) -> np.ndarray:
    """``(I x I + i sigma_m x sigma_n) / sqrt(2)``."""
    return (np.eye(4) + 1j * np.kron(PAULI[m], PAULI[n])) / np.sqrt(2)


def propagate_through_v(p1: str, p2: str, m: str, n: str) -> tuple[str, str]:
    """Paulis ``(p1', p2')`` with ``V (p1 x p2) = (p1' x p2') V`` up to phase.

    A Pauli commuting with ``sigma_m x sigma_n`` passes unchanged; otherwise
    it picks up a factor ``sigma_m x sigma_n``.
    """
    s1, s2 = pauli_bits(m), pauli_bits(n)
    b1, b2 = pauli_bits(p1), pauli_bits(p2)
    # symplectic product counts anticommuting factors
    anti = (b1[0] * s1[1] + b1[1] * s1[0] + b2[0] * s2[1] + b2[1] * s2[0]) % 2
    if not anti:
        return pauli_label(b1), pauli_label(b2)
    return (pauli_label((b1[0] ^ s1[0], b1[1] ^ s1[1])),
            pauli_label((b2[0] ^ s2[0], b2[1] ^ s2[1])))


def match_up_to_scalar(m: np.ndarray, target: np.ndarray, tol: float = 1e-9) -> complex | None:
    """Scalar ``c`` with ``m = c * target`` (relative tolerance), else None."""
    tn = np.vdot(target, target).real
    if tn == 0:
        return None
    c = np.vdot(target, m) / tn
    scale = max(np.linalg.norm(m), 1e-300)
    if np.linalg.norm(m - c * target) <= tol * scale and abs(c) > tol:
        return c
    return None


def classify_pauli(m: np.ndarray, target: np.ndarray, n_qubits: int = 1, tol: float = 1e-9):
    """Pauli string ``P`` (tuple of labels) with ``m ~ P @ target``, else None."""
    for labels in product(("I", "X", "Z", "XZ"), repeat=n_qubits):
        p = reduce(np.kron, [PAULI[l] for l in labels], np.eye(1))
        if match_up_to_scalar(m, p @ target, tol) is not None:
            return labels
    return None
