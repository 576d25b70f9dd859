"""Sparse assembly of the quasi-chain, block, projective, merged and residual operators."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .lattice import (
    CouplingEdge,
    LatticeError,
    OctagonalSpec,
    QuasiChainSpec,
    SiteIndex,
    enumerate_chain,
    site_dim,
)
from .spin_algebra import as_halfint, magnetizations, merging_unitary, total_spin_projector

__all__ = [
    "SparseOperator",
    "BlockOperator",
    "embed",
    "site_charges",
    "build_chain_hamiltonian",
    "build_block",
    "support_complement_projector",
    "build_projective_hamiltonian",
    "build_subchain_sum",
    "build_2d_hamiltonian",
    "merge_operator",
    "build_unmerged_hamiltonian",
    "interior_block",
    "exchange_couplings",
    "build_residual_hamiltonian",
    "logical_operators",
    "KERNEL_TOL",
]

KERNEL_TOL = 1e-8


@dataclass(frozen=True)
class SparseOperator:
    """Operator on a product of sites.

    ``charges`` is an integer label per basis state of a diagonal quantity the
    operator conserves (twice the total Sz, packed per chain for merged
    lattices); ``None`` if no such quantity is declared.
    """

    matrix: sp.csr_matrix
    sites: tuple[SiteIndex, ...]
    dims: tuple[int, ...]
    charges: np.ndarray | None = None
    hermitian: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, v):
        return self.matrix @ v

    def scaled(self, c: float) -> "SparseOperator":
        return SparseOperator((c * self.matrix).tocsr(), self.sites, self.dims, self.charges, self.hermitian)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class BlockOperator:
    index: int
    matrix: np.ndarray
    sites: tuple[SiteIndex, ...]
    dims: tuple[int, ...]
    boundary: str | None = None  # "left", "right" or None for interior blocks
    spec: QuasiChainSpec | None = field(default=None, repr=False, compare=False)


def _strides(dims: Sequence[int]) -> np.ndarray:
    out = np.ones(len(dims), dtype=np.int64)
    for k in range(len(dims) - 2, -1, -1):
        out[k] = out[k + 1] * dims[k + 1]
    return out


def embed(op, dims: Sequence[int], positions: Sequence[int]) -> sp.csr_matrix:
    """Lift ``op`` acting on ``positions`` (in that factor order) to the full product space."""
    dims = tuple(int(d) for d in dims)
    strides = _strides(dims)
    local = [dims[p] for p in positions]
    op = sp.coo_matrix(op)
    if op.shape != (int(np.prod(local)),) * 2:
        raise ValueError(f"operator shape {op.shape} does not match local dims {local}")

    def offsets(idx):
        digits = np.unravel_index(idx, local) if len(local) > 1 else (idx,)
        return sum(d.astype(np.int64) * strides[p] for d, p in zip(digits, positions))

    rest = [k for k in range(len(dims)) if k not in positions]
    if rest:
        grids = np.indices([dims[k] for k in rest]).reshape(len(rest), -1)
        base = sum(g.astype(np.int64) * strides[k] for g, k in zip(grids, rest))
    else:
        base = np.zeros(1, dtype=np.int64)
    rows = (base[:, None] + offsets(op.row)[None, :]).ravel()
    cols = (base[:, None] + offsets(op.col)[None, :]).ravel()
    vals = np.broadcast_to(op.data, (len(base), op.nnz)).ravel()
    total = int(np.prod(dims))
    return sp.csr_matrix((vals, (rows, cols)), shape=(total, total))


def _kron_diag(parts: Sequence[np.ndarray]) -> np.ndarray:
    out = np.zeros(1, dtype=np.int64)
    for p in parts:
        out = (out[:, None] + np.asarray(p, dtype=np.int64)[None, :]).ravel()
    return out


def site_charges(site: SiteIndex, chains) -> dict[int, np.ndarray]:
    """Twice the Sz carried by ``site``, resolved per chain.

    A merged B site decodes its label ``m1 + 2 m2`` back to the two
    constituent spins, so each chain's total Sz stays diagonal.
    """
    if site.kind == "B":
        levels = magnetizations(1.5)
        m2 = np.where(levels > 0, 0.5, -0.5)
        m1 = levels - 2 * m2
        return {site.chain: (2 * m1).astype(int), site.chain + 1: (2 * m2).astype(int)}
    d = site_dim(site, chains)
    return {site.chain: (2 * magnetizations((d - 1) / 2)).astype(int)}


def _charges(sites: Sequence[SiteIndex], chains) -> np.ndarray:
    chain_ids = sorted({c for s in sites for c in site_charges(s, chains)})
    per_site = [site_charges(s, chains) for s in sites]
    packed = np.zeros(1, dtype=np.int64)
    width = 1
    for c in chain_ids:
        parts = [ps.get(c, np.zeros(len(next(iter(ps.values()))), dtype=int)) for ps in per_site]
        q = _kron_diag(parts)
        q = q - q.min()
        packed = packed + width * q
        width *= int(q.max()) + 1
    return packed


@lru_cache(maxsize=None)
def _projector(s1_twice: int, s2_twice: int, S_twice: int) -> np.ndarray:
    p = total_spin_projector(*(as_halfint(t / 2) for t in (s1_twice, s2_twice, S_twice)))
    return np.where(np.abs(p) < 1e-14, 0, p.real)


def _edge_matrix(edge: CouplingEdge, spec: QuasiChainSpec) -> np.ndarray:
    if edge.edge_type in ("AA", "a"):
        return _projector(spec.spin_a.twice, spec.spin_a.twice, spec.bond_spin.twice)
    if edge.edge_type in ("Ab", "b"):
        return _projector(spec.spin_a.twice, 1, spec.pendant_spin.twice)
    u = merging_unitary().real
    pab = _projector(spec.spin_a.twice, 1, spec.pendant_spin.twice)
    da = spec.spin_a.dim
    if edge.edge_type == "u":
        # (A_u, b_up, b_low) -> (A_u, B)
        full = np.kron(np.eye(da), u) @ np.kron(pab, np.eye(2)) @ np.kron(np.eye(da), u).T
        return full
    if edge.edge_type == "d":
        # (b_up, b_low, A_d) -> (B, A_d); pendant projector with b first
        pba = _projector(1, spec.spin_a.twice, spec.pendant_spin.twice)
        return np.kron(u, np.eye(da)) @ np.kron(np.eye(2), pba) @ np.kron(u, np.eye(da)).T
    raise ValueError(f"unknown edge type {edge.edge_type!r}")


def _assemble(sites, edges, chains, weights=None) -> SparseOperator:
    sites = tuple(sites)
    pos = {s: k for k, s in enumerate(sites)}
    dims = tuple(site_dim(s, chains) for s in sites)
    total = sp.csr_matrix((int(np.prod(dims)),) * 2)
    for e in edges:
        spec = chains if isinstance(chains, QuasiChainSpec) else chains[e.first.chain]
        w = 1.0 if weights is None else weights.get(e, 1.0)
        if w == 0:
            continue
        total = total + w * embed(_edge_matrix(e, spec), dims, [pos[e.first], pos[e.second]])
    total.eliminate_zeros()
    return SparseOperator(total.tocsr(), sites, dims, _charges(sites, chains))


def build_chain_hamiltonian(spec: QuasiChainSpec, J: float = 1.0) -> SparseOperator:
    """``J`` times the sum of bond projectors over every edge of the chain."""
    sites, edges = enumerate_chain(spec)
    return _assemble(sites, edges, spec).scaled(J)


def _block_members(spec: QuasiChainSpec, i: int):
    n = spec.n_blocks
    if not 0 <= i <= n:
        raise IndexError(f"block {i} outside 0..{n}")
    sites, edges = enumerate_chain(spec)
    weights = {}
    if i == 0:
        members = [s for s in sites if s.column in (0, 1)]
        boundary = "left"
    elif i == n:
        members = [s for s in sites if s.column in (n, n + 1)]
        boundary = "right"
    else:
        members = [s for s in sites if s.column in (i, i + 1)]
        boundary = None
    members = sorted(members)
    chosen = []
    for e in edges:
        if e.first not in members or e.second not in members:
            continue
        if e.edge_type == "AA":
            weights[e] = 1.0
        elif e.second.column in (0, n + 1):
            weights[e] = 1.0
        else:
            weights[e] = 0.5
        chosen.append(e)
    return members, chosen, weights, boundary


def build_block(spec: QuasiChainSpec, i: int) -> BlockOperator:
    """Block ``i`` of the regrouped Hamiltonian (in units of J).

    Blocks ``1..N-1`` are interior: the bond projector plus half of each
    pendant projector.  Blocks ``0`` and ``N`` hold the end spin at full
    weight and half of the neighbouring pendant, so that the blocks sum to
    the chain Hamiltonian.
    """
    members, edges, weights, boundary = _block_members(spec, i)
    op = _assemble(members, edges, spec, weights)
    return BlockOperator(i, op.toarray(), op.sites, op.dims, boundary, spec)


def interior_block(spec: QuasiChainSpec) -> BlockOperator:
    """A representative interior block (uses a 3-unit chain when needed)."""
    big = spec if spec.n_blocks >= 3 else spec.with_blocks(3)
    return build_block(big, 1)


def support_complement_projector(block: BlockOperator, tol: float = KERNEL_TOL) -> np.ndarray:
    """Projector onto the range of ``block`` (complement of its kernel).

    Diagonalized per Sz sector so the result conserves Sz exactly.
    """
    charges = _charges(block.sites, block.spec)
    out = np.zeros_like(block.matrix)
    for q in np.unique(charges):
        idx = np.flatnonzero(charges == q)
        w, v = np.linalg.eigh(block.matrix[np.ix_(idx, idx)])
        if w[0] < -tol:
            raise ValueError(f"block is not positive semidefinite (min eigenvalue {w[0]:.3e})")
        r = v[:, w >= tol]
        out[np.ix_(idx, idx)] = r @ r.conj().T
    return out.real if np.abs(out.imag).max(initial=0.0) < 1e-13 else out


def build_projective_hamiltonian(spec: QuasiChainSpec) -> SparseOperator:
    """Sum of support-complement projectors of blocks ``0..N``."""
    sites, _ = enumerate_chain(spec)
    pos = {s: k for k, s in enumerate(sites)}
    dims = tuple(site_dim(s, spec) for s in sites)
    total = sp.csr_matrix((int(np.prod(dims)),) * 2)
    for i in range(spec.n_blocks + 1):
        b = build_block(spec, i)
        total = total + embed(support_complement_projector(b), dims, [pos[s] for s in b.sites])
    total.eliminate_zeros()
    return SparseOperator(total.tocsr(), tuple(sites), dims, _charges(sites, spec))


def build_subchain_sum(spec: QuasiChainSpec, n: int, boundary: str | None = None) -> SparseOperator:
    """Sum of ``n`` consecutive support-complement projectors.

    The default is the translation-invariant interior segment spanning
    ``n + 1`` units.  ``boundary="left"`` / ``"right"`` replaces the first /
    last projector by that of the corresponding end block, which also pulls
    the end spin into the segment.
    """
    if n < 2:
        raise ValueError("sub-chain sums need n >= 2")
    if boundary is None:
        big, blocks = spec.with_blocks(n + 2), range(1, n + 1)
    elif boundary == "left":
        big, blocks = spec.with_blocks(n + 1), range(0, n)
    elif boundary == "right":
        big, blocks = spec.with_blocks(n), range(1, n + 1)
    else:
        raise ValueError(f"unknown boundary {boundary!r}")
    built = [build_block(big, i) for i in blocks]
    sites = tuple(sorted({s for b in built for s in b.sites}))
    pos = {s: k for k, s in enumerate(sites)}
    dims = tuple(site_dim(s, spec) for s in sites)
    cache: dict[str | None, np.ndarray] = {}
    total = sp.csr_matrix((int(np.prod(dims)),) * 2)
    for b in built:
        if b.boundary not in cache:
            cache[b.boundary] = support_complement_projector(b)
        total = total + embed(cache[b.boundary], dims, [pos[s] for s in b.sites])
    total.eliminate_zeros()
    return SparseOperator(total.tocsr(), sites, dims, _charges(sites, spec))


def build_2d_hamiltonian(spec: OctagonalSpec, J: float = 1.0) -> SparseOperator:
    """Merged-lattice Hamiltonian: P^3 on E_a, P^2 on E_b, and the conjugated pendant terms on E_u, E_d."""
    return _assemble(spec.sites, spec.edges, spec.chains).scaled(J)


def build_unmerged_hamiltonian(spec: OctagonalSpec, J: float = 1.0) -> SparseOperator:
    """Sum of the independent chain Hamiltonians underlying ``spec``."""
    sites, edges = [], []
    for c, cs in enumerate(spec.chains):
        s, e = enumerate_chain(cs, c)
        sites += s
        edges += e
    return _assemble(sorted(sites), edges, spec.chains).scaled(J)


def merge_operator(spec: OctagonalSpec) -> sp.csr_matrix:
    """Tensor product of merging unitaries, from the unmerged to the merged site order.

    The merging unitary is a permutation, so the result is a sparse
    permutation matrix.
    """
    unmerged = []
    for c, cs in enumerate(spec.chains):
        unmerged += enumerate_chain(cs, c)[0]
    unmerged.sort()
    udims = [site_dim(s, spec.chains) for s in unmerged]
    ustr = _strides(udims)
    total = int(np.prod(udims))
    idx = np.arange(total, dtype=np.int64)

    def digit(site):
        k = unmerged.index(site)
        return (idx // ustr[k]) % udims[k]

    mdims = [site_dim(s, spec.chains) for s in spec.sites]
    mstr = _strides(mdims)
    upper = {up: lo for up, lo in spec.merges}
    perm = np.argmax(merging_unitary().real, axis=0)  # input 2*m1+m2 -> output level
    out = np.zeros(total, dtype=np.int64)
    for k, s in enumerate(spec.sites):
        if s.kind == "B":
            up = SiteIndex.make("b", s.chain, s.column)
            d = perm[2 * digit(up) + digit(upper[up])]
        else:
            d = digit(s)
        out += d * mstr[k]
    return sp.csr_matrix((np.ones(total), (out, idx)), shape=(total, total))


def exchange_couplings(spec: QuasiChainSpec | None = None) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Pairs (conjugated pendant projector, exchange form) for the u and d couplings.

    The exchange forms are ``S_A . S' / 2 + 5/8`` on (A_u, B) and
    ``S'' . S_A / 2 + 5/8`` on (B, A_d).
    """
    from .spin_algebra import effective_spins, spin_operators

    spec = spec or QuasiChainSpec.spin32(1)
    a = spin_operators(spec.spin_a)
    sprime, sdouble = effective_spins()
    eye = np.eye(4 * spec.spin_a.dim)
    dummy_a = SiteIndex.make("A", 0, 1)
    dummy_b = SiteIndex.make("B", 0, 1)
    pu = _edge_matrix(CouplingEdge("u", dummy_a, dummy_b), spec)
    pd = _edge_matrix(CouplingEdge("d", dummy_b, dummy_a), spec)
    xu = 0.5 * sum(np.kron(x, y) for x, y in zip(a, sprime)) + 5 / 8 * eye
    xd = 0.5 * sum(np.kron(y, x) for x, y in zip(a, sdouble)) + 5 / 8 * eye
    return {"u": (pu, xu), "d": (pd, xd)}


def _residual_parts(spec: QuasiChainSpec, j: int):
    if not 1 <= j < spec.n_blocks:
        raise LatticeError(f"residual index j={j} must satisfy 1 <= j < N={spec.n_blocks}")
    sites, edges = enumerate_chain(spec)
    keep = [s for s in sites if s.column >= j]
    edges = [e for e in edges if e.first in keep and e.second in keep]
    return keep, edges


def build_residual_hamiltonian(spec: QuasiChainSpec, j: int, J: float = 1.0) -> SparseOperator:
    """Chain Hamiltonian left after the first ``j - 1`` units and ``b_0`` are removed."""
    sites, edges = _residual_parts(spec, j)
    return _assemble(sites, edges, spec).scaled(J)


def _pauli_on(levels: Sequence[float], alpha: float, beta: float, kind: str, d: int) -> np.ndarray:
    m = list(levels)
    a, b = m.index(alpha), m.index(beta)
    out = np.zeros((d, d), dtype=complex)
    if kind == "X":
        out[a, b] = out[b, a] = 1
    else:
        out[a, a], out[b, b] = 1, -1
    return out


def logical_operators(spec: QuasiChainSpec, j: int) -> tuple[SparseOperator, SparseOperator]:
    """String operators ``(Sigma_X, Sigma_Z)`` acting on the residual chain.

    On each large spin the factor is ``sigma`` on levels (+3/2, -3/2) plus
    ``sigma`` on (-1/2, +1/2), i.e. a pi rotation up to phase; every spin-1/2
    carries a plain Pauli.  A relative phase between the two level pairs
    would break ``[Sigma, H(j)] = 0``.
    """
    if spec.spin_a.twice != 3:
        raise ValueError("logical string operators are defined for the spin-3/2 chain")
    sites, _ = _residual_parts(spec, j)
    levels = magnetizations(1.5)
    out = []
    for kind in ("X", "Z"):
        a_op = _pauli_on(levels, 1.5, -1.5, kind, 4) + _pauli_on(levels, -0.5, 0.5, kind, 4)
        b_op = _pauli_on([0.5, -0.5], 0.5, -0.5, kind, 2)
        mat = sp.csr_matrix(np.ones((1, 1)))
        for s in sites:
            mat = sp.kron(mat, a_op if s.kind == "A" else b_op, format="csr")
        dims = tuple(site_dim(s, spec) for s in sites)
        out.append(SparseOperator(mat, tuple(sites), dims, _charges(sites, spec) if kind == "Z" else None, False))
    return out[0], out[1]
