import numpy as np
import pytest
import scipy.sparse as sp

from aklt_mbqc.hamiltonian import (
    build_2d_hamiltonian,
    build_block,
    build_chain_hamiltonian,
    build_projective_hamiltonian,
    build_residual_hamiltonian,
    build_subchain_sum,
    build_unmerged_hamiltonian,
    embed,
    exchange_couplings,
    interior_block,
    logical_operators,
    merge_operator,
    support_complement_projector,
)
from aklt_mbqc.lattice import LatticeError, QuasiChainSpec, enumerate_chain, octagonal_lattice
from aklt_mbqc.spectra import kernel_dimension
from aklt_mbqc.tensor_net import build_chain_network, to_state_vector

SPIN32 = QuasiChainSpec.spin32


def _dense(op):
    return op.matrix.toarray()


def test_chain_hamiltonian_n2_frustration_free_and_unique():
    h = _dense(build_chain_hamiltonian(SPIN32(2)))
    assert h.shape == (256, 256)
    assert np.allclose(h, h.conj().T)
    w = np.linalg.eigvalsh(h)
    assert abs(w[0]) < 1e-10
    assert np.sum(w < 1e-8) == 1


def test_chain_hamiltonian_linear_in_J():
    h1 = build_chain_hamiltonian(SPIN32(2)).matrix
    h2 = build_chain_hamiltonian(SPIN32(2), J=2.0).matrix
    assert abs(h2 - 2 * h1).max() == 0


def test_chain_hamiltonian_conserves_sz():
    op = build_chain_hamiltonian(SPIN32(2))
    m = op.matrix.tocoo()
    assert np.all(op.charges[m.row] == op.charges[m.col])


def test_block_is_psd_with_expected_gap():
    blk = interior_block(SPIN32(3))
    assert blk.matrix.shape == (64, 64)
    w = np.linalg.eigvalsh(blk.matrix)
    assert w[0] >= -1e-12
    assert w[w > 1e-8][0] == pytest.approx(0.3518, abs=5e-4)


def test_blocks_sum_to_chain_hamiltonian():
    spec = SPIN32(3)
    sites, _ = enumerate_chain(spec)
    pos = {s: k for k, s in enumerate(sites)}
    h = build_chain_hamiltonian(spec)
    total = sp.csr_matrix(h.matrix.shape)
    for i in range(spec.n_blocks + 1):
        b = build_block(spec, i)
        total = total + embed(b.matrix, h.dims, [pos[s] for s in b.sites])
    assert abs(total - h.matrix).max() < 1e-12


def test_block_index_out_of_range():
    with pytest.raises(IndexError):
        build_block(SPIN32(3), 5)


def test_support_projector_properties():
    blk = interior_block(SPIN32(3))
    p = support_complement_projector(blk)
    gamma = 0.3517860
    assert np.allclose(p @ p, p, atol=1e-12)
    assert np.abs((np.eye(64) - p) @ blk.matrix).max() < 1e-10
    assert np.linalg.eigvalsh(blk.matrix - gamma * p)[0] >= -1e-7
    w = np.linalg.eigvalsh(blk.matrix)
    assert round(np.trace(p).real) + np.sum(w < 1e-8) == 64


def test_kernel_of_block_matches_ground_state_support():
    """Range of the N = 4 ground state's reduced density matrix on an interior block equals ker(Pi)."""
    spec = SPIN32(4)
    sites, _ = enumerate_chain(spec)
    psi = to_state_vector(build_chain_network(spec))
    psi = psi / np.linalg.norm(psi)
    blk = build_block(spec, 2)
    keep = [sites.index(s) for s in blk.sites]
    dims = [4 if s.kind == "A" else 2 for s in sites]
    t = psi.reshape(dims)
    rest = [k for k in range(len(sites)) if k not in keep]
    m = np.transpose(t, keep + rest).reshape(64, -1)
    rho = m @ m.conj().T
    w, v = np.linalg.eigh(rho)
    support = v[:, w > 1e-12]
    kernel_proj = np.eye(64) - support_complement_projector(blk)
    assert support.shape[1] == round(np.trace(kernel_proj).real)
    assert np.allclose(kernel_proj @ support, support, atol=1e-10)


def test_projective_hamiltonian_unique_ground_state():
    hp = build_projective_hamiltonian(SPIN32(2))
    w = np.linalg.eigvalsh(_dense(hp))
    assert abs(w[0]) < 1e-9 and np.sum(w < 1e-8) == 1


def test_subchain_sum_dimensions():
    with pytest.raises(ValueError):
        build_subchain_sum(SPIN32(2), 1)
    h2 = build_subchain_sum(SPIN32(2), 2)
    assert h2.dim == 8**3
    w = np.linalg.eigvalsh(_dense(h2))
    assert w[0] > -1e-10 and np.sum(w < 1e-8) > 0


def test_2d_hamiltonian_is_conjugated_chain_sum():
    spec = octagonal_lattice(2, 1)
    h2 = build_2d_hamiltonian(spec).matrix
    hu = build_unmerged_hamiltonian(spec).matrix
    m = merge_operator(spec)
    assert abs(m @ hu @ m.T - h2).max() < 1e-12
    w2 = np.linalg.eigvalsh(h2.toarray())
    wu = np.linalg.eigvalsh(hu.toarray())
    assert np.abs(w2 - wu).max() < 1e-9
    assert np.sum(w2 < 1e-8) == 1


@pytest.mark.parametrize("kind", ["u", "d"])
def test_merged_couplings_are_exchange_form(kind):
    conj, exchange = exchange_couplings()[kind]
    assert np.abs(conj - exchange).max() <= 1e-12


def test_residual_hamiltonian_degenerate_and_gapped():
    h = build_residual_hamiltonian(SPIN32(3), 2)
    w = np.linalg.eigvalsh(_dense(h))
    assert np.sum(w < 1e-8) == 2
    assert w[2] > 0.05
    with pytest.raises(LatticeError):
        build_residual_hamiltonian(SPIN32(3), 3)


def test_residual_is_truncated_chain_without_left_boundary():
    """H(j) of an N-chain equals the (N - j + 1)-chain Hamiltonian minus its b_0 term."""
    h = _dense(build_residual_hamiltonian(SPIN32(3), 2))
    short = SPIN32(2)
    sites, edges = enumerate_chain(short)
    full = _dense(build_chain_hamiltonian(short))
    from aklt_mbqc.spin_algebra import total_spin_projector

    b0 = sites.index([s for s in sites if s.kind == "b" and s.column == 0][0])
    a1 = sites.index([s for s in sites if s.kind == "A" and s.column == 1][0])
    dims = [4 if s.kind == "A" else 2 for s in sites]
    left = embed(total_spin_projector(1.5, 0.5, 2).real, dims, [a1, b0]).toarray()
    reduced = (full - left).reshape(dims * 2)
    # b_0 is now decoupled: take its identity block
    reduced = np.take(np.take(reduced, 0, axis=b0), 0, axis=b0 + len(dims) - 1)
    assert np.allclose(reduced.reshape(h.shape), h, atol=1e-12)


@pytest.mark.parametrize("n,j", [(3, 1), (3, 2)])
def test_logical_operators_commute_and_anticommute(n, j):
    h = build_residual_hamiltonian(SPIN32(n), j).matrix
    sx, sz = (op.matrix for op in logical_operators(SPIN32(n), j))
    assert abs(sx @ h - h @ sx).max() <= 1e-10
    assert abs(sz @ h - h @ sz).max() <= 1e-10
    w, v = np.linalg.eigh(h.toarray())
    ker = v[:, w < 1e-8]
    assert ker.shape[1] == 2
    x = ker.conj().T @ sx @ ker
    z = ker.conj().T @ sz @ ker
    assert np.abs(x @ z + z @ x).max() <= 1e-10
    for m in (x, z):
        sq = m @ m
        assert np.abs(sq - sq[0, 0] * np.eye(2)).max() <= 1e-10
        assert abs(sq[0, 0]) > 0.5
    sz_dense = sz.toarray()
    assert np.allclose(sz_dense, np.diag(np.diag(sz_dense)))


def test_kernel_dimension_sparse_matches_dense():
    h = build_residual_hamiltonian(SPIN32(3), 1)
    assert kernel_dimension(h) == 2
    assert kernel_dimension(h, method="dense") == 2
