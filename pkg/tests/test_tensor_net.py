from dataclasses import replace
from math import sqrt

import numpy as np
import pytest

from aklt_mbqc.hamiltonian import build_2d_hamiltonian, build_chain_hamiltonian, merge_operator
from aklt_mbqc.lattice import QuasiChainSpec, SiteIndex, octagonal_lattice
from aklt_mbqc.spectra import ground_state
from aklt_mbqc.tensor_net import (
    STATE_CAP,
    NetworkError,
    SiteTensor,
    TensorNetwork,
    build_chain_network,
    build_ground_network,
    contract_bra,
    tabulated_site_tensors,
    standard_tensors,
    subnetwork,
    to_state_vector,
)

Z = np.diag([1.0, -1.0])
X = np.array([[0.0, 1.0], [1.0, 0.0]])


def _bond_op(tensor, k, leg_value):
    """Operator l -> r (matrix [r, l]) of an A tensor at physical level k and vertical leg value."""
    return tensor.data[k, :, :, leg_value].T


def _residual(h, psi):
    return np.linalg.norm(h.matrix @ psi) / np.linalg.norm(psi)


def test_transcribed_a_u_entries():
    au, _, _ = tabulated_site_tensors()
    assert au.legs == ("l", "r", "d")
    # A_u[+3/2] = |1>_r <0|_l (x) <1|_d
    expected = np.zeros((2, 2))
    expected[1, 0] = 1
    assert np.allclose(_bond_op(au, 0, 1), expected)
    assert np.allclose(_bond_op(au, 0, 0), 0)
    # A_u[-1/2] with d-bra <0| is Z / sqrt(3)
    assert np.allclose(_bond_op(au, 2, 0), Z / sqrt(3))


def test_transcribed_b_entries():
    _, _, b = tabulated_site_tensors()
    assert b.legs == ("u", "d")
    assert b.data[0, 0, 1] == 1  # B[+3/2] = |0>_u <1|_d
    assert b.data[3, 1, 0] == -1  # B[-3/2] = -|1>_u <0|_d
    assert np.count_nonzero(b.data) == 4


def test_constructed_tensors_match_transcription():
    au, ad, b = tabulated_site_tensors()
    st = standard_tensors()
    assert np.abs(st["A_u"].data - au.data).max() == 0
    assert np.abs(st["A_d"].data - ad.data).max() == 0
    assert np.abs(st["B"].data - b.data).max() == 0


def test_site_tensor_shapes():
    st = standard_tensors()
    for name in ("A_u", "A_d", "chain_A"):
        assert st[name].phys_dim == 4 and st[name].data.shape == (4, 2, 2, 2)
    assert st["B"].data.shape == (4, 2, 2)
    for name in ("b_left", "b_right", "pendant_b"):
        assert st[name].data.shape == (2, 2)
    assert st["A_d"].legs == ("l", "r", "u")


@pytest.mark.parametrize("n", [2, 3, 4])
@pytest.mark.parametrize("lower", [False, True])
def test_chain_network_is_ground_state(n, lower):
    spec = QuasiChainSpec.spin32(n)
    psi = to_state_vector(build_chain_network(spec, lower=lower))
    assert np.linalg.norm(psi) > 0
    assert _residual(build_chain_hamiltonian(spec), psi) <= 1e-9


def test_spin2_chain_network_is_ground_state():
    spec = QuasiChainSpec.spin2(2)
    psi = to_state_vector(build_chain_network(spec))
    assert _residual(build_chain_hamiltonian(spec), psi) <= 1e-9


@pytest.mark.parametrize("chains,n", [(2, 1), (2, 2)])
def test_merged_network_matches_eigensolver(chains, n):
    spec = octagonal_lattice(chains, n)
    h = build_2d_hamiltonian(spec)
    psi = to_state_vector(build_ground_network(spec))
    assert _residual(h, psi) <= 1e-9
    _, g = ground_state(h)
    overlap = abs(np.vdot(g, psi)) ** 2 / np.vdot(psi, psi).real
    assert overlap >= 1 - 1e-10


def test_merged_network_is_merged_chain_product():
    spec = octagonal_lattice(2, 2)
    merged = to_state_vector(build_ground_network(spec))
    chains = [to_state_vector(build_chain_network(cs, chain=c)) for c, cs in enumerate(spec.chains)]
    product = merge_operator(spec) @ np.kron(*chains)
    overlap = abs(np.vdot(product, merged)) ** 2 / (np.vdot(product, product).real * np.vdot(merged, merged).real)
    assert overlap == pytest.approx(1.0, abs=1e-12)


def test_orthogonal_pair_state_breaks_ground_state():
    spec = QuasiChainSpec.spin32(2)
    net = build_chain_network(spec)
    site = SiteIndex.make("b", 0, 3)
    t = net.tensors[site]
    # flipping the virtual leg turns that bond's pair state into an orthogonal one
    bad = net.with_tensor(site, replace(t, data=t.data @ X))
    good = to_state_vector(net)
    other = to_state_vector(bad)
    overlap = abs(np.vdot(good, other)) ** 2 / (np.vdot(good, good).real * np.vdot(other, other).real)
    assert overlap < 1 - 1e-6
    assert _residual(build_chain_hamiltonian(spec), other) > 1e-3


def test_linearity_in_site_tensor():
    net = build_chain_network(QuasiChainSpec.spin32(2))
    site = SiteIndex.make("A", 0, 1)
    t = net.tensors[site]
    scaled = net.with_tensor(site, replace(t, data=2.5 * t.data))
    assert np.allclose(to_state_vector(scaled), 2.5 * to_state_vector(net))


def test_single_boundary_tensor_gives_basis_vector():
    site = SiteIndex.make("b", 0, 0)
    t = SiteTensor("b", np.eye(2), ("v",))
    net = TensorNetwork({site: t}, ())
    vec = to_state_vector(net).reshape(2, 2)  # (physical, open leg)
    assert np.allclose(vec[:, 0], [1, 0])


def test_state_cap():
    net = build_chain_network(QuasiChainSpec.spin32(3))
    with pytest.raises(NetworkError):
        to_state_vector(net, cap=100)
    assert STATE_CAP == 2**24


def test_contract_bra_on_b_site():
    spec = octagonal_lattice(2, 1)
    net = build_ground_network(spec)
    bsite = SiteIndex.make("B", 0, 1)
    sub = subnetwork(net, [bsite])
    out = to_state_vector(contract_bra(sub, bsite, np.eye(4)[0])).reshape(2, 2)  # (d, u) open legs sorted
    expected = np.zeros((2, 2))
    expected[0, 1] = 1  # |0>_u <1|_d as [u, d]
    assert np.allclose(out.T, expected)


def test_contract_bra_on_a_u_site():
    spec = octagonal_lattice(2, 1)
    net = build_ground_network(spec)
    site = SiteIndex.make("A", 0, 1)
    sub = subnetwork(net, [site])
    out = to_state_vector(contract_bra(sub, site, np.eye(4)[1])).reshape(2, 2, 2)  # legs d, l, r
    assert np.allclose(out[1].T, -Z / sqrt(3))


def test_contract_bra_errors():
    net = build_chain_network(QuasiChainSpec.spin32(1))
    site = SiteIndex.make("A", 0, 1)
    once = contract_bra(net, site, np.eye(4)[0])
    with pytest.raises(NetworkError):
        contract_bra(once, site, np.eye(4)[0])
    with pytest.raises(NetworkError):
        contract_bra(net, site, np.eye(2)[0])
    with pytest.raises(NetworkError):
        contract_bra(net, SiteIndex.make("A", 0, 7), np.eye(4)[0])


def test_contract_bra_completeness():
    net = build_chain_network(QuasiChainSpec.spin32(2))
    total = np.linalg.norm(to_state_vector(net)) ** 2
    site = SiteIndex.make("A", 0, 2)
    rng = np.random.default_rng(1)
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    parts = sum(np.linalg.norm(to_state_vector(contract_bra(net, site, q[:, k]))) ** 2 for k in range(4))
    assert parts == pytest.approx(total, rel=1e-12)
