import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aklt_mbqc.lattice import (
    LatticeError,
    QuasiChainSpec,
    SiteIndex,
    enumerate_chain,
    hilbert_dimension,
    merge_chains,
    octagonal_lattice,
)


def _count(items, attr, value):
    return sum(getattr(x, attr) == value for x in items)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_chain_inventory(n):
    sites, edges = enumerate_chain(QuasiChainSpec.spin32(n))
    assert sum(s.kind == "A" for s in sites) == n
    assert sum(s.kind == "b" for s in sites) == n + 2
    assert _count(edges, "edge_type", "AA") == n - 1
    assert _count(edges, "edge_type", "Ab") == n + 2
    assert len(set(sites)) == len(sites)


def test_chain_n3_dimension():
    assert hilbert_dimension(QuasiChainSpec.spin32(3)) == 4**3 * 2**5


def test_boundary_sites_present():
    sites, _ = enumerate_chain(QuasiChainSpec.spin32(3))
    assert SiteIndex.make("b", 0, 0) in sites and SiteIndex.make("b", 0, 4) in sites


def test_spin2_inventory():
    spec = QuasiChainSpec.spin2(2)
    sites, edges = enumerate_chain(spec)
    assert sum(s.kind == "b" for s in sites) == 2 * 2 + 2
    assert _count(edges, "edge_type", "Ab") == 2 * 2 + 2
    assert spec.unit_dim == 5 * 4


def test_spec_validation():
    with pytest.raises(LatticeError):
        QuasiChainSpec.spin32(0)
    with pytest.raises(LatticeError):
        QuasiChainSpec(2, spin_a=2, pendants_per_a=1)


def test_merged_two_by_two():
    spec = octagonal_lattice(2, 2)
    kinds = [s.kind for s in spec.sites]
    assert kinds.count("A") == 4
    assert kinds.count("B") == 2
    assert kinds.count("b") == 4  # b_0 and b_{N+1} of each chain
    types = [e.edge_type for e in spec.edges]
    assert types.count("a") == 2 and types.count("u") == 2 and types.count("d") == 2
    assert types.count("b") == 4
    assert hilbert_dimension(spec) == hilbert_dimension(spec.chains[0]) ** 2


def test_merge_rejects_reuse_and_nonadjacent():
    chains = [QuasiChainSpec.spin32(2)] * 3
    with pytest.raises(LatticeError):
        merge_chains(chains, [((0, 1), (1, 1)), ((1, 1), (2, 1))])
    with pytest.raises(LatticeError):
        merge_chains(chains, [((0, 1), (2, 1))])
    with pytest.raises(LatticeError):
        merge_chains(chains, [((0, 1), (1, 2))])
    with pytest.raises(LatticeError):
        merge_chains(chains, [((0, 0), (1, 0))])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 4), st.integers(1, 4), st.data())
def test_merge_preserves_dimension_and_boundaries(n_chains, n_blocks, data):
    pairs = []
    used = set()
    for j in range(1, n_blocks + 1):
        for c in range(n_chains - 1):
            if (c, j) in used or (c + 1, j) in used:
                continue
            if data.draw(st.booleans()):
                pairs.append(((c, j), (c + 1, j)))
                used |= {(c, j), (c + 1, j)}
    chains = [QuasiChainSpec.spin32(n_blocks)] * n_chains
    spec = merge_chains(chains, pairs)
    assert hilbert_dimension(spec) == hilbert_dimension(chains[0]) ** n_chains
    unmerged_b = {(s.chain, s.column) for s in spec.boundary_sites}
    expected = {(c, j) for c in range(n_chains) for j in range(n_blocks + 2)} - used
    assert unmerged_b == expected
    # deterministic ordering
    assert merge_chains(chains, list(reversed(pairs))) == spec


def test_staggered_merging_for_three_chains():
    spec = octagonal_lattice(3, 2)
    assert spec.partner(0, 1) == 1 and spec.partner(2, 1) is None
    assert spec.partner(1, 2) == 2 and spec.partner(0, 2) is None
