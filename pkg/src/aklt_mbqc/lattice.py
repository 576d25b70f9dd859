"""Site inventories and typed coupling edges for quasi-chains and merged lattices.

A quasi-chain of ``N`` units has sites ``b_0, A_1, b_1, ..., A_N, b_N, b_{N+1}``:
``N`` large spins, each carrying ``pendants_per_a`` spin-1/2 pendants, plus a
spin-1/2 at either end.  Chains are stacked vertically (chain 0 on top) and
merged by fusing pairs of pendants in the same column of neighbouring chains
into a single four-level ``B`` site.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .spin_algebra import HalfInt, as_halfint

__all__ = [
    "QuasiChainSpec",
    "SiteIndex",
    "CouplingEdge",
    "OctagonalSpec",
    "LatticeError",
    "enumerate_chain",
    "merge_chains",
    "octagonal_lattice",
    "hilbert_dimension",
    "site_dim",
]

_KIND_ORDER = {"A": 0, "b": 1, "B": 2}
_EDGE_ORDER = {"AA": 0, "Ab": 1, "a": 0, "b": 1, "u": 2, "d": 3}


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class QuasiChainSpec:
    n_blocks: int
    spin_a: HalfInt = HalfInt(3)
    pendants_per_a: int = 1
    bond_spin: HalfInt = HalfInt(6)
    pendant_spin: HalfInt = HalfInt(4)

    def __post_init__(self):
        for name in ("spin_a", "bond_spin", "pendant_spin"):
            object.__setattr__(self, name, as_halfint(getattr(self, name)))
        if self.n_blocks < 1:
            raise LatticeError("a quasi-chain needs at least one unit")
        if self.pendants_per_a < 1:
            raise LatticeError("pendants_per_a must be positive")
        # spin equals half the coordination number (two chain bonds + pendants)
        if self.spin_a.twice != 2 + self.pendants_per_a:
            raise LatticeError(
                f"spin {self.spin_a} incompatible with coordination {2 + self.pendants_per_a}"
            )
        if self.bond_spin.twice > 2 * self.spin_a.twice or self.pendant_spin.twice > self.spin_a.twice + 1:
            raise LatticeError("projector spin exceeds the coupling range")

    @classmethod
    def spin32(cls, n_blocks: int) -> "QuasiChainSpec":
        return cls(n_blocks)

    @classmethod
    def spin2(cls, n_blocks: int) -> "QuasiChainSpec":
        """Spin-2 variant: two pendants per site, projectors P^4 and P^{5/2}."""
        return cls(n_blocks, HalfInt(4), 2, HalfInt(8), HalfInt(5))

    def with_blocks(self, n_blocks: int) -> "QuasiChainSpec":
        return QuasiChainSpec(n_blocks, self.spin_a, self.pendants_per_a, self.bond_spin, self.pendant_spin)

    @property
    def unit_dim(self) -> int:
        return self.spin_a.dim * 2**self.pendants_per_a


@dataclass(frozen=True, order=True)
class SiteIndex:
    """Position of a site.

    ``column`` runs 0..N+1; pendant and boundary spins are ``kind="b"`` with
    ``slot`` distinguishing multiple pendants.  Merged sites carry the chain
    index of their upper constituent.
    """

    chain: int
    column: int
    kind_rank: int = field(repr=False)
    slot: int = 0

    @classmethod
    def make(cls, kind: str, chain: int, column: int, slot: int = 0) -> "SiteIndex":
        return cls(chain, column, _KIND_ORDER[kind], slot)

    @property
    def kind(self) -> str:
        return "AbB"[self.kind_rank]

    def __repr__(self) -> str:
        s = f"/{self.slot}" if self.slot else ""
        return f"{self.kind}[{self.chain},{self.column}{s}]"


@dataclass(frozen=True)
class CouplingEdge:
    edge_type: str
    first: SiteIndex
    second: SiteIndex

    def sort_key(self):
        return (min(self.first, self.second), _EDGE_ORDER[self.edge_type], max(self.first, self.second))


def _pendant(chain: int, column: int, slot: int = 0) -> SiteIndex:
    return SiteIndex.make("b", chain, column, slot)


def enumerate_chain(spec: QuasiChainSpec, chain: int = 0) -> tuple[list[SiteIndex], list[CouplingEdge]]:
    """Sites and edges of one quasi-chain, both in canonical order."""
    n = spec.n_blocks
    sites = [_pendant(chain, 0), _pendant(chain, n + 1)]
    edges = []
    for i in range(1, n + 1):
        a = SiteIndex.make("A", chain, i)
        sites.append(a)
        for slot in range(spec.pendants_per_a):
            sites.append(_pendant(chain, i, slot))
            edges.append(CouplingEdge("Ab", a, _pendant(chain, i, slot)))
        if i < n:
            edges.append(CouplingEdge("AA", a, SiteIndex.make("A", chain, i + 1)))
    edges.append(CouplingEdge("Ab", SiteIndex.make("A", chain, 1), _pendant(chain, 0)))
    edges.append(CouplingEdge("Ab", SiteIndex.make("A", chain, n), _pendant(chain, n + 1)))
    return sorted(sites), sorted(edges, key=CouplingEdge.sort_key)


@dataclass(frozen=True)
class OctagonalSpec:
    """Chains merged pairwise through B sites.

    ``merges`` holds (upper pendant, lower pendant) pairs; every other
    spin-1/2 remains an ordinary boundary ``b`` site.
    """

    chains: tuple[QuasiChainSpec, ...]
    merges: tuple[tuple[SiteIndex, SiteIndex], ...]
    sites: tuple[SiteIndex, ...]
    edges: tuple[CouplingEdge, ...]

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def boundary_sites(self) -> tuple[SiteIndex, ...]:
        return tuple(s for s in self.sites if s.kind == "b")

    def merged_site(self, upper: SiteIndex) -> SiteIndex:
        return SiteIndex.make("B", upper.chain, upper.column)

    def partner(self, chain: int, column: int) -> int | None:
        """Chain sharing a B site with ``chain`` at ``column`` (None if unmerged)."""
        for up, lo in self.merges:
            if up.column == column and chain in (up.chain, lo.chain):
                return lo.chain if up.chain == chain else up.chain
        return None


def merge_chains(
    chain_specs: Sequence[QuasiChainSpec],
    pairing: Iterable[tuple[tuple[int, int], tuple[int, int]]],
) -> OctagonalSpec:
    """Fuse pendant pairs ``((chain, column), (chain, column))`` into B sites.

    Both pendants of a pair must sit in the same column of vertically adjacent
    chains; the upper one becomes the first factor of the merging unitary.
    """
    chain_specs = tuple(chain_specs)
    if not chain_specs:
        raise LatticeError("no chains to merge")
    all_sites: list[SiteIndex] = []
    all_edges: list[CouplingEdge] = []
    for c, cs in enumerate(chain_specs):
        s, e = enumerate_chain(cs, c)
        all_sites += s
        all_edges += e

    used: set[SiteIndex] = set()
    merges = []
    for p, q in pairing:
        (c1, j1), (c2, j2) = sorted([tuple(p), tuple(q)])
        for c, j in ((c1, j1), (c2, j2)):
            if not 0 <= c < len(chain_specs) or not 1 <= j <= chain_specs[c].n_blocks:
                raise LatticeError(f"({c}, {j}) is not a pendant site")
            if chain_specs[c].pendants_per_a != 1:
                raise LatticeError("merging is defined for single-pendant chains")
        if c2 - c1 != 1:
            raise LatticeError(f"chains {c1} and {c2} are not adjacent")
        if j1 != j2:
            raise LatticeError(f"pendants in columns {j1} and {j2} are not vertically aligned")
        up, lo = _pendant(c1, j1), _pendant(c2, j2)
        if up in used or lo in used:
            raise LatticeError(f"pendant reused in pair {p}, {q}")
        used |= {up, lo}
        merges.append((up, lo))
    merges.sort()

    upper = {up: SiteIndex.make("B", up.chain, up.column) for up, _ in merges}
    lower = {lo: SiteIndex.make("B", up.chain, up.column) for up, lo in merges}
    sites = sorted([s for s in all_sites if s not in used] + list(upper.values()))
    edges = []
    for e in all_edges:
        if e.edge_type == "AA":
            edges.append(CouplingEdge("a", e.first, e.second))
        elif e.second in upper:
            edges.append(CouplingEdge("u", e.first, upper[e.second]))
        elif e.second in lower:
            edges.append(CouplingEdge("d", lower[e.second], e.first))
        else:
            edges.append(CouplingEdge("b", e.first, e.second))
    edges.sort(key=CouplingEdge.sort_key)
    return OctagonalSpec(chain_specs, tuple(merges), tuple(sites), tuple(edges))


def octagonal_lattice(n_chains: int, n_blocks: int, staggered: bool | None = None) -> OctagonalSpec:
    """Standard merged lattice of spin-3/2 chains.

    With ``staggered`` (default for three or more chains) columns alternate
    between merging chain pairs (0,1),(2,3),... and (1,2),(3,4),...; with
    two chains every column is merged.
    """
    if staggered is None:
        staggered = n_chains > 2
    pairs = []
    for j in range(1, n_blocks + 1):
        start = (j - 1) % 2 if staggered else 0
        for c in range(start, n_chains - 1, 2):
            pairs.append(((c, j), (c + 1, j)))
    return merge_chains([QuasiChainSpec.spin32(n_blocks)] * n_chains, pairs)


def site_dim(site: SiteIndex, chains: Sequence[QuasiChainSpec] | QuasiChainSpec) -> int:
    if site.kind == "b":
        return 2
    if site.kind == "B":
        return 4
    spec = chains if isinstance(chains, QuasiChainSpec) else chains[site.chain]
    return spec.spin_a.dim


def hilbert_dimension(spec: QuasiChainSpec | OctagonalSpec) -> int:
    if isinstance(spec, QuasiChainSpec):
        sites, _ = enumerate_chain(spec)
        return int(np.prod([site_dim(s, spec) for s in sites], dtype=object))
    return int(np.prod([site_dim(s, spec.chains) for s in spec.sites], dtype=object))

