"""Exact projected-entangled-pair representation of the quasi-chain ground states.

Every bond carries the pair state ``(|00> + |11>)/sqrt(2)``, so contracting a
bond is plain index identification.  Each large spin maps its virtual qubits
into the symmetric subspace; to reproduce the standard site tables some legs
pass through ``W = iY`` first (``W|0> = -|1>``, ``W|1> = |0>``), which turns
each bond into a singlet.  Gauges used:

=========  =====================================  =========================
site       legs (gauge)                           notes
=========  =====================================  =========================
A_u        l (I), r (W), d (W)                    upper member of a merge
A_d        l (I), r (W), u (I)                    lower member of a merge
chain A    l (I), r (W), p... (W)                 unmerged pendants
B          u (I), d (W), then merging unitary
b_0        W                                      left end
b_{N+1}    I                                      right end
pendant b  I (W when its A carries an I leg)
=========  =====================================  =========================

Tensor data is stored as ``data[phys, leg_0, leg_1, ...]``.  Read as an
operator from ``l`` to ``r`` the A entries are ``sum data[k,l,r,x] |r><l| <x|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import combinations
from math import comb, sqrt

import numpy as np

from .lattice import OctagonalSpec, QuasiChainSpec, SiteIndex, enumerate_chain, octagonal_lattice
from .spin_algebra import merging_unitary

__all__ = [
    "W",
    "SiteTensor",
    "TensorNetwork",
    "NetworkError",
    "dicke_map",
    "a_site_tensor",
    "tabulated_site_tensors",
    "build_chain_network",
    "build_ground_network",
    "to_state_vector",
    "contract_bra",
    "apply_local",
    "subnetwork",
    "STATE_CAP",
    "standard_tensors",
]

W = np.array([[0.0, 1.0], [-1.0, 0.0]])
STATE_CAP = 2**24
_I2 = np.eye(2)


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class SiteTensor:
    kind: str
    data: np.ndarray
    legs: tuple[str, ...]
    measured: bool = False

    @property
    def phys_dim(self) -> int:
        return self.data.shape[0]

    def leg_axis(self, leg: str) -> int:
        return 1 + self.legs.index(leg)


def dicke_map(n_qubits: int) -> np.ndarray:
    """Rows ``<S_k|``: normalized symmetric states, descending total Sz.

    Returns an array of shape ``(n + 1, 2, ..., 2)``; qubit value 0 is spin up.
    """
    out = np.zeros((n_qubits + 1,) + (2,) * n_qubits)
    for k in range(n_qubits + 1):
        amp = 1 / sqrt(comb(n_qubits, k))
        for flips in combinations(range(n_qubits), k):
            idx = [0] * n_qubits
            for f in flips:
                idx[f] = 1
            out[(k, *idx)] = amp
    return out


def a_site_tensor(kind: str, gauges: tuple[bool, ...], legs: tuple[str, ...]) -> SiteTensor:
    """Symmetric-subspace map with ``W`` applied on legs flagged in ``gauges``."""
    t = dicke_map(len(legs))
    for ax, flip in enumerate(gauges):
        if flip:
            t = np.moveaxis(np.tensordot(t, W, axes=([1 + ax], [0])), -1, 1 + ax)
    return SiteTensor(kind, t.astype(complex), legs)


def _b_tensor(kind: str, gauge: bool) -> SiteTensor:
    return SiteTensor(kind, (W if gauge else _I2).astype(complex), ("v",))


def _b_merged() -> SiteTensor:
    # B[k, u, d] = <k| U (|u> (x) W|d>)
    t = merging_unitary() @ np.kron(_I2, W)
    return SiteTensor("B", t.reshape(4, 2, 2), ("u", "d"))


@lru_cache(maxsize=None)
def standard_tensors() -> dict[str, SiteTensor]:
    """Site tensors of the spin-3/2 lattice keyed by role.

    Roles: ``A_u``, ``A_d``, ``chain_A`` (one pendant leg ``p0``), ``B``,
    ``pendant_b`` (partner of ``chain_A``), ``b_left`` and ``b_right``.
    The returned mapping is shared; do not modify it.
    """
    out = {}
    for role, kind in (("upper", "A_u"), ("lower", "A_d"), ("chain", "chain_A")):
        k, legs, gauges = _a_gauges(role, 1)
        out[kind] = a_site_tensor(k, gauges, legs)
    out["B"] = _b_merged()
    out["pendant_b"] = _b_tensor("boundary_b", False)
    out["b_left"] = _b_tensor("boundary_b", True)
    out["b_right"] = _b_tensor("boundary_b", False)
    return out


def tabulated_site_tensors() -> tuple[SiteTensor, SiteTensor, SiteTensor]:
    """The A_u, A_d and B tables as explicit entries (physical order +3/2 .. -3/2).

    A_u and B are transcribed entry by entry; A_d is the derived partner
    (vertical leg gauge I instead of W).
    """
    s = 1 / sqrt(3)
    au = np.zeros((4, 2, 2, 2))  # [k, l, r, d]
    au[0, 0, 1, 1] = 1                     # +3/2: |1>_r<0|_l <1|_d
    au[3, 1, 0, 0] = 1                     # -3/2: |0>_r<1|_l <0|_d
    au[1, 0, 0, 1], au[1, 1, 1, 1] = -s, s  # +1/2: -(Z <1|_d ...
    au[1, 0, 1, 0] = -s                    #        + |1>_r<0|_l <0|_d)/sqrt3
    au[2, 0, 0, 0], au[2, 1, 1, 0] = s, -s  # -1/2: (Z <0|_d ...
    au[2, 1, 0, 1] = -s                    #        - |0>_r<1|_l <1|_d)/sqrt3
    ad = np.zeros((4, 2, 2, 2))  # [k, l, r, u]
    ad[0, 0, 1, 0] = 1                     # +3/2: |1>_r<0|_l <0|_u
    ad[3, 1, 0, 1] = -1                    # -3/2: -|0>_r<1|_l <1|_u
    ad[1, 0, 1, 1] = s                     # +1/2: (|1>_r<0|_l <1|_u
    ad[1, 0, 0, 0], ad[1, 1, 1, 0] = -s, s  #        - Z <0|_u)/sqrt3
    ad[2, 1, 0, 0] = -s                    # -1/2: -(|0>_r<1|_l <0|_u
    ad[2, 0, 0, 1], ad[2, 1, 1, 1] = -s, s  #        + Z <1|_u)/sqrt3
    b = np.zeros((4, 2, 2))  # [k, u, d]
    b[0, 0, 1] = 1    # +3/2:  |0>_u<1|_d
    b[3, 1, 0] = -1   # -3/2: -|1>_u<0|_d
    b[1, 1, 1] = 1    # +1/2:  |1>_u<1|_d
    b[2, 0, 0] = -1   # -1/2: -|0>_u<0|_d
    return (
        SiteTensor("A_u", au.astype(complex), ("l", "r", "d")),
        SiteTensor("A_d", ad.astype(complex), ("l", "r", "u")),
        SiteTensor("B", b.astype(complex), ("u", "d")),
    )


@dataclass(frozen=True)
class TensorNetwork:
    """Sites, their tensors and the pair-state bonds between legs.

    Legs that appear in no bond are open virtual indices.
    """

    tensors: dict[SiteIndex, SiteTensor]
    bonds: tuple[tuple[tuple[SiteIndex, str], tuple[SiteIndex, str]], ...]
    prefactor: complex = 1.0
    spec: object = field(default=None, compare=False, repr=False)

    @property
    def sites(self) -> list[SiteIndex]:
        return sorted(self.tensors)

    @property
    def open_legs(self) -> list[tuple[SiteIndex, str]]:
        bonded = {end for bond in self.bonds for end in bond}
        return sorted(
            (s, leg) for s, t in self.tensors.items() for leg in t.legs if (s, leg) not in bonded
        )

    def physical_sites(self) -> list[SiteIndex]:
        return [s for s in self.sites if not self.tensors[s].measured]

    def with_tensor(self, site: SiteIndex, tensor: SiteTensor) -> "TensorNetwork":
        new = dict(self.tensors)
        new[site] = tensor
        return replace(self, tensors=new)


def _a_gauges(role: str, pendants: int) -> tuple[str, tuple[str, ...], tuple[bool, ...]]:
    if role == "upper":
        return "A_u", ("l", "r", "d"), (False, True, True)
    if role == "lower":
        return "A_d", ("l", "r", "u"), (False, True, False)
    legs = ("l", "r") + tuple(f"p{k}" for k in range(pendants))
    return "chain_A", legs, (False, True) + (True,) * pendants


def build_chain_network(spec: QuasiChainSpec, chain: int = 0, lower: bool = False) -> TensorNetwork:
    """Ground-state network of one quasi-chain.

    ``lower=True`` moves the pendant gauge from the A sites onto the pendant
    spins (the convention of the lower chain of a merged pair).
    """
    sites, _ = enumerate_chain(spec, chain)
    n = spec.n_blocks
    p = spec.pendants_per_a
    tensors: dict[SiteIndex, SiteTensor] = {}
    bonds = []
    for s in sites:
        if s.kind == "A":
            kind, legs, gauges = _a_gauges("chain", p)
            if lower:
                gauges = (False, True) + (False,) * p
            tensors[s] = a_site_tensor(kind, gauges, legs)
        elif s.column == 0:
            tensors[s] = _b_tensor("boundary_b", True)
        elif s.column == n + 1:
            tensors[s] = _b_tensor("boundary_b", False)
        else:
            tensors[s] = _b_tensor("boundary_b", lower)
    for j in range(1, n + 1):
        a = SiteIndex.make("A", chain, j)
        if j == 1:
            bonds.append(((SiteIndex.make("b", chain, 0), "v"), (a, "l")))
        if j < n:
            bonds.append(((a, "r"), (SiteIndex.make("A", chain, j + 1), "l")))
        else:
            bonds.append(((a, "r"), (SiteIndex.make("b", chain, n + 1), "v")))
        for k in range(p):
            bonds.append(((a, f"p{k}"), (SiteIndex.make("b", chain, j, k), "v")))
    return TensorNetwork(tensors, tuple(bonds), 2 ** (-len(bonds) / 2), spec)


def build_ground_network(spec: OctagonalSpec | QuasiChainSpec) -> TensorNetwork:
    """Ground-state network of a merged lattice (or of a single chain)."""
    if isinstance(spec, QuasiChainSpec):
        return build_chain_network(spec)
    tensors: dict[SiteIndex, SiteTensor] = {}
    bonds = []
    for c, cs in enumerate(spec.chains):
        chain_net = build_chain_network(cs, c)
        for s, t in chain_net.tensors.items():
            if s in spec.sites:
                tensors[s] = t
        for (s1, l1), (s2, l2) in chain_net.bonds:
            if s1.kind == "A" and l1.startswith("p") and s2 not in spec.sites:
                continue  # pendant merged, handled below
            bonds.append(((s1, l1), (s2, l2)))
    for up, lo in spec.merges:
        a_up = SiteIndex.make("A", up.chain, up.column)
        a_lo = SiteIndex.make("A", lo.chain, lo.column)
        bsite = spec.merged_site(up)
        for site, role in ((a_up, "upper"), (a_lo, "lower")):
            kind, legs, gauges = _a_gauges(role, 1)
            tensors[site] = a_site_tensor(kind, gauges, legs)
        tensors[bsite] = _b_merged()
        bonds.append(((a_up, "d"), (bsite, "u")))
        bonds.append(((bsite, "d"), (a_lo, "u")))
    bonds.sort()
    return TensorNetwork(tensors, tuple(bonds), 2 ** (-len(bonds) / 2), spec)


def _labelled(net: TensorNetwork):
    """(site, data, labels) per site; bonded legs share a label, physical and
    open legs get unique ones."""
    label: dict[tuple[SiteIndex, str], int] = {}
    for n, (end1, end2) in enumerate(net.bonds):
        label[end1] = label[end2] = n
    nxt = len(net.bonds)
    for leg in net.open_legs:
        label[leg] = nxt
        nxt += 1
    out = []
    for s in net.sites:
        t = net.tensors[s]
        labs = [label[(s, leg)] for leg in t.legs]
        if t.measured:
            out.append((s, t.data[0], labs))
        else:
            out.append((s, t.data, [nxt] + labs))
            nxt += 1
    return out


def _contract(net: TensorNetwork):
    """Pairwise contraction sweeping columns left to right.

    The result has the physical indices in site order followed by the open
    legs in ``net.open_legs`` order.
    """
    items = _labelled(net)
    phys = [labs[0] for s, d, labs in items if not net.tensors[s].measured]
    n_bonds = len(net.bonds)
    open_labels = list(range(n_bonds, n_bonds + len(net.open_legs)))
    acc = np.ones((), dtype=complex)
    acc_labels: list[int] = []
    sweep = sorted(items, key=lambda it: (it[0].column, it[0].chain, it[0].kind_rank, it[0].slot))
    for _, data, labs in sweep:
        shared = [lab for lab in labs if lab in acc_labels]
        acc = np.tensordot(acc, data, axes=([acc_labels.index(x) for x in shared],
                                            [labs.index(x) for x in shared]))
        acc_labels = [x for x in acc_labels if x not in shared] + [x for x in labs if x not in shared]
    order = phys + open_labels
    return np.transpose(acc, [acc_labels.index(x) for x in order]) if order else acc


def to_state_vector(net: TensorNetwork, cap: int = STATE_CAP) -> np.ndarray:
    """Contract the whole network.

    The result is flattened over unmeasured physical indices (site order)
    followed by open virtual legs (sorted by site, then leg name).
    """
    dim = 1
    for s in net.physical_sites():
        dim *= net.tensors[s].phys_dim
    dim *= 2 ** len(net.open_legs)
    if dim > cap:
        raise NetworkError(f"state dimension {dim} exceeds cap {cap}")
    vec = _contract(net)
    return net.prefactor * np.asarray(vec).reshape(-1)


def contract_bra(net: TensorNetwork, site: SiteIndex, bra) -> TensorNetwork:
    """Project ``site`` onto ``<bra|`` (no renormalization)."""
    t = net.tensors.get(site)
    if t is None:
        raise NetworkError(f"no site {site}")
    if t.measured:
        raise NetworkError(f"site {site} already contracted")
    bra = np.asarray(bra, dtype=complex)
    if bra.shape != (t.phys_dim,):
        raise NetworkError(f"bra of length {bra.shape} for a {t.phys_dim}-level site")
    data = np.tensordot(bra.conj(), t.data, axes=(0, 0))[None]
    return net.with_tensor(site, replace(t, data=data, measured=True))


def apply_local(net: TensorNetwork, site: SiteIndex, op) -> TensorNetwork:
    """Apply an operator (e.g. a filter Kraus element) to the physical index of ``site``."""
    t = net.tensors[site]
    if t.measured:
        raise NetworkError(f"site {site} already contracted")
    data = np.tensordot(np.asarray(op, dtype=complex), t.data, axes=(1, 0))
    return net.with_tensor(site, replace(t, data=data))


def subnetwork(net: TensorNetwork, sites) -> TensorNetwork:
    """Keep ``sites``; bonds to removed sites become open legs (no pair-state factor)."""
    keep = set(sites)
    tensors = {s: t for s, t in net.tensors.items() if s in keep}
    bonds = tuple(b for b in net.bonds if b[0][0] in keep and b[1][0] in keep)
    return TensorNetwork(tensors, bonds, 2 ** (-len(bonds) / 2), net.spec)


def default_network(n_chains: int, n_blocks: int) -> TensorNetwork:
    return build_ground_network(octagonal_lattice(n_chains, n_blocks))
