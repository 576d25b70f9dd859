"""Independent check of a trajectory by exact contraction of the resource network.

The left boundary spins are removed so the bonds entering the first column
become open logical inputs.  Every recorded measurement is contracted into
its site (filters folded into the effect vector), which leaves a linear map
from the input bonds to the remaining lattice.  In ``full`` mode the rest of
the lattice is kept as physical state and the output bonds are decoded by
least squares against the unmeasured right part; in ``virtual`` mode the
network is cut after the last measured column and the map is read off the
open bonds directly.  Neither mode uses the protocol tables or the engine's
block states.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from ..tensor_net import STATE_CAP, NetworkError, build_ground_network, contract_bra, subnetwork, to_state_vector
from .engine import Trajectory

__all__ = ["OracleResult", "induced_map", "process_fidelity", "oracle_verify", "branch_weight"]


@dataclass(frozen=True)
class OracleResult:
    fidelity: float
    induced: np.ndarray
    target: np.ndarray
    mode: str

    def to_dict(self) -> dict:
        return {"fidelity": self.fidelity, "mode": self.mode, "tolerance": 1e-9}


def process_fidelity(target: np.ndarray, m: np.ndarray) -> float:
    """``|Tr(T^dag M)|^2 / (Tr(T^dag T) Tr(M^dag M))``; 1 iff M is proportional to T."""
    num = abs(np.vdot(target, m)) ** 2
    den = np.vdot(target, target).real * np.vdot(m, m).real
    return float(num / den) if den > 0 else 0.0


def _site_bras(traj: Trajectory) -> dict:
    """Effective bra per measured site: filters applied before the projective effect."""
    ops = defaultdict(list)
    for r in traj.records:
        ops[r.site].append(r)
    bras = {}
    for site, recs in ops.items():
        proj = [r for r in recs if not r.povm]
        if len(proj) != 1:
            raise ValueError(f"site {site} has {len(proj)} projective records")
        vec = proj[0].effect
        for r in reversed([r for r in recs if r.povm]):
            vec = r.effect.conj().T @ vec
        bras[site] = vec
    return bras


def _measured_network(traj: Trajectory, keep):
    net = build_ground_network(traj.spec)
    sites = [s for s in net.sites if s.column > 0 and keep(s)]
    net = subnetwork(net, sites)
    for site, bra in _site_bras(traj).items():
        if site.column > 0:
            net = contract_bra(net, site, bra)
    return net


def induced_map(traj: Trajectory, mode: str | None = None, cap: int = STATE_CAP) -> tuple[np.ndarray, str]:
    """Map from input bonds (first column) to the bonds after the last measured column."""
    n = traj.n_qubits
    end = traj.end_column
    if mode is None:
        rest_dim = 1
        for s in build_ground_network(traj.spec).sites:
            if s.column > end:
                rest_dim *= 4 if s.kind in "AB" else 2
        mode = "full" if rest_dim * 2**n <= cap else "virtual"
    if mode == "virtual":
        net = _measured_network(traj, lambda s: s.column <= end)
        vec = to_state_vector(net, cap).reshape((2,) * (2 * n))
        # open legs sorted per chain: (in, out)
        m = np.transpose(vec, list(range(1, 2 * n, 2)) + list(range(0, 2 * n, 2)))
        return m.reshape(2**n, 2**n), mode
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    net = _measured_network(traj, lambda s: True)
    phi = to_state_vector(net, cap).reshape(-1, 2**n)
    full = build_ground_network(traj.spec)
    rest = subnetwork(full, [s for s in full.sites if s.column > end])
    r = to_state_vector(rest, cap).reshape(-1, 2**n)
    m, *_ = np.linalg.lstsq(r, phi, rcond=None)
    if np.linalg.norm(r @ m - phi) > 1e-8 * max(np.linalg.norm(phi), 1e-300):
        raise NetworkError("measured state does not factor through the output bonds")
    return m, mode


def oracle_verify(traj: Trajectory, claimed: np.ndarray | None = None, mode: str | None = None,
                  cap: int = STATE_CAP) -> OracleResult:
    """Process fidelity of the replayed map against ``frame_end . claimed . frame_start^dag``."""
    if claimed is None:
        claimed = traj.logical_map
    m, used = induced_map(traj, mode, cap)
    target = traj.frame.matrix() @ claimed @ traj.initial_frame.matrix().conj().T
    return OracleResult(process_fidelity(target, m), m, target, used)


def branch_weight(traj: Trajectory, cap: int = STATE_CAP) -> float:
    """Squared norm of the replayed branch over the resource norm (all sites incl. b_0).

    Only defined when every measured column is complete; unmeasured sites are
    summed over.
    """
    full = build_ground_network(traj.spec)
    total = np.linalg.norm(to_state_vector(full, cap)) ** 2
    net = full
    for r in traj.records:
        if r.site.column == 0:
            net = contract_bra(net, r.site, r.effect)
    for site, bra in _site_bras(traj).items():
        if site.column > 0:
            net = contract_bra(net, site, bra)
    return float(np.linalg.norm(to_state_vector(net, cap)) ** 2 / total)
