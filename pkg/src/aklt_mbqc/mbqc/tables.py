"""Outcome tables for the measurement protocols, derived by exhaustive contraction.

Single-site tables are keyed by ``"<kind>/<axis>/<ok|fail>/<leg bit>"``:
the A-site kind, the protocol axis (Z or X), whether the filter succeeded,
and the outcome on the site's vertical virtual leg.  The leg basis follows
from the first two: Z on success of a Z protocol or failure of an X
protocol, X otherwise.

For every context the generator contracts the (filtered) site tensor with
the leg state and classifies the operator each basis element induces on the
logical bond.  Rotation contexts additionally search level relabelings and
the angle sign that turn the reference rotation basis into one realizing
the target rotation.  The result is written once to ``data/protocol_tables.json``;
``verify_tables`` regenerates it and compares entry by entry.
"""

from __future__ import annotations

import json
from itertools import permutations, product
from pathlib import Path

import numpy as np

from ..tensor_net import standard_tensors
from .bases import _alpha_z, basis_catalog, filter_pair, leg_states, permuted, spin_rotation
from .frames import classify_pauli, entangling_gate, rx, rz

__all__ = [
    "TABLE_VERSION",
    "DATA_PATH",
    "A_KINDS",
    "leg_basis",
    "context_key",
    "effective_ops",
    "induced",
    "rotation_basis",
    "generate_tables",
    "load_tables",
    "diff_tables",
    "verify_tables",
    "write_tables",
    "TableError",
]

TABLE_VERSION = 1
DATA_PATH = Path(__file__).resolve().parent.parent / "data" / "protocol_tables.json"
A_KINDS = ("A_u", "A_d", "chain_A")
_PROBE_ANGLES = (0.37, 1.9, -2.6)
_ZERO = 1e-12


class TableError(RuntimeError):
    pass


def leg_basis(axis: str, ok: bool) -> str:
    return "Z" if (axis == "Z") == ok else "X"


def context_key(kind: str, axis: str, ok: bool, bit: int) -> str:
    return f"{kind}/{axis}/{'ok' if ok else 'fail'}/{bit}"


def effective_ops(kind: str, axis: str, ok: bool, bit: int) -> np.ndarray:
    """Filtered site maps with the vertical leg fixed: array ``[k, r, l]``."""
    a = standard_tensors()[kind].data
    f = filter_pair(axis)[0 if ok else 1]
    a = np.tensordot(f, a, axes=(1, 0))
    t = leg_states(leg_basis(axis, ok))[bit]
    return np.einsum("klrx,x->krl", a, t.conj())


def induced(ops: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Bond operator (r x l) left by projecting the site onto ``vector``."""
    return np.einsum("k,krl->rl", vector.conj(), ops)


def rotation_basis(axis: str, theta: float, perm, sign: int) -> np.ndarray:
    vecs = permuted(_alpha_z(sign * theta), perm)
    if axis == "X":
        vecs = (spin_rotation() @ vecs.T).T
    return vecs


def _target(axis: str, theta: float) -> np.ndarray:
    return rz(theta) if axis == "Z" else rx(theta)


def _classify(m: np.ndarray, rotation: np.ndarray | None = None) -> dict | None:
    if np.linalg.norm(m) < _ZERO:
        return {"class": "zero"}
    if rotation is not None:
        p = classify_pauli(m, rotation)
        if p:
            return {"class": "rot", "pauli": p[0]}
    p = classify_pauli(m, np.eye(2))
    if p:
        return {"class": "transport", "pauli": p[0]}
    return None


def _search_rotation(kind: str, axis: str, bit: int) -> dict:
    ops = effective_ops(kind, axis, True, bit)
    for perm in permutations(range(4)):
        for sign in (1, -1):
            runs = []
            for th in _PROBE_ANGLES:
                vecs = rotation_basis(axis, th, perm, sign)
                runs.append([_classify(induced(ops, v), _target(axis, th)) for v in vecs])
            if any(r != runs[0] for r in runs) or None in runs[0]:
                continue
            if sum(o["class"] == "rot" for o in runs[0]) == 2:
                return {"perm": list(perm), "sign": sign, "outcomes": runs[0]}
    raise TableError(f"no rotation basis found for {context_key(kind, axis, True, bit)}")


def _readout_entry(kind: str, bit: int) -> dict:
    ops = effective_ops(kind, "Z", True, bit)
    outs = []
    for v in np.eye(4):
        m = induced(ops, v)
        entry = _classify(m)
        if entry is None:
            for b in (0, 1):
                proj = np.zeros((2, 2))
                proj[b, b] = 1
                p = classify_pauli(m, proj)
                if p:
                    entry = {"class": "bit", "bit": b, "pauli": p[0]}
                    break
        if entry is None:
            raise TableError(f"unclassified readout outcome in {kind}/{bit}")
        outs.append(entry)
    return {"outcomes": outs}


def _recover_entry(kind: str, axis: str, bit: int) -> dict:
    ops = effective_ops(kind, axis, False, bit)
    vecs = basis_catalog()["alpha" if axis == "Z" else "alpha_sx"].vectors
    outs = [_classify(induced(ops, v)) for v in vecs]
    if None in outs or any(o["class"] == "rot" for o in outs):
        raise TableError(f"recovery does not transport in {context_key(kind, axis, False, bit)}")
    return {"outcomes": outs}


def _pair_ops(i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    tens = standard_tensors()
    lo = filter_pair("Z")[0]
    mu_nu = basis_catalog()["mu_nu"].vectors
    au = np.einsum("k,kl,lahx->ahx", mu_nu[i].conj(), lo, tens["A_u"].data)
    ad = np.einsum("k,kl,lahy->ahy", mu_nu[j].conj(), lo, tens["A_d"].data)
    return au, ad


def two_qubit_map(i: int, j: int, b_vector: np.ndarray) -> np.ndarray:
    """Induced map on (upper, lower) bonds for A outcomes ``i, j`` and B effect ``b_vector``."""
    au, ad = _pair_ops(i, j)
    bb = np.einsum("k,kxy->xy", b_vector.conj(), standard_tensors()["B"].data)
    return np.einsum("arx,xy,bsy->rsab", au, bb, ad).reshape(4, 4)


def _classify_two(m: np.ndarray) -> dict | None:
    if np.linalg.norm(m) < _ZERO:
        return {"class": "zero"}
    for g in ("XX", "XY", "YX", "YY"):
        p = classify_pauli(m, entangling_gate(g[0], g[1]), 2)
        if p:
            return {"class": "gate", "gate": g, "pauli": list(p)}
    p = classify_pauli(m, np.eye(4), 2)
    if p:
        return {"class": "transport", "pauli": list(p)}
    return None


def _entangle_table() -> dict:
    cat = basis_catalog()
    out = {}
    for i, j in product(range(4), repeat=2):
        entry = {"gate": None, "B_basis": None, "outcomes": None}
        for name in ("mu_nu_prime", "mu_nu_real"):
            outs = [_classify_two(two_qubit_map(i, j, v)) for v in cat[name].vectors]
            gates = {o.get("gate") for o in outs if o and o["class"] != "zero"}
            if None not in outs and len(gates) == 1 and None not in gates:
                entry = {"gate": gates.pop(), "B_basis": name, "outcomes": outs}
                break
        fallback = [_classify_two(two_qubit_map(i, j, v)) for v in cat["zhat"].vectors]
        if any(o is None or o["class"] == "gate" for o in fallback):
            raise TableError(f"zhat fallback does not transport for A outcomes {i},{j}")
        entry["fallback"] = fallback
        out[f"{i},{j}"] = entry
    gates = {e["gate"] for e in out.values()}
    missing = {"XX", "XY", "YX", "YY"} - gates
    if missing:
        raise TableError(f"no outcome pair realizes {sorted(missing)}")
    return out


def generate_tables() -> dict:
    single = {}
    for kind, axis, bit in product(A_KINDS, "ZX", (0, 1)):
        ok_entry = {"rotate": _search_rotation(kind, axis, bit)}
        if axis == "Z":
            ok_entry["readout"] = _readout_entry(kind, bit)
        single[context_key(kind, axis, True, bit)] = ok_entry
        single[context_key(kind, axis, False, bit)] = {"recover": _recover_entry(kind, axis, bit)}
    return {"version": TABLE_VERSION, "single": single, "entangle": _entangle_table()}


def _dumps(tables: dict) -> str:
    return json.dumps(tables, indent=1, sort_keys=True) + "\n"


def write_tables(path: Path | str = DATA_PATH) -> Path:
    path = Path(path)
    path.write_text(_dumps(generate_tables()))
    return path


_CACHE: dict[str, dict] = {}


def load_tables(path: Path | str | None = None) -> dict:
    key = str(path or DATA_PATH)
    if key not in _CACHE:
        data = json.loads(Path(key).read_text())
        if data.get("version") != TABLE_VERSION:
            raise TableError(f"table version {data.get('version')} != {TABLE_VERSION}")
        _CACHE[key] = data
    return _CACHE[key]


def diff_tables(expected, actual, prefix: str = "") -> list[str]:
    """Paths at which two nested table structures differ."""
    if isinstance(expected, dict) and isinstance(actual, dict):
        out = []
        for k in sorted(set(expected) | set(actual)):
            where = f"{prefix}/{k}" if prefix else str(k)
            if k not in expected or k not in actual:
                out.append(where)
            else:
                out += diff_tables(expected[k], actual[k], where)
        return out
    if isinstance(expected, list) and isinstance(actual, list) and len(expected) == len(actual):
        out = []
        for n, (a, b) in enumerate(zip(expected, actual)):
            out += diff_tables(a, b, f"{prefix}[{n}]")
        return out
    return [] if expected == actual else [prefix or "<root>"]


def verify_tables(path: Path | str = DATA_PATH) -> tuple[bool, list[str]]:
    """Regenerate the tables and compare with the file (byte-level and per entry)."""
    path = Path(path)
    fresh = _dumps(generate_tables())
    stored = path.read_text()
    if fresh == stored:
        return True, []
    try:
        diffs = diff_tables(json.loads(fresh), json.loads(stored))
    except json.JSONDecodeError as exc:
        return False, [f"unparseable table file: {exc}"]
    return False, diffs or ["formatting differs"]
