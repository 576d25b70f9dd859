"""Sampling engine for the measurement protocols on a merged lattice.

Logical qubits live on the virtual bond entering the next unmeasured A site
of each chain.  The engine keeps the exact virtual state of those bonds
(``2**n_chains`` amplitudes, Pauli frame included) and processes the lattice
column by column.  Each group of a column (a merged pair ``A_u, B, A_d`` or
a single chain ``A, b``) is contracted with the register into a small block
state, measured site by site, and contracted back.  The unmeasured part of
the lattice to the right acts as the identity on the open bonds, so
Born probabilities are norm ratios of the block state.

Per column every chain either works on the head of its instruction queue
or idles (identity transport).  Failed attempts (filter outcome Lbar,
rotation outcome 4, readout outcome -1/2, wrong entangling outcome)
transport the qubit up to a Pauli and the instruction is retried on the
next column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..lattice import OctagonalSpec, SiteIndex, octagonal_lattice
from ..tensor_net import standard_tensors
from .bases import basis_catalog, filter_pair, product_leg_basis
from .frames import PauliFrame, entangling_gate, pauli_bits, propagate_through_v, rx, rz
from .tables import context_key, leg_basis, load_tables, rotation_basis

__all__ = [
    "DEFAULT_RETRIES",
    "Instruction",
    "LogicalProgram",
    "ProgramError",
    "ProtocolError",
    "RetryBudgetExceeded",
    "LatticeExhausted",
    "MeasurementRecord",
    "StepStatus",
    "Trajectory",
    "ProtocolState",
    "initialize",
    "prenormalize",
    "decouple",
    "readout",
    "rotate_z",
    "rotate_x",
    "entangle",
    "run_program",
    "enumerate_branches",
]

DEFAULT_RETRIES = 20
PROB_TOL = 1e-10
_ZERO_PROB = 1e-12

_FIELDS = {
    "init": ("q", "bit"),
    "rz": ("q", "theta"),
    "rx": ("q", "theta"),
    "entangle": ("q1", "q2", "m", "n"),
    "readout": ("q",),
}


class ProgramError(ValueError):
    """Malformed or infeasible program; carries the offending location."""

    def __init__(self, msg: str, index: int | None = None, field: str | None = None,
                 line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if index is not None:
            where.append(f"instruction {index}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{', '.join(where)}: {msg}" if where else msg)
        self.index, self.field, self.line = index, field, line


class ProtocolError(RuntimeError):
    def __init__(self, msg: str, trajectory: "Trajectory | None" = None):
        super().__init__(msg)
        self.trajectory = trajectory


class RetryBudgetExceeded(ProtocolError):
    pass


class LatticeExhausted(ProtocolError):
    pass


# --------------------------------------------------------------------------- programs


@dataclass(frozen=True)
class Instruction:
    op: str
    qubits: tuple[int, ...]
    theta: float = 0.0
    bit: int = 0
    m: str = "X"
    n: str = "X"

    def to_dict(self) -> dict:
        if self.op == "entangle":
            return {"op": "entangle", "q1": self.qubits[0], "q2": self.qubits[1], "m": self.m, "n": self.n}
        d = {"op": self.op, "q": self.qubits[0]}
        if self.op == "init":
            d["bit"] = self.bit
        elif self.op in ("rz", "rx"):
            d["theta"] = self.theta
        return d

    @classmethod
    def from_dict(cls, d, index: int | None = None, line: int | None = None) -> "Instruction":
        def fail(msg, fld=None):
            raise ProgramError(msg, index, fld, line)

        if not isinstance(d, dict):
            fail("instruction must be an object")
        op = d.get("op")
        if op not in _FIELDS:
            fail(f"unknown op {op!r}; expected one of {sorted(_FIELDS)}", "op")
        extra = set(d) - set(_FIELDS[op]) - {"op"}
        if extra:
            fail(f"unexpected field(s) {sorted(extra)} for op {op!r}", sorted(extra)[0])
        for f in _FIELDS[op]:
            if f not in d:
                fail(f"missing for op {op!r}", f)
        for f in ("q", "q1", "q2"):
            if f in d and (not isinstance(d[f], int) or isinstance(d[f], bool) or d[f] < 0):
                fail(f"expected a non-negative integer, got {d[f]!r}", f)
        if op == "init":
            if d["bit"] not in (0, 1) or isinstance(d["bit"], bool):
                fail(f"expected 0 or 1, got {d['bit']!r}", "bit")
            return cls("init", (d["q"],), bit=d["bit"])
        if op in ("rz", "rx"):
            th = d["theta"]
            if not isinstance(th, (int, float)) or isinstance(th, bool) or not np.isfinite(th):
                fail(f"expected a finite number, got {th!r}", "theta")
            return cls(op, (d["q"],), theta=float(th))
        if op == "entangle":
            for f in ("m", "n"):
                if d[f] not in ("X", "Y"):
                    fail(f"expected 'X' or 'Y', got {d[f]!r}", f)
            if d["q1"] == d["q2"]:
                fail("entangle needs two distinct qubits", "q2")
            return cls("entangle", (d["q1"], d["q2"]), m=d["m"], n=d["n"])
        return cls("readout", (d["q"],))


def _element_lines(text: str) -> list[int]:
    """Line numbers of the elements of the top-level ``"program"`` array."""
    dec = json.JSONDecoder()
    key = text.find('"program"')
    if key < 0:
        return []
    pos = text.find("[", key)
    lines = []
    while pos >= 0:
        pos += 1
        while pos < len(text) and text[pos] in " \t\r\n":
            pos += 1
        if pos >= len(text) or text[pos] == "]":
            break
        lines.append(text.count("\n", 0, pos) + 1)
        try:
            _, pos = dec.raw_decode(text, pos)
        except json.JSONDecodeError:
            break
        while pos < len(text) and text[pos] in " \t\r\n":
            pos += 1
        if pos >= len(text) or text[pos] != ",":
            break
    return lines


@dataclass(frozen=True)
class LogicalProgram:
    instructions: tuple[Instruction, ...]

    def __iter__(self):
        return iter(self.instructions)

    def __len__(self) -> int:
        return len(self.instructions)

    @classmethod
    def from_dict(cls, data, lines: Sequence[int] = ()) -> "LogicalProgram":
        if not isinstance(data, dict) or "program" not in data:
            raise ProgramError("top level must be an object with a 'program' list", field="program")
        items = data["program"]
        if not isinstance(items, list):
            raise ProgramError("'program' must be a list", field="program")
        return cls(tuple(
            Instruction.from_dict(d, i, lines[i] if i < len(lines) else None)
            for i, d in enumerate(items)
        ))

    @classmethod
    def from_json(cls, text: str) -> "LogicalProgram":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ProgramError(f"invalid JSON ({exc.msg}, column {exc.colno})", line=exc.lineno) from exc
        return cls.from_dict(data, _element_lines(text))

    @classmethod
    def from_file(cls, path: str | Path) -> "LogicalProgram":
        return cls.from_json(Path(path).read_text())

    @classmethod
    def from_ops(cls, *ops: Instruction | dict) -> "LogicalProgram":
        return cls(tuple(o if isinstance(o, Instruction) else Instruction.from_dict(o, i)
                         for i, o in enumerate(ops)))

    def to_dict(self) -> dict:
        return {"program": [i.to_dict() for i in self.instructions]}

    def validate(self, spec: OctagonalSpec) -> None:
        """Qubits exist, entangled chains are adjacent and merged somewhere, and
        each qubit's instructions are ordered init < gates < readout."""
        used: set[int] = set()
        done: set[int] = set()
        merged_pairs = {(up.chain, lo.chain) for up, lo in spec.merges}
        for i, ins in enumerate(self.instructions):
            for f, q in zip(("q1", "q2") if ins.op == "entangle" else ("q",), ins.qubits):
                if q >= spec.n_chains:
                    raise ProgramError(f"qubit {q} does not exist ({spec.n_chains} chains)", i, f)
                if q in done:
                    raise ProgramError(f"qubit {q} was already read out", i, f)
            if ins.op == "init":
                q = ins.qubits[0]
                if q in used:
                    raise ProgramError(f"init of qubit {q} must precede its other instructions", i, "q")
            if ins.op == "entangle":
                a, b = sorted(ins.qubits)
                if b - a != 1:
                    raise ProgramError(f"chains {a} and {b} are not adjacent", i, "q2")
                if (a, b) not in merged_pairs:
                    raise ProgramError(f"chains {a} and {b} share no merged site", i, "q2")
            used.update(ins.qubits)
            if ins.op == "readout":
                done.add(ins.qubits[0])


# --------------------------------------------------------------------------- records


@dataclass(frozen=True)
class MeasurementRecord:
    site: SiteIndex
    basis: str
    outcome: int
    probability: float
    effect: np.ndarray = field(repr=False, compare=False)
    povm: bool = False
    instruction: int | None = None

    def to_dict(self) -> dict:
        return {
            "site": repr(self.site),
            "basis": self.basis,
            "outcome": self.outcome,
            "probability": self.probability,
            "instruction": self.instruction,
        }


@dataclass(frozen=True)
class StepStatus:
    instruction: int
    op: str
    column: int
    status: str  # succeeded | retried | pending
    detail: str = ""


@dataclass
class Trajectory:
    spec: OctagonalSpec
    records: list[MeasurementRecord]
    statuses: list[StepStatus]
    initial_frame: PauliFrame
    frame: PauliFrame
    logical_map: np.ndarray
    readouts: dict[int, int]
    end_column: int
    init_bits: dict[int, int]
    seed: int | None = None

    @property
    def n_qubits(self) -> int:
        return self.spec.n_chains

    def probability(self) -> float:
        return float(np.prod([r.probability for r in self.records]))

    def outcome_signature(self) -> tuple:
        return tuple((r.site, r.basis, r.outcome) for r in self.records)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "end_column": self.end_column,
            "init_bits": {str(k): v for k, v in sorted(self.init_bits.items())},
            "initial_frame": self.initial_frame.to_list(),
            "frame": self.frame.to_list(),
            "readouts": {str(k): v for k, v in sorted(self.readouts.items())},
            "probability": self.probability(),
            "statuses": [s.__dict__ for s in self.statuses],
            "records": [r.to_dict() for r in self.records],
        }


# --------------------------------------------------------------------------- block states


class _Block:
    """Tensor ``[phys..., register...]`` for the unmeasured sites of one group."""

    def __init__(self, tensor: np.ndarray, sites: list[SiteIndex], n_reg: int):
        self.tensor = tensor
        self.sites = list(sites)
        self.n_reg = n_reg

    def _axis(self, site: SiteIndex) -> int:
        try:
            return self.sites.index(site)
        except ValueError:
            raise ProtocolError(f"site {site} is not open in this block") from None

    def branches(self, site: SiteIndex, effects: Sequence[np.ndarray], povm: bool):
        ax = self._axis(site)
        norm2 = np.vdot(self.tensor, self.tensor).real
        outs, probs = [], []
        for e in effects:
            if povm:
                t = np.moveaxis(np.tensordot(e, self.tensor, axes=(1, ax)), 0, ax)
            else:
                t = np.tensordot(e.conj(), self.tensor, axes=(0, ax))
            outs.append(t)
            probs.append(np.vdot(t, t).real / norm2)
        probs = np.array(probs)
        if abs(probs.sum() - 1) > PROB_TOL:
            raise ProtocolError(f"outcome probabilities at {site} sum to {probs.sum()!r}")
        return probs, outs

    def commit(self, site: SiteIndex, tensor: np.ndarray, povm: bool):
        if not povm:
            self.sites.remove(site)
        self.tensor = tensor / np.linalg.norm(tensor)

    def register(self) -> np.ndarray:
        if self.sites:
            raise ProtocolError(f"sites {self.sites} left unmeasured")
        return self.tensor


_LEG_BASES: dict = {}


def _leg_basis_cached(size: int, legs: tuple[str, ...], mat: np.ndarray) -> np.ndarray:
    key = (size, legs)
    if key not in _LEG_BASES:
        _LEG_BASES[key] = product_leg_basis(mat, legs)
    return _LEG_BASES[key]


def _embed(op: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Lift a gate on ``qubits`` to the ``n``-qubit register (qubit 0 most significant)."""
    k = len(qubits)
    full = np.eye(2**n, dtype=complex).reshape((2,) * (2 * n))
    g = op.reshape((2,) * (2 * k))
    out_axes = list(qubits)
    res = np.tensordot(g, full, axes=(list(range(k, 2 * k)), out_axes))
    res = np.moveaxis(res, list(range(k)), out_axes)
    return res.reshape(2**n, 2**n)


@dataclass
class _Task:
    kind: str  # rz | rx | readout | idle | entangle
    instruction: int | None = None
    theta: float = 0.0
    gate: str | None = None  # entangle target on (upper, lower)

    @property
    def axis(self) -> str:
        return "X" if self.kind == "rx" else "Z"


# --------------------------------------------------------------------------- engine


class ProtocolState:
    """Owned, mutable protocol run on one lattice.

    Parameters
    ----------
    spec : OctagonalSpec
        Merged lattice of spin-3/2 chains with one pendant per site.
    seed : int, optional
        Seed for Born-rule sampling.
    max_attempts : int
        Attempts allowed per instruction before ``RetryBudgetExceeded``.
    chooser : callable, optional
        ``chooser(probabilities, label) -> index`` replaces sampling (used to
        enumerate branches).
    """

    def __init__(self, spec: OctagonalSpec, seed: int | None = 0, max_attempts: int = DEFAULT_RETRIES,
                 chooser: Callable[[np.ndarray, str], int] | None = None, tables: dict | None = None):
        for cs in spec.chains:
            if cs.spin_a.twice != 3 or cs.pendants_per_a != 1:
                raise ValueError("the protocols are defined for spin-3/2 chains with one pendant")
        if max_attempts < 1:
            raise ValueError("max_attempts must be positive")
        if spec.n_chains > 20:
            raise ValueError("at most 20 chains are supported")
        self.spec = spec
        self.n = spec.n_chains
        self.n_columns = spec.chains[0].n_blocks
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.chooser = chooser
        self.max_attempts = max_attempts
        self.tables = tables or load_tables()
        self.tensors = standard_tensors()
        self.column = 0
        self.frame = PauliFrame.identity(self.n)
        self.initial_frame: PauliFrame | None = None
        self.logical_map = np.eye(2**self.n, dtype=complex)
        self.records: list[MeasurementRecord] = []
        self.statuses: list[StepStatus] = []
        self.readouts: dict[int, int] = {}
        self.init_bits: dict[int, int] = {}
        self.spent = [False] * self.n
        self._current: int | None = None
        b = self.tensors["b_left"].data
        tensor = reduce(np.multiply.outer, [b] * self.n) if self.n > 1 else b
        # axes (k0, v0, k1, v1, ...) -> (k..., v...)
        order = list(range(0, 2 * self.n, 2)) + list(range(1, 2 * self.n, 2))
        self._block: _Block | None = _Block(
            np.transpose(tensor, order), [SiteIndex.make("b", c, 0) for c in range(self.n)], self.n
        )
        self.psi: np.ndarray | None = None
        self._group: tuple[int, ...] | None = None
        self._pending_groups: list[tuple[int, ...]] = []
        self._ok: dict[int, bool] = {}
        self._legbit: dict[int, int] = {}
        self._axis: dict[int, str] = {}
        self._paths: dict = {}

    # ---------------------------------------------------------------- sampling

    def _choose(self, probs: np.ndarray, label: str) -> int:
        if self.chooser is not None:
            idx = int(self.chooser(probs, label))
        else:
            cdf = np.cumsum(probs) / probs.sum()
            idx = int(min(np.searchsorted(cdf, self.rng.random(), side="right"), len(probs) - 1))
            while probs[idx] <= _ZERO_PROB:
                idx = (idx + 1) % len(probs)
        if probs[idx] <= _ZERO_PROB:
            raise ProtocolError(f"outcome {idx} at {label} has probability {probs[idx]:.3g}")
        return idx

    def _measure(self, site: SiteIndex, basis: str, effects, povm: bool = False) -> int:
        probs, outs = self._block.branches(site, effects, povm)
        idx = self._choose(probs, f"{site}:{basis}")
        self._block.commit(site, outs[idx], povm)
        self.records.append(MeasurementRecord(
            site, basis, idx, float(probs[idx]), np.asarray(effects[idx]), povm, self._current
        ))
        return idx

    # ---------------------------------------------------------------- initialization

    def initialize(self, q: int, bit: int) -> int:
        """Measure ``b_0`` of chain ``q`` in the z basis; returns the outcome.

        The unwanted outcome is absorbed as a frame X.
        """
        site = SiteIndex.make("b", q, 0)
        if self.column != 0 or self._block is None or site not in self._block.sites:
            raise ProtocolError(f"b_0 of chain {q} is already measured")
        k = self._measure(site, "zhat_half", list(np.eye(2, dtype=complex)))
        row = self.tensors["b_left"].data[k]
        if abs(abs(row[bit]) - np.linalg.norm(row)) > 1e-12:
            self.frame = self.frame.push(q, "X")
        self.init_bits[q] = bit
        if not self._block.sites:
            self._finish_init()
        return k

    def _finish_init(self):
        self.psi = self._block.register()
        self._block = None
        self.initial_frame = self.frame

    def _ensure_initialized(self):
        if self.psi is None:
            for c in range(self.n):
                if c not in self.init_bits:
                    self.initialize(c, 0)

    # ---------------------------------------------------------------- column/group plumbing

    def groups(self, column: int) -> list[tuple[int, ...]]:
        pairs = [(up.chain, lo.chain) for up, lo in self.spec.merges if up.column == column]
        merged = {c for p in pairs for c in p}
        singles = [(c,) for c in range(self.n) if c not in merged]
        return sorted(pairs + singles)

    def begin_column(self) -> int:
        self._ensure_initialized()
        if self._group is not None:
            raise ProtocolError("previous group still open")
        if self.column >= self.n_columns:
            raise LatticeExhausted("no columns left", self.trajectory())
        self.column += 1
        self._pending_groups = self.groups(self.column)
        return self.column

    def _sites(self, group) -> list[SiteIndex]:
        j = self.column
        if len(group) == 2:
            a, b = group
            return [SiteIndex.make("A", a, j), SiteIndex.make("B", a, j), SiteIndex.make("A", b, j)]
        (c,) = group
        return [SiteIndex.make("A", c, j), SiteIndex.make("b", c, j)]

    def open_group(self, group: tuple[int, ...]):
        if self._group is not None:
            raise ProtocolError("another group is open")
        if group not in self._pending_groups:
            raise ProtocolError(f"group {group} is not pending in column {self.column}")
        n = self.n
        reg_in = list(range(n))
        reg_out = [n + c if c in group else c for c in range(n)]
        t = self.tensors
        if len(group) == 2:
            a, b = group
            operands = [t["A_u"].data, [46, a, n + a, 49], t["B"].data, [47, 49, 50],
                        t["A_d"].data, [48, b, n + b, 50]]
            phys = [46, 47, 48]
        else:
            (c,) = group
            operands = [t["chain_A"].data, [46, c, n + c, 49], t["pendant_b"].data, [47, 49]]
            phys = [46, 47]
        args = (self.psi, reg_in, *operands, phys + reg_out)
        key = (n, group)
        if key not in self._paths:
            self._paths[key] = np.einsum_path(*args, optimize="greedy")[0]
        tensor = np.einsum(*args, optimize=self._paths[key])
        self._block = _Block(tensor / np.linalg.norm(tensor), self._sites(group), n)
        self._group = group
        self._ok, self._legbit, self._axis = {}, {}, {}

    def close_group(self):
        self.psi = self._block.register()
        self._pending_groups.remove(self._group)
        self._block, self._group = None, None

    def end_column(self):
        if self._group is not None or self._pending_groups:
            raise ProtocolError(f"column {self.column} not fully measured")

    # ---------------------------------------------------------------- protocol steps

    def _a_site(self, c: int) -> SiteIndex:
        return SiteIndex.make("A", c, self.column)

    def _kind(self, c: int) -> str:
        g = self._group
        if len(g) == 1:
            return "chain_A"
        return "A_u" if c == g[0] else "A_d"

    def prenormalize(self, axes: dict[int, str]) -> dict[int, bool]:
        """Filter every A site of the open group; ``axes[c]`` is Z or X."""
        for c in self._group:
            ax = axes.get(c, "Z")
            k = self._measure(self._a_site(c), f"filter_{ax.lower()}", list(filter_pair(ax)), povm=True)
            self._ok[c] = k == 0
            self._axis[c] = ax
        return dict(self._ok)

    def decouple(self) -> dict[int, int]:
        """Measure the vertical site so each chain's vertical leg lands in its leg basis."""
        if set(self._ok) != set(self._group):
            raise ProtocolError("group not filtered")
        legs = tuple(leg_basis(self._axis[c], self._ok[c]) for c in self._group)
        if len(self._group) == 2:
            site = SiteIndex.make("B", self._group[0], self.column)
            mat = self.tensors["B"].data.reshape(4, 4)
            name = {"ZZ": "zhat", "XX": "beta"}.get("".join(legs), "B_" + "".join(legs))
        else:
            site = SiteIndex.make("b", self._group[0], self.column)
            mat = self.tensors["pendant_b"].data
            name = "pendant_" + legs[0]
        vecs = _leg_basis_cached(len(self._group), legs, mat)
        k = self._measure(site, name, list(vecs))
        bits = [(k >> 1) & 1, k & 1] if len(self._group) == 2 else [k]
        self._legbit = dict(zip(self._group, bits))
        return dict(self._legbit)

    def _push(self, c: int, label: str):
        self.frame = self.frame.push(c, label)

    def _ideal(self, op: np.ndarray, qubits: Sequence[int]):
        self.logical_map = _embed(op, qubits, self.n) @ self.logical_map

    def measure_a(self, c: int, task: _Task) -> str:
        """Final measurement of chain ``c``'s A site; returns succeeded/retried/idle."""
        key = context_key(self._kind(c), self._axis[c], self._ok[c], self._legbit[c])
        entry = self.tables["single"][key]
        site = self._a_site(c)
        if not self._ok[c]:
            name = "alpha" if self._axis[c] == "Z" else "alpha_sx"
            k = self._measure(site, name, list(basis_catalog()[name].vectors))
            self._push(c, entry["recover"]["outcomes"][k]["pauli"])
            return "idle" if task.kind == "idle" else "retried"
        if task.kind == "readout":
            k = self._measure(site, "zhat", list(np.eye(4, dtype=complex)))
            out = entry["readout"]["outcomes"][k]
            if out["class"] == "bit":
                bit = out["bit"] ^ self.frame.bits[c][0]
                proj = np.zeros((2, 2))
                proj[bit, bit] = 1
                self._ideal(proj, [c])
                self.readouts[c] = bit
                self.spent[c] = True
                self._push(c, out["pauli"])
                return "succeeded"
            self._push(c, out["pauli"])
            return "retried"
        rot = entry["rotate"]
        x, z = self.frame.bits[c]
        flip = x if task.axis == "Z" else z
        theta = task.theta * (-1) ** flip
        vecs = rotation_basis(task.axis, theta, rot["perm"], rot["sign"])
        k = self._measure(site, "alpha_" + task.axis.lower(), list(vecs))
        out = rot["outcomes"][k]
        self._push(c, out["pauli"])
        if task.kind == "idle":
            return "idle"
        if out["class"] == "rot":
            self._ideal(rz(task.theta) if task.axis == "Z" else rx(task.theta), [c])
            return "succeeded"
        return "retried"

    def entangle_block(self, gate: str) -> bool:
        """Entangling attempt on the open merged group (both filters succeeded)."""
        a, b = self._group
        cat = basis_catalog()
        i = self._measure(self._a_site(a), "mu_nu", list(cat["mu_nu"].vectors))
        j = self._measure(self._a_site(b), "mu_nu", list(cat["mu_nu"].vectors))
        entry = self.tables["entangle"][f"{i},{j}"]
        bsite = SiteIndex.make("B", a, self.column)
        if entry["gate"] == gate:
            name = entry["B_basis"]
            k = self._measure(bsite, name, list(cat[name].vectors))
            # V (Pa x Pb) = (Pa' x Pb') V, then the outcome's own byproduct
            pu, pd = propagate_through_v(self.frame.label(a), self.frame.label(b), gate[0], gate[1])
            bits = list(self.frame.bits)
            bits[a], bits[b] = pauli_bits(pu), pauli_bits(pd)
            self.frame = PauliFrame(tuple(bits))
            p = entry["outcomes"][k]["pauli"]
            self._push(a, p[0])
            self._push(b, p[1])
            self._ideal(entangling_gate(gate[0], gate[1]), [a, b])
            return True
        k = self._measure(bsite, "zhat", list(cat["zhat"].vectors))
        p = entry["fallback"][k]["pauli"]
        self._push(a, p[0])
        self._push(b, p[1])
        return False

    # ---------------------------------------------------------------- scheduling

    def _run_group(self, group, tasks: dict[int, _Task]) -> dict[int, str]:
        self.open_group(group)
        ent = len(group) == 2 and all(tasks[c].kind == "entangle" for c in group)
        ok = self.prenormalize({c: tasks[c].axis for c in group})
        result = {}
        if ent and all(ok.values()):
            self._current = tasks[group[0]].instruction
            done = self.entangle_block(tasks[group[0]].gate)
            result = {c: "succeeded" if done else "retried" for c in group}
        else:
            if ent:
                tasks = {c: _Task("idle", tasks[c].instruction) for c in group}
                result = {c: "retried" for c in group}
            self.decouple()
            for c in group:
                self._current = tasks[c].instruction
                status = self.measure_a(c, tasks[c])
                result.setdefault(c, status)
        self._current = None
        self.close_group()
        return result

    def run_column(self, tasks: dict[int, _Task]) -> dict[int, str]:
        self.begin_column()
        result = {}
        for group in list(self._pending_groups):
            result.update(self._run_group(group, {c: tasks.get(c, _Task("idle")) for c in group}))
        self.end_column()
        return result

    def trajectory(self) -> Trajectory:
        return Trajectory(
            self.spec, list(self.records), list(self.statuses),
            self.initial_frame or self.frame, self.frame, self.logical_map.copy(),
            dict(self.readouts), self.column, dict(self.init_bits), self.seed,
        )

    def execute(self, program: LogicalProgram, allow_incomplete: bool = False) -> Trajectory:
        """Run ``program`` column by column; see the module docstring."""
        program.validate(self.spec)
        instrs = program.instructions
        for i, ins in enumerate(instrs):
            if ins.op == "init":
                self._current = i
                self.initialize(ins.qubits[0], ins.bit)
                self.statuses.append(StepStatus(i, "init", 0, "succeeded"))
        self._current = None
        self._ensure_initialized()
        queues = {c: [i for i, ins in enumerate(instrs) if ins.op != "init" and c in ins.qubits]
                  for c in range(self.n)}
        attempts = {i: 0 for i in range(len(instrs))}
        while any(queues.values()):
            if self.column >= self.n_columns:
                for i in sorted({i for q in queues.values() for i in q}):
                    self.statuses.append(StepStatus(i, instrs[i].op, self.column, "pending"))
                if allow_incomplete:
                    return self.trajectory()
                raise LatticeExhausted(
                    f"lattice exhausted after {self.column} columns", self.trajectory())
            tasks = self._schedule(instrs, queues, self.column + 1)
            result = self.run_column(tasks)
            seen = set()
            for c, status in sorted(result.items()):
                i = tasks[c].instruction if c in tasks else None
                if i is None or i in seen or status == "idle":
                    continue
                seen.add(i)
                self.statuses.append(StepStatus(i, instrs[i].op, self.column, status))
                if status == "succeeded":
                    for q in instrs[i].qubits:
                        queues[q].remove(i)
                else:
                    attempts[i] += 1
                    if attempts[i] >= self.max_attempts:
                        raise RetryBudgetExceeded(
                            f"instruction {i} ({instrs[i].op}) failed {attempts[i]} attempts",
                            self.trajectory())
        return self.trajectory()

    def _schedule(self, instrs, queues, column) -> dict[int, _Task]:
        tasks = {}
        merged = {}
        for up, lo in self.spec.merges:
            if up.column == column:
                merged[up.chain] = merged[lo.chain] = (up.chain, lo.chain)
        for c in range(self.n):
            if not queues[c]:
                continue
            i = queues[c][0]
            ins = instrs[i]
            if ins.op == "entangle":
                pair = merged.get(c)
                other = ins.qubits[1] if ins.qubits[0] == c else ins.qubits[0]
                if pair and other in pair and queues[other] and queues[other][0] == i:
                    upper_first = ins.qubits[0] == pair[0]
                    gate = ins.m + ins.n if upper_first else ins.n + ins.m
                    tasks[c] = _Task("entangle", i, gate=gate)
                continue
            tasks[c] = _Task(ins.op, i, theta=ins.theta)
        return tasks


# --------------------------------------------------------------------------- functional API


def _single(state: ProtocolState, ins: Instruction) -> Trajectory:
    return state.execute(LogicalProgram((ins,)))


def initialize(state: ProtocolState, q: int, bit: int) -> int:
    return state.initialize(q, bit)


def prenormalize(state: ProtocolState, group: tuple[int, ...], axes: dict[int, str] | None = None):
    """Open ``group`` in a fresh column if needed and apply the filters."""
    if state._group is None:
        if group not in state._pending_groups:
            state.begin_column()
        state.open_group(group)
    return state.prenormalize(axes or {})


def decouple(state: ProtocolState) -> dict[int, int]:
    return state.decouple()


def readout(state: ProtocolState, q: int) -> int:
    _single(state, Instruction("readout", (q,)))
    return state.readouts[q]


def rotate_z(state: ProtocolState, q: int, theta: float) -> Trajectory:
    return _single(state, Instruction("rz", (q,), theta=theta))


def rotate_x(state: ProtocolState, q: int, theta: float) -> Trajectory:
    return _single(state, Instruction("rx", (q,), theta=theta))


def entangle(state: ProtocolState, q1: int, q2: int, m: str, n: str) -> Trajectory:
    return _single(state, Instruction("entangle", (q1, q2), m=m, n=n))


def run_program(spec: OctagonalSpec | None, program: LogicalProgram, seed: int | None = 0,
                max_attempts: int = DEFAULT_RETRIES, oracle: bool = False,
                n_chains: int | None = None, n_blocks: int = 64) -> tuple[Trajectory, dict]:
    """Sample one execution; the report holds outcomes, frames and readout bits.

    With ``oracle=True`` the report also carries the process fidelity of the
    induced logical map against the tracked ideal map.
    """
    if spec is None:
        need = 1 + max((q for ins in program for q in ins.qubits), default=0)
        spec = octagonal_lattice(n_chains or max(need, 1), n_blocks)
    state = ProtocolState(spec, seed=seed, max_attempts=max_attempts)
    traj = state.execute(program)
    report = {"trajectory": traj.to_dict(), "readouts": {str(k): v for k, v in traj.readouts.items()}}
    if oracle:
        from .oracle import oracle_verify

        res = oracle_verify(traj)
        report["oracle"] = res.to_dict()
    return traj, report


def enumerate_branches(spec: OctagonalSpec, program: LogicalProgram, max_branches: int = 100000,
                       **kwargs) -> list[Trajectory]:
    """Every nonzero-probability outcome branch of ``program`` (depth-first).

    Branches that run out of columns are returned with pending statuses.
    """
    out = []
    stack: list[list[int]] = [[]]
    while stack:
        prefix = stack.pop()
        taken: list[int] = []
        seen_probs: list[np.ndarray] = []

        def chooser(probs, label, prefix=prefix, taken=taken, seen_probs=seen_probs):
            k = len(taken)
            idx = prefix[k] if k < len(prefix) else int(np.flatnonzero(probs > _ZERO_PROB)[0])
            taken.append(idx)
            seen_probs.append(probs)
            return idx

        state = ProtocolState(spec, seed=None, chooser=chooser, **kwargs)
        try:
            traj = state.execute(program, allow_incomplete=True)
        except RetryBudgetExceeded as exc:
            traj = exc.trajectory
        out.append(traj)
        if len(out) > max_branches:
            raise ProtocolError(f"more than {max_branches} branches")
        for k in range(len(taken) - 1, len(prefix) - 1, -1):
            for alt in np.flatnonzero(seen_probs[k] > _ZERO_PROB):
                if alt > taken[k]:
                    stack.append(taken[:k] + [int(alt)])
    return out
