"""Clocked instruction engine for the random access memory.

Time is an integer slot counter; one slot is one 2 us memory clock cycle
(two 1 us micro-ensemble accesses). All storage times are derived as
``(read_slot - write_slot) * SLOT_US``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .budget import click_probability
from .encoding import IDENTITY, ConverterBank, converter_channel
from .memarray import N_CELLS, MemoryArray, ProtocolViolation, Retrieved, Stored
from .qstate import LABELS, Polarization, fidelity_to_pure, polarization, polarization_to_density

SLOT_US = 2.0
WINDOW_US = 500.0


class Op(str, Enum):
    WRITE = "W"
    READ = "R"


@dataclass(frozen=True)
class Instruction:
    slot: int
    op: Op
    cell: int
    pol: Polarization | None = None
    forced: bool = False

    @classmethod
    def write(cls, slot, cell, pol):
        if isinstance(pol, str):
            pol = polarization(pol)
        return cls(slot, Op.WRITE, cell, pol)

    @classmethod
    def read(cls, slot, cell, forced=False):
        return cls(slot, Op.READ, cell, None, forced)


# --- sequence generation ---------------------------------------------------

def write_probability(filling: int, capacity: int = N_CELLS) -> float:
    """Probability of choosing a write at a given filling number."""
    if not 0 <= filling <= capacity:
        raise ValueError(f"filling {filling} outside 0..{capacity}")
    if filling == 0:
        return 1.0
    if filling == capacity:
        return 0.0
    return 0.65 - 0.3 * filling / capacity


@dataclass
class ControllerState:
    occupancy: dict[int, int] = field(default_factory=dict)  # cell -> write slot
    window_us: float | None = WINDOW_US
    capacity: int = N_CELLS

    @property
    def filling(self) -> int:
        return len(self.occupancy)

    def apply(self, ins: Instruction) -> None:
        if ins.op is Op.WRITE:
            self.occupancy[ins.cell] = ins.slot
        else:
            del self.occupancy[ins.cell]


def apply_scrolling_window(state: ControllerState, next_slot: int) -> Instruction | None:
    """Forced read for ``next_slot`` if a stored qubit would reach the window one cycle later.

    Only the oldest such qubit is read; ties go to the lowest cell index.
    """
    if state.window_us is None or not state.occupancy:
        return None
    cell, w = min(state.occupancy.items(), key=lambda kv: (kv[1], kv[0]))
    if (next_slot + 1 - w) * SLOT_US >= state.window_us:
        return Instruction.read(next_slot, cell, forced=True)
    return None


def generate_random_sequence(n_ops: int, rng: np.random.Generator, window_us: float | None = None,
                             capacity: int = N_CELLS) -> list[Instruction]:
    """Random write/read sequence; with ``window_us`` set, expiring qubits preempt the generator."""
    if n_ops < 1:
        raise ValueError("n_ops must be at least 1")
    state = ControllerState(window_us=window_us, capacity=capacity)
    seq = []
    cells = range(1, capacity + 1)
    for slot in range(n_ops):
        ins = apply_scrolling_window(state, slot)
        if ins is None:
            if rng.random() < write_probability(state.filling, capacity):
                empty = [c for c in cells if c not in state.occupancy]
                ins = Instruction.write(slot, empty[rng.integers(len(empty))], LABELS[rng.integers(4)])
            else:
                occupied = sorted(state.occupancy)
                ins = Instruction.read(slot, occupied[rng.integers(len(occupied))])
        state.apply(ins)
        seq.append(ins)
    return seq


# --- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    index: int
    slot: int
    kind: str
    message: str


def validate_sequence(seq, window_us: float | None = None, capacity: int = N_CELLS) -> list[Violation]:
    """Replay occupancy and report every rule broken; an empty list means the sequence is sound."""
    out = []
    occ: dict[int, int] = {}
    last_slot = None
    for i, ins in enumerate(seq):
        def bad(kind, msg):
            out.append(Violation(i, ins.slot, kind, msg))

        if last_slot is not None and ins.slot <= last_slot:
            bad("slot_order", f"slot {ins.slot} does not follow {last_slot}")
        last_slot = ins.slot
        if window_us is not None:
            for c, w in sorted(occ.items()):
                if (ins.slot - w) * SLOT_US > window_us:
                    bad("window", f"cell {c} aged {(ins.slot - w) * SLOT_US:g} us past the window")
        if not 1 <= ins.cell <= capacity:
            bad("cell_range", f"cell {ins.cell} outside 1..{capacity}")
            continue
        if ins.op is Op.WRITE:
            if ins.pol is None:
                bad("missing_pol", f"write to cell {ins.cell} carries no polarization")
            if ins.forced:
                bad("forced_write", "only reads can be forced")
            if ins.cell in occ:
                bad("write_occupied", f"write to occupied cell {ins.cell}")
                continue
            if len(occ) >= capacity:
                bad("filling_range", "filling would exceed capacity")
                continue
            occ[ins.cell] = ins.slot
        else:
            if ins.pol is not None:
                bad("read_pol", f"read of cell {ins.cell} carries a polarization")
            if ins.cell not in occ:
                bad("read_empty", f"read of empty cell {ins.cell}")
                continue
            del occ[ins.cell]
    return out


# --- queue, stack and buffer ------------------------------------------------

def _pols(n, pols, rng):
    if pols is not None:
        if len(pols) != n:
            raise ValueError("need one polarization per qubit")
        return [polarization(p) if isinstance(p, str) else p for p in pols]
    if rng is not None:
        return [polarization(LABELS[k]) for k in rng.integers(4, size=n)]
    return [polarization(LABELS[i % 4]) for i in range(n)]


def _check_capacity(n):
    if not 1 <= n <= N_CELLS:
        raise ValueError(f"capacity exceeded: {n} qubits for {N_CELLS} cells")


def queue_policy(n: int = N_CELLS, pols=None, rng=None, start_slot: int = 0) -> list[Instruction]:
    """n contiguous enqueues into cells 1..n, then n dequeues in arrival order."""
    _check_capacity(n)
    p = _pols(n, pols, rng)
    seq = [Instruction.write(start_slot + i, i + 1, p[i]) for i in range(n)]
    seq += [Instruction.read(start_slot + n + i, i + 1) for i in range(n)]
    return seq


def stack_policy(n: int = N_CELLS, pols=None, rng=None, start_slot: int = 0) -> list[Instruction]:
    """n contiguous pushes into cells 1..n, then n pops in reverse order."""
    _check_capacity(n)
    p = _pols(n, pols, rng)
    seq = [Instruction.write(start_slot + i, i + 1, p[i]) for i in range(n)]
    seq += [Instruction.read(start_slot + n + i, n - i) for i in range(n)]
    return seq


def buffer_policy(arrivals, flush_order, pols=None, rng=None) -> list[Instruction]:
    """Writes at the given arrival slots, then one contiguous read block in ``flush_order``."""
    arrivals = list(arrivals)
    n = len(arrivals)
    _check_capacity(n)
    if sorted(flush_order) != list(range(1, n + 1)):
        raise ValueError("flush_order must be a permutation of 1..n")
    if any(b <= a for a, b in zip(arrivals, arrivals[1:])):
        raise ValueError("arrival slots must be strictly increasing")
    p = _pols(n, pols, rng)
    seq = [Instruction.write(s, i + 1, p[i]) for i, s in enumerate(arrivals)]
    start = arrivals[-1] + 1
    seq += [Instruction.read(start + k, c) for k, c in enumerate(flush_order)]
    return seq


def random_arrivals(n: int, receive_slots: int, rng: np.random.Generator) -> list[int]:
    """Sorted sparse arrival slots spanning exactly ``receive_slots`` slots."""
    if n > receive_slots or n < 2:
        raise ValueError("need 2 <= n <= receive_slots")
    inner = rng.choice(np.arange(1, receive_slots - 1), size=n - 2, replace=False)
    return [0, *sorted(int(s) for s in inner), receive_slots - 1]


def general_container_sequence(kind: str, n: int = N_CELLS, rng: np.random.Generator | None = None,
                               pols=None) -> list[Instruction]:
    """Interleaved queue or stack: each clock chooses input or output with equal chance.

    The i-th input goes to cell i; the sequence ends when all n qubits have left.
    """
    if kind not in ("queue", "stack"):
        raise ValueError(f"kind must be 'queue' or 'stack', got {kind!r}")
    _check_capacity(n)
    rng = rng if rng is not None else np.random.default_rng()
    p = _pols(n, pols, rng)
    held: list[int] = []
    seq = []
    pushed = slot = 0
    while pushed < n or held:
        if pushed < n and (not held or rng.random() < 0.5):
            pushed += 1
            held.append(pushed)
            seq.append(Instruction.write(slot, pushed, p[pushed - 1]))
        else:
            cell = held.pop(0) if kind == "queue" else held.pop()
            seq.append(Instruction.read(slot, cell))
        slot += 1
    return seq


# --- execution ---------------------------------------------------------------

@dataclass
class Outcome:
    kind: str  # stored | lost | retrieved | forced_retrieved
    pol: str | None = None
    fidelity: float | None = None
    storage_time_us: float | None = None
    click_probability: float | None = None


@dataclass
class Trace:
    records: list[tuple[Instruction, Outcome]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def to_dict(self) -> dict:
        return {"meta": self.meta, "records": [_record_to_dict(i, o) for i, o in self.records]}

    @classmethod
    def from_dict(cls, data: dict) -> "Trace":
        try:
            recs = [_record_from_dict(r) for r in data["records"]]
            return cls(recs, dict(data.get("meta", {})))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ValueError(f"malformed trace: {exc!r}") from None

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def loads(cls, text: str) -> "Trace":
        return cls.from_dict(json.loads(text))


def pol_token(pol: Polarization) -> str:
    return pol.label or f"{pol.theta!r},{pol.phi!r}"


def parse_pol(token: str) -> Polarization:
    if "," in token:
        theta, phi = token.split(",")
        return Polarization(float(theta), float(phi))
    return polarization(token)


def _record_to_dict(ins, out):
    d = {"slot": ins.slot, "op": ins.op.value, "cell": ins.cell, "forced": ins.forced,
         "pol": pol_token(ins.pol) if ins.pol is not None else None}
    d.update({k: v for k, v in asdict(out).items() if k != "pol"})
    d["input_pol"] = out.pol
    return d


def _record_from_dict(d):
    ins = Instruction(d["slot"], Op(d["op"]), d["cell"], parse_pol(d["pol"]) if d["pol"] else None, d["forced"])
    out = Outcome(d["kind"], d["input_pol"], d["fidelity"], d["storage_time_us"], d["click_probability"])
    return ins, out


def run_sequence(seq, array: MemoryArray, bank: ConverterBank, rng: np.random.Generator,
                 blind: bool = False, n_bar: float = 0.5, budget=None) -> Trace:
    """Execute a sequence slot by slot against the array and converters.

    Fidelity of every retrieved qubit is taken against the polarization it was
    written with. A read of a cell whose write was lost is recorded as lost;
    with ``blind=True`` the controller still drives the (empty) cell, so its
    neighbors accrue crosstalk.
    """
    trace = Trace()
    written: dict[int, tuple[int, Polarization]] = {}
    for ins in seq:
        t = ins.slot * SLOT_US
        if ins.op is Op.WRITE:
            rho = converter_channel(polarization_to_density(ins.pol), bank.input, IDENTITY, rng)
            res = array.write(ins.cell, rho, t, rng)
            written[ins.cell] = (ins.slot, ins.pol)
            kind = "stored" if isinstance(res, Stored) else "lost"
            trace.records.append((ins, Outcome(kind, pol_token(ins.pol))))
            continue
        if ins.cell not in written:
            raise ProtocolViolation(f"read of never-written cell {ins.cell} at slot {ins.slot}")
        w_slot, pol = written.pop(ins.cell)
        storage = (ins.slot - w_slot) * SLOT_US
        if not array.cells[ins.cell].occupied:
            if blind:
                array.touch(ins.cell)
            trace.records.append((ins, Outcome("lost", pol_token(pol), None, storage)))
            continue
        res = array.read(ins.cell, t, rng)
        if isinstance(res, Retrieved):
            rho = converter_channel(res.rho, IDENTITY, bank.output(ins.cell), rng)
            fid = fidelity_to_pure(rho, pol.ket)
            eta = array.eta_write(ins.cell) * array.eta_read(ins.cell, storage)
            click = click_probability(eta, n_bar, budget)
            kind = "forced_retrieved" if ins.forced else "retrieved"
            trace.records.append((ins, Outcome(kind, pol_token(pol), fid, storage, click)))
        else:
            trace.records.append((ins, Outcome("lost", pol_token(pol), None, storage)))
    return trace


# --- sequence files ----------------------------------------------------------

def format_sequence(seq) -> str:
    lines = []
    for ins in seq:
        op = "RF" if ins.forced else ins.op.value
        parts = [str(ins.slot), op, str(ins.cell)]
        if ins.pol is not None:
            parts.append(pol_token(ins.pol))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_sequence(text: str) -> list[Instruction]:
    """Parse ``slot op cell [pol]`` lines; ``#`` starts a comment."""
    seq = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise ValueError(f"line {n}: expected 'slot op cell [pol]', got {raw!r}")
        try:
            slot, cell = int(parts[0]), int(parts[2])
        except ValueError:
            raise ValueError(f"line {n}: slot and cell must be integers") from None
        op = parts[1].upper()
        if op not in ("W", "R", "RF"):
            raise ValueError(f"line {n}: unknown op {parts[1]!r}")
        pol = parse_pol(parts[3]) if len(parts) == 4 else None
        seq.append(Instruction(slot, Op.WRITE if op == "W" else Op.READ, cell, pol, op == "RF"))
    return seq


def read_sequence(path) -> list[Instruction]:
    return parse_sequence(Path(path).read_text())


def write_sequence(path, seq) -> None:
    Path(path).write_text(format_sequence(seq))
