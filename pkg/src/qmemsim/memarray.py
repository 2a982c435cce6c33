"""Physical model of the 12x12 micro-ensemble array.

Each qubit cell is a pair of horizontally adjacent micro-ensembles: the H arm
of the qubit sits in the left member, the V arm in the right one. Storage
noise is composed from three pieces applied at read-out:

* a read-out filter (per-arm efficiency skew plus a background floor),
* neighbor crosstalk, one small depolarizing kick per operation on an
  adjacent micro-ensemble,
* time-dependent decay toward the maximally mixed state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .qstate import apply_depolarizing, normalize, on_qubit

ROWS = 12
COLS = 12
N_MICRO = ROWS * COLS
N_CELLS = N_MICRO // 2
FREQ_BASE_MHZ = 85.0
FREQ_STEP_MHZ = 3.0
SOUND_SPEED = 650.0  # m/s in the AOD crystal


class ProtocolViolation(RuntimeError):
    """Raised on a caller bug such as reading an empty cell."""


def switching_time(beam_waist: float, sound_speed: float = SOUND_SPEED) -> float:
    """AOD switching time ``w / v_s`` in seconds (waist in m, speed in m/s)."""
    if beam_waist <= 0 or sound_speed <= 0:
        raise ValueError("beam waist and sound speed must be positive")
    return beam_waist / sound_speed


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = ROWS
    cols: int = COLS
    freq_base: float = FREQ_BASE_MHZ
    freq_step: float = FREQ_STEP_MHZ

    def frequency(self, j: int) -> float:
        """AOD drive frequency in MHz for row/column index ``j``."""
        if not 0 <= j < max(self.rows, self.cols):
            raise IndexError(j)
        return self.freq_base + self.freq_step * j

    def aod_frequencies(self, coord: tuple[int, int]) -> tuple[float, float]:
        r, c = coord
        return self.frequency(c), self.frequency(r)

    def pair(self, cell: int) -> tuple[tuple[int, int], tuple[int, int]]:
        """Row-major horizontal pairing; cell indices run 1..72."""
        if not 1 <= cell <= self.n_cells:
            raise IndexError(f"cell {cell} outside 1..{self.n_cells}")
        per_row = self.cols // 2
        r, k = divmod(cell - 1, per_row)
        return (r, 2 * k), (r, 2 * k + 1)

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols // 2

    def neighbors(self, cell: int) -> frozenset[tuple[int, int]]:
        """Nearest micro-ensembles around the pair, excluding its own members."""
        members = self.pair(cell)
        out = set()
        for r, c in members:
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < self.rows and 0 <= cc < self.cols:
                    out.add((rr, cc))
        return frozenset(out - set(members))

    def flat(self, coord: tuple[int, int]) -> int:
        return coord[0] * self.cols + coord[1]


def radial_profile(rows: int = ROWS, cols: int = COLS) -> np.ndarray:
    """Squared distance from the array center, scaled to 1 at the corners."""
    r, c = np.mgrid[0:rows, 0:cols]
    r0, c0 = (rows - 1) / 2, (cols - 1) / 2
    d2 = (r - r0) ** 2 + (c - c0) ** 2
    return (d2 / d2.max()).ravel()


def default_efficiency_map(mean: float = 0.055) -> np.ndarray:
    # optical depth ~5 in the center falling to ~3 at the corners
    od = 5.0 - 2.0 * radial_profile()
    return od / od.mean() * mean


def default_coherence_map(center: float = 700.0, corner: float = 450.0) -> np.ndarray:
    return center - (center - corner) * radial_profile()


@dataclass
class PhysicsParams:
    """Physical constants of the array. Times in microseconds."""

    tau_coherence: np.ndarray = field(default_factory=default_coherence_map)
    eta_atoms: np.ndarray = field(default_factory=default_efficiency_map)
    crosstalk_round_infidelity: float = 0.01
    access_time_micro: float = 1.0
    settle_time: float = 0.8
    gate_window: float = 0.2
    fidelity_floor: float = 0.5
    # fidelity lifetime as a multiple of the efficiency coherence time
    fidelity_lifetime_factor: float = 8.0
    decay_law: str = "exponential"
    efficiency_decay: bool = True
    v_arm_skew: float = 2.0
    readout_background: float = 0.05

    def __post_init__(self):
        self.tau_coherence = np.asarray(self.tau_coherence, dtype=float).ravel()
        self.eta_atoms = np.asarray(self.eta_atoms, dtype=float).ravel()
        if self.tau_coherence.size != N_MICRO or self.eta_atoms.size != N_MICRO:
            raise ValueError(f"efficiency and coherence maps need {N_MICRO} entries")
        if np.any(self.eta_atoms <= 0) or np.any(self.eta_atoms > 1):
            raise ValueError("efficiencies must lie in (0, 1]")
        if np.any(self.tau_coherence <= 0):
            raise ValueError("coherence times must be positive")
        if not 0 <= self.crosstalk_round_infidelity <= 0.1:
            raise ValueError("crosstalk_round_infidelity must lie in [0, 0.1]")
        if min(self.access_time_micro, self.settle_time, self.gate_window) <= 0:
            raise ValueError("timing constants must be positive")
        if self.fidelity_lifetime_factor <= 0:
            raise ValueError("fidelity_lifetime_factor must be positive")
        if self.decay_law not in ("exponential", "gaussian"):
            raise ValueError(f"unknown decay law {self.decay_law!r}")
        if self.v_arm_skew <= 0 or self.readout_background < 0:
            raise ValueError("v_arm_skew must be positive and readout_background non-negative")

    @classmethod
    def noiseless(cls) -> "PhysicsParams":
        return cls(
            tau_coherence=np.full(N_MICRO, np.inf),
            eta_atoms=np.ones(N_MICRO),
            crosstalk_round_infidelity=0.0,
            efficiency_decay=False,
            v_arm_skew=1.0,
            readout_background=0.0,
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = [float(x) for x in v] if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicsParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown physics parameters: {sorted(unknown)}")
        return cls(**data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "PhysicsParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def decay_probability(dt: float, tau: float, law: str = "exponential") -> float:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if np.isinf(tau) or dt == 0:
        return 0.0
    x = dt / tau
    return float(1 - np.exp(-(x * x if law == "gaussian" else x)))


def decohere_channel(rho: np.ndarray, dt: float, tau: float, law: str = "exponential", qubit: int = 1) -> np.ndarray:
    """Depolarize toward the maximally mixed state with ``p = 1 - exp(-dt/tau)``."""
    p = decay_probability(dt, tau, law)
    return on_qubit(rho, lambda b: apply_depolarizing(b, p), qubit)


def crosstalk_per_op(round_infidelity: float) -> float:
    # a full round hits 6 neighbors; depolarizing p costs p/2 fidelity on a pure qubit
    return 2 * round_infidelity / 6


def crosstalk_channel(rho: np.ndarray, neighbor_ops: int, round_infidelity: float = 0.01, qubit: int = 1) -> np.ndarray:
    if neighbor_ops < 0:
        raise ValueError("neighbor_ops must be non-negative")
    p = 1 - (1 - crosstalk_per_op(round_infidelity)) ** neighbor_ops
    return on_qubit(rho, lambda b: apply_depolarizing(b, p), qubit)


def readout_filter(rho: np.ndarray, skew: float, background: float, qubit: int = 1) -> np.ndarray:
    """Weight the arms by relative efficiency and add a background floor, then renormalize.

    ``skew`` is the V-arm to H-arm efficiency ratio; ``background`` is the
    noise-count rate relative to the mean signal rate.
    """
    w_h, w_v = 2 / (1 + skew), 2 * skew / (1 + skew)
    k = np.diag([np.sqrt(w_h), np.sqrt(w_v)])

    def f(b):
        return k @ b @ k + background * np.trace(b) * np.eye(2) / 2

    return normalize(on_qubit(rho, f, qubit))


@dataclass
class CellState:
    occupied: bool = False
    rho: np.ndarray | None = None
    t_write: float | None = None
    neighbor_ops_since_write: int = 0


@dataclass(frozen=True)
class Stored:
    cell: int


@dataclass(frozen=True)
class Lost:
    cell: int


@dataclass(frozen=True)
class Retrieved:
    cell: int
    rho: np.ndarray


class MemoryArray:
    """Mutable array state owned by a single controller.

    With ``postselect=True`` every write and read succeeds; statistics then
    describe detected events only, as accumulated over repeated runs.
    """

    def __init__(self, params: PhysicsParams | None = None, geometry: ArrayGeometry | None = None,
                 postselect: bool = False):
        self.params = params if params is not None else PhysicsParams()
        self.geometry = geometry if geometry is not None else ArrayGeometry()
        self.postselect = postselect
        self.cells = {c: CellState() for c in range(1, self.geometry.n_cells + 1)}
        self._watchers: dict[tuple[int, int], list[int]] = {}
        for c in self.cells:
            for coord in self.geometry.neighbors(c):
                self._watchers.setdefault(coord, []).append(c)

    # per-cell derived quantities
    def _members(self, cell):
        a, b = self.geometry.pair(cell)
        return self.geometry.flat(a), self.geometry.flat(b)

    def eta_cell(self, cell: int) -> float:
        a, b = self._members(cell)
        return float((self.params.eta_atoms[a] + self.params.eta_atoms[b]) / 2)

    def eta_write(self, cell: int) -> float:
        return float(np.sqrt(self.eta_cell(cell)))

    def tau_coherence(self, cell: int) -> float:
        a, b = self._members(cell)
        return float((self.params.tau_coherence[a] + self.params.tau_coherence[b]) / 2)

    def tau_fidelity(self, cell: int) -> float:
        return self.tau_coherence(cell) * self.params.fidelity_lifetime_factor

    def eta_read(self, cell: int, dt: float = 0.0) -> float:
        eta = np.sqrt(self.eta_cell(cell))
        if self.params.efficiency_decay:
            eta *= np.exp(-dt / self.tau_coherence(cell))
        return float(eta)

    def arm_skew(self, cell: int) -> float:
        a, b = self._members(cell)
        return float(self.params.v_arm_skew * self.params.eta_atoms[b] / self.params.eta_atoms[a])

    @property
    def filling(self) -> int:
        return sum(s.occupied for s in self.cells.values())

    def access_micro(self, coord: tuple[int, int]) -> None:
        """Operate one micro-ensemble; stored neighbors accrue one crosstalk kick."""
        for c in self._watchers.get(coord, ()):
            st = self.cells[c]
            if st.occupied:
                st.neighbor_ops_since_write += 1

    def touch(self, cell: int) -> None:
        """Drive both micro-ensembles of a cell without storing or retrieving anything."""
        for coord in self.geometry.pair(cell):
            self.access_micro(coord)

    def write(self, cell: int, rho_in: np.ndarray, t: float, rng: np.random.Generator):
        st = self._cell(cell)
        if st.occupied:
            raise ProtocolViolation(f"write to occupied cell {cell}")
        self.touch(cell)
        if not self.postselect and rng.random() >= self.eta_write(cell):
            return Lost(cell)
        st.occupied, st.rho, st.t_write, st.neighbor_ops_since_write = True, rho_in, t, 0
        return Stored(cell)

    def read_channel(self, cell: int, rho: np.ndarray, dt: float, neighbor_ops: int, qubit: int = 1) -> np.ndarray:
        p = self.params
        out = readout_filter(rho, self.arm_skew(cell), p.readout_background, qubit)
        out = crosstalk_channel(out, neighbor_ops, p.crosstalk_round_infidelity, qubit)
        return decohere_channel(out, dt, self.tau_fidelity(cell), p.decay_law, qubit)

    def read(self, cell: int, t: float, rng: np.random.Generator, qubit: int = 1):
        st = self._cell(cell)
        if not st.occupied:
            raise ProtocolViolation(f"read of empty cell {cell}")
        dt = t - st.t_write
        if dt < 0:
            raise ProtocolViolation(f"read of cell {cell} at t={t} before its write at {st.t_write}")
        rho, ops = st.rho, st.neighbor_ops_since_write
        self.cells[cell] = CellState()
        self.touch(cell)
        if not self.postselect and rng.random() >= self.eta_read(cell, dt):
            return Lost(cell)
        return Retrieved(cell, self.read_channel(cell, rho, dt, ops, qubit))

    def _cell(self, cell):
        if cell not in self.cells:
            raise ProtocolViolation(f"cell {cell} outside 1..{len(self.cells)}")
        return self.cells[cell]
