"""Heralded photon-pair source and the catch-freeze-reshuffle-release protocol.

The source runs write-clean trials every ``cycle`` us, each succeeding with
probability ``p_exc``. A herald (signal-photon click) triggers storage of the
idler in the next free cell; the source then sits idle for
``catch_dead_time`` while the feed-forward reconfigures the memory. Once all
idlers are caught they are released in consecutive clock slots in any order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .controller import SLOT_US
from .encoding import IDENTITY, ConverterBank, converter_channel
from .memarray import MemoryArray, Retrieved
from .qstate import PSI_PLUS, estimate_bell_fidelity, fidelity_to_pure, werner_state


class HeraldTimeout(RuntimeError):
    pass


@dataclass(frozen=True)
class SourceParams:
    p_exc: float = 0.011
    cycle: float = 0.7  # us
    f_source: float = 0.94
    catch_dead_time: float = 2.0  # us
    max_trials: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.p_exc <= 1:
            raise ValueError("p_exc must lie in (0, 1]")
        if self.cycle <= 0:
            raise ValueError("cycle must be positive")
        if not 0.25 < self.f_source <= 1:
            raise ValueError("f_source must lie in (0.25, 1]")
        if self.catch_dead_time < 0:
            raise ValueError("catch_dead_time must be non-negative")


def sample_herald(params: SourceParams, rng: np.random.Generator) -> tuple[int, float]:
    """Trials until the first herald and the herald time in us."""
    k = int(rng.geometric(params.p_exc))
    if k > params.max_trials:
        raise HeraldTimeout(f"no herald within {params.max_trials} trials")
    return k, k * params.cycle


def sample_herald_times(params: SourceParams, n_pairs: int, rng: np.random.Generator, start: float = 0.0) -> list[float]:
    times = []
    t = start
    trials = 0
    for _ in range(n_pairs):
        k, dt = sample_herald(params, rng)
        trials += k
        if trials > params.max_trials:
            raise HeraldTimeout(f"{n_pairs} heralds need more than {params.max_trials} trials")
        times.append(t + dt)
        t = times[-1] + params.catch_dead_time
    return times


def prob_k_pairs_within(T: float, k: int, params: SourceParams, method: str = "analytic",
                        rng: np.random.Generator | None = None, samples: int = 100_000) -> float:
    """Probability that ``k`` heralds, each followed by the catch dead time, finish within ``T`` us.

    The dead time is deterministic, so the analytic path just removes it from
    the budget: k successes are needed among ``floor((T - k*dead)/cycle)`` trials.
    """
    if T <= 0 or k < 1:
        raise ValueError("need T > 0 and k >= 1")
    if method == "analytic":
        if math.isinf(T):
            return 1.0
        n = math.floor((T - k * params.catch_dead_time) / params.cycle + 1e-9)
        if n < k:
            return 0.0
        return float(binom.sf(k - 1, n, params.p_exc))
    if method == "montecarlo":
        rng = rng if rng is not None else np.random.default_rng()
        trials = rng.geometric(params.p_exc, size=(samples, k)).sum(axis=1)
        done = trials * params.cycle + k * params.catch_dead_time
        return float(np.mean(done <= T + 1e-9))
    raise ValueError(f"unknown method {method!r}")


@dataclass
class EPRRecord:
    pair_id: int
    herald_time: float
    cell: int
    write_slot: int
    release_slot: int
    rho_final: np.ndarray | None
    fidelity: float | None

    @property
    def storage_time_us(self) -> float:
        return self.release_slot * SLOT_US - self.herald_time

    @property
    def memory_time_us(self) -> float:
        return (self.release_slot - self.write_slot) * SLOT_US

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id, "herald_time": self.herald_time, "cell": self.cell,
            "write_slot": self.write_slot, "release_slot": self.release_slot,
            "storage_time_us": self.storage_time_us, "fidelity": self.fidelity,
        }


def catch_freeze_reshuffle_release(order, params: SourceParams, array: MemoryArray, bank: ConverterBank,
                                   rng: np.random.Generator, cells=None) -> list[EPRRecord]:
    """Catch ``len(order)`` idlers at random herald times, then release them in ``order``.

    ``order`` lists pair ids (1-based, by arrival) in release sequence, so
    ``(2, 4, 1, 3)`` releases the second-caught idler first. Records come back
    in release order.
    """
    order = list(order)
    n = len(order)
    if sorted(order) != list(range(1, n + 1)):
        raise ValueError("order must be a permutation of 1..n")
    if cells is None:
        free = [c for c, st in sorted(array.cells.items()) if not st.occupied]
        if len(free) < n:
            raise ValueError(f"insufficient capacity: {len(free)} free cells for {n} idlers")
        cells = free[:n]

    heralds = sample_herald_times(params, n, rng)
    source = werner_state(params.f_source)
    write_slots = []
    stored = []
    for pair, (h, cell) in enumerate(zip(heralds, cells), 1):
        slot = math.ceil(h / SLOT_US - 1e-9)
        if write_slots:
            slot = max(slot, write_slots[-1] + 1)
        write_slots.append(slot)
        rho = converter_channel(source, bank.input, IDENTITY, rng, qubit=1)
        stored.append(array.write(cell, rho, slot * SLOT_US, rng))

    records = []
    for k, pair in enumerate(order):
        i = pair - 1
        release = write_slots[-1] + 1 + k
        rho = fid = None
        if array.cells[cells[i]].occupied:
            res = array.read(cells[i], release * SLOT_US, rng, qubit=1)
            if isinstance(res, Retrieved):
                rho = converter_channel(res.rho, IDENTITY, bank.output(cells[i]), rng, qubit=1)
                fid = fidelity_to_pure(rho, PSI_PLUS)
        records.append(EPRRecord(pair, heralds[i], cells[i], write_slots[i], release, rho, fid))
    return records


def pair_fidelity_via_tomography(record: EPRRecord, shots: int, rng: np.random.Generator) -> tuple[float, bool]:
    """Estimate the Bell fidelity from sampled xx, yy, zz coincidences."""
    if record.rho_final is None:
        raise ValueError(f"pair {record.pair_id} was lost; nothing to measure")
    return estimate_bell_fidelity(record.rho_final, shots, rng)
