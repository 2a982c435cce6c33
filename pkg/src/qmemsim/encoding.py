"""Polarization <-> time-bin <-> path conversion errors.

The whole chain is collapsed into one diagonal operator per direction,
``diag(1, r * exp(i(phase + xi)))`` with ``xi`` a per-shot phase jitter from
imperfect interferometer locking. Diagonal (H/V) states pass untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .qstate import normalize, on_qubit


@dataclass(frozen=True)
class ConverterCalibration:
    amp_imbalance: float = 1.0
    phase_offset: float = 0.0
    phase_jitter_sigma: float = 0.0
    arm_delay: float = 1.0  # us, one micro-ensemble access

    def __post_init__(self):
        if self.amp_imbalance <= 0:
            raise ValueError("amp_imbalance must be positive")
        if self.phase_jitter_sigma < 0:
            raise ValueError("phase_jitter_sigma must be non-negative")

    def inverse(self) -> "ConverterCalibration":
        return ConverterCalibration(1 / self.amp_imbalance, -self.phase_offset, self.phase_jitter_sigma, self.arm_delay)


IDENTITY = ConverterCalibration()


def compose(cal_in: ConverterCalibration, cal_out: ConverterCalibration) -> tuple[float, float, float]:
    """Net (amplitude ratio, phase, jitter sigma) of two chains in series."""
    return (
        cal_in.amp_imbalance * cal_out.amp_imbalance,
        cal_in.phase_offset + cal_out.phase_offset,
        float(np.hypot(cal_in.phase_jitter_sigma, cal_out.phase_jitter_sigma)),
    )


def _diag_map(r, phase):
    # elementwise form of D b D^dagger; the diagonal stays exactly (1, r^2)
    c = r * np.exp(1j * phase)
    mask = np.array([[1.0, np.conj(c)], [c, r * r]])
    return lambda b: mask * b


def converter_channel(rho_in: np.ndarray, cal_in: ConverterCalibration, cal_out: ConverterCalibration = IDENTITY,
                      rng: np.random.Generator | None = None, qubit: int = 1) -> np.ndarray:
    """One shot through the chain; the jitter draw is always consumed from ``rng``."""
    r, phase, sigma = compose(cal_in, cal_out)
    xi = sigma * rng.standard_normal() if rng is not None else 0.0
    return normalize(on_qubit(rho_in, _diag_map(r, phase + xi), qubit))


def mean_converter_channel(rho_in: np.ndarray, cal_in: ConverterCalibration,
                           cal_out: ConverterCalibration = IDENTITY, qubit: int = 1) -> np.ndarray:
    """Shot-averaged chain: Gaussian jitter damps coherences by ``exp(-sigma^2/2)``."""
    r, phase, sigma = compose(cal_in, cal_out)
    damp = np.array([[1.0, np.exp(-sigma ** 2 / 2)], [np.exp(-sigma ** 2 / 2), 1.0]])
    m = _diag_map(r, phase)
    return normalize(on_qubit(rho_in, lambda b: damp * m(b), qubit))


@dataclass(frozen=True)
class CalibrationPreset:
    log_amp_sigma: float
    phase_sigma: float
    jitter_sigma: float
    outlier_prob: float = 0.0


# careful: hand-tuned per cell; fast: quick pass over all 72 cells with occasional bad phase
PRESETS = {
    "careful": CalibrationPreset(log_amp_sigma=0.02, phase_sigma=0.05, jitter_sigma=0.05),
    "fast": CalibrationPreset(log_amp_sigma=0.10, phase_sigma=0.20, jitter_sigma=0.15, outlier_prob=0.05),
}

# interferometer-locking jitter of the shared input converter
INPUT_JITTER = {"careful": 0.10, "fast": 0.30}


def miscalibration_sampler(quality: str, rng: np.random.Generator) -> ConverterCalibration:
    try:
        pre = PRESETS[quality]
    except KeyError:
        raise ValueError(f"unknown calibration quality {quality!r}") from None
    r = float(np.exp(pre.log_amp_sigma * rng.standard_normal()))
    if pre.outlier_prob and rng.random() < pre.outlier_prob:
        phase = float(rng.uniform(-np.pi, np.pi))
    else:
        phase = float(pre.phase_sigma * rng.standard_normal())
    return ConverterCalibration(r, phase, pre.jitter_sigma)


@dataclass
class ConverterBank:
    """Shared input converter plus one read-out calibration per qubit cell."""

    input: ConverterCalibration = IDENTITY
    cells: dict[int, ConverterCalibration] = field(default_factory=dict)

    def output(self, cell: int) -> ConverterCalibration:
        return self.cells.get(cell, IDENTITY)

    @classmethod
    def sample(cls, quality: str, rng: np.random.Generator, n_cells: int = 72,
               input_jitter: float | None = None) -> "ConverterBank":
        jitter = INPUT_JITTER[quality] if input_jitter is None else input_jitter
        cells = {c: miscalibration_sampler(quality, rng) for c in range(1, n_cells + 1)}
        return cls(ConverterCalibration(phase_jitter_sigma=jitter), cells)

    @classmethod
    def ideal(cls) -> "ConverterBank":
        return cls()

    def with_jitter(self, input_jitter: float, cell_jitter: float | None = None) -> "ConverterBank":
        cells = self.cells
        if cell_jitter is not None:
            cells = {c: ConverterCalibration(k.amp_imbalance, k.phase_offset, cell_jitter, k.arm_delay)
                     for c, k in cells.items()}
        inp = ConverterCalibration(self.input.amp_imbalance, self.input.phase_offset, input_jitter,
                                   self.input.arm_delay)
        return ConverterBank(inp, cells)
