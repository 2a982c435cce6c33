"""Component efficiency budget for one write-and-read of an optical qubit."""

from __future__ import annotations

import math
from dataclasses import dataclass

ATOMS = "Storage and retrieval in atoms"


@dataclass(frozen=True)
class EfficiencyBudget:
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        for name, eta in self.entries:
            if not 0 < eta <= 1:
                raise ValueError(f"efficiency of {name!r} must lie in (0, 1], got {eta}")

    def replace(self, name: str, eta: float) -> "EfficiencyBudget":
        if name not in dict(self.entries):
            raise KeyError(name)
        return EfficiencyBudget(tuple((n, eta if n == name else e) for n, e in self.entries))


TABLE_I = EfficiencyBudget((
    ("Input fiber coupling", 0.85),
    ("Input encoding converter", 0.51),
    ("Input AOD pair", 0.85),
    (ATOMS, 0.055),
    ("Output AOD pair", 0.85),
    ("Output encoding converter", 0.52),
    ("Output fiber coupling", 0.85),
    ("Three filter etalons", 0.73),
    ("Other optical elements", 0.90),
))


def end_to_end_efficiency(budget: EfficiencyBudget = TABLE_I) -> float:
    if not budget.entries:
        raise ValueError("empty efficiency budget")
    return math.prod(eta for _, eta in budget.entries)


def click_probability(eta_atoms: float, n_bar: float = 0.5, budget: EfficiencyBudget | None = None) -> float:
    """Chance that a weak coherent input of mean photon number ``n_bar`` yields a detection."""
    budget = TABLE_I if budget is None else budget
    eta = end_to_end_efficiency(budget.replace(ATOMS, eta_atoms))
    return 1 - math.exp(-n_bar * eta)
