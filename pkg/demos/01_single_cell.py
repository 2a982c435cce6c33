"""
Storing one qubit in one cell
=============================

Write a polarization qubit into a single cell, wait, read it back and look at
what the array did to it. Then compare cells across the array.
"""

import numpy as np

from qmemsim.encoding import ConverterBank
from qmemsim.memarray import MemoryArray, PhysicsParams
from qmemsim.qstate import LABELS, fidelity_to_pure, polarization, polarization_to_density

# %% The array: 144 micro-ensembles paired into 72 cells
array = MemoryArray()
g = array.geometry
print("cell 34 uses micro-ensembles", g.pair(34), "driven at", g.aod_frequencies(g.pair(34)[0]), "MHz")
print(f"efficiency of cell 34: {array.eta_cell(34):.4f}, corner cell 1: {array.eta_cell(1):.4f}")

# %% A noiseless array is the identity
rng = np.random.default_rng(0)
ideal = MemoryArray(PhysicsParams.noiseless())
plus = polarization("+")
ideal.write(34, polarization_to_density(plus), 0.0, rng)
out = ideal.read(34, 200.0, rng)
print("noiseless fidelity after 200 us:", fidelity_to_pure(out.rho, plus.ket))

# %% The default model: fidelity of each input state against storage time
times = [0, 100, 200, 300, 400, 500]
for label in LABELS:
    pol = polarization(label)
    row = [fidelity_to_pure(array.read_channel(34, polarization_to_density(pol), t, 0), pol.ket) for t in times]
    print(f"{label}: " + "  ".join(f"{f:.3f}" for f in row))

# %% Crosstalk: every access to a neighbor costs a little fidelity
for ops in (0, 6, 18, 60):
    f = fidelity_to_pure(array.read_channel(34, polarization_to_density(plus), 0.0, ops), plus.ket)
    print(f"{ops:3d} neighbor operations -> F = {f:.4f}")

# %% Across the array, including a carefully calibrated converter bank
from qmemsim.scenarios import probe_fidelity

bank = ConverterBank.sample("careful", np.random.default_rng(1))
params = PhysicsParams()
for cell in (1, 4, 20, 22, 34, 53):
    f = np.mean([probe_fidelity(params, bank, cell, polarization(p), 500.0, 0) for p in LABELS])
    print(f"cell {cell:2d}: 4-polarization average at 500 us = {f:.3f}")
