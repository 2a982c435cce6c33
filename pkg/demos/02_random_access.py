"""
Random access with a scrolling window
=====================================

Generate a random write/read program, check it, run it on the array and
summarize the trace: filling number, accesses per cell, storage times and
fidelities per input polarization.
"""

import numpy as np

from qmemsim.controller import format_sequence, generate_random_sequence, run_sequence, validate_sequence
from qmemsim.encoding import ConverterBank
from qmemsim.memarray import MemoryArray
from qmemsim.metrics import compute_metrics

rng = np.random.default_rng(7)

# %% A 250-instruction program, no window
seq = generate_random_sequence(250, rng)
print(format_sequence(seq[:8]), "...")
print("violations:", validate_sequence(seq))

# %% Run it with a fast-calibrated converter bank; fidelities are postselected on detection
bank = ConverterBank.sample("fast", rng)
trace = run_sequence(seq, MemoryArray(postselect=True), bank, rng)
rep = compute_metrics(trace)
print(f"writes {rep.n_writes}, reads {rep.n_reads}, final filling {rep.final_filling}")
print(f"mean accesses per cell {rep.mean_access_all:.2f} (visited cells only: {rep.mean_access_visited:.2f})")
print(f"mean storage time {rep.mean_storage_time:.1f} us, longest {rep.max_storage_time:.0f} us")
for p, v in rep.fidelity_by_pol.items():
    print(f"  {p}: F = {v['mean']:.3f} +/- {v['std']:.3f} over {v['n']} reads")
print("reads below the 2/3 threshold:", len(rep.below_threshold))

# a coarse picture of the filling number
for i in range(0, 250, 25):
    print(f"slot {i:3d} |" + "#" * rep.filling[i])

# %% 1000 instructions with the 500 us window: expiring qubits are read out first
long_seq = generate_random_sequence(1000, rng, window_us=500.0)
forced = sum(i.forced for i in long_seq)
print(f"forced reads: {forced} of {len(long_seq)} ({100 * forced / len(long_seq):.2f} %)")
print("window respected:", validate_sequence(long_seq, window_us=500.0) == [])

# %% Filling statistics over many seeds
tails = []
for seed in range(200):
    s = generate_random_sequence(250, np.random.default_rng(seed))
    fill = np.cumsum([1 if i.op.value == "W" else -1 for i in s])
    tails.append(fill[50:].mean())
print(f"time-averaged filling after slot 50: {np.mean(tails):.1f} (chain fixed point 36)")
