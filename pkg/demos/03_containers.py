"""
Queue, stack and buffer
=======================

The same array programmed as three classic containers.
"""

import numpy as np

from qmemsim.controller import (
    SLOT_US, Op, buffer_policy, general_container_sequence, queue_policy, random_arrivals, run_sequence,
    stack_policy,
)
from qmemsim.encoding import ConverterBank
from qmemsim.memarray import MemoryArray
from qmemsim.metrics import compute_metrics

rng = np.random.default_rng(3)
bank = ConverterBank.sample("fast", rng)


def show(name, seq):
    rep = compute_metrics(run_sequence(seq, MemoryArray(postselect=True), bank, rng))
    times = sorted(set(rep.storage_times))
    print(f"{name}: {len(seq)} instructions, storage times {times[0]:.0f}..{times[-1]:.0f} us "
          f"({len(times)} distinct), mean F {rep.mean_fidelity:.3f}, below threshold {len(rep.below_threshold)}")
    return rep


# %% FIFO: every qubit waits exactly 72 slots
show("queue", queue_policy(72, rng=rng))

# %% LIFO: storage times spread evenly from 2 to 286 us
show("stack", stack_policy(72, rng=rng))

# %% Buffer: sparse arrivals over 356 us, then one 144 us flush in a random order
arrivals = random_arrivals(72, int(356 / SLOT_US), rng)
flush = [int(c) for c in rng.permutation(np.arange(1, 73))]
rep = show("buffer", buffer_policy(arrivals, flush, rng=rng))
print("filling every 25 slots:", rep.filling[::25])

# %% Interleaved containers: input or output chosen by a coin flip each clock
for kind in ("queue", "stack"):
    seq = general_container_sequence(kind, 72, rng)
    out = [i.cell for i in seq if i.op is Op.READ]
    print(f"general {kind}: first ten outputs {out[:10]}")
    show(f"general {kind}", seq)
