"""Counter-based random substreams.

Every draw in a simulation comes from a Philox stream keyed by
(master_seed, chunk, block, purpose, cell).  Replications are grouped in
fixed-size chunks, so results never depend on how chunks are scheduled.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {"assignment": 0, "outcomes": 1, "ties": 2, "block_ties": 3}


def substream(master_seed: int, chunk: int, block: int = 0, purpose: str = "outcomes", cell: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(chunk), int(block), PURPOSES[purpose], int(cell)))
    return np.random.Generator(np.random.Philox(ss))
