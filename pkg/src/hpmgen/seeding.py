"""Deterministic derivation of child seeds from a master seed.

Every random draw in the pipeline (input-function coefficients, measurement
subsampling, model initialization, epoch shuffling, collocation sampling)
uses a child seed derived from the master seed plus an integer key path.
Derivation goes through numpy's ``SeedSequence`` hash, which is documented
and stable across platforms and numpy versions, so records can be built in
parallel (or resumed) and still match a serial run bit for bit.
"""

from __future__ import annotations

import numpy as np

# Key-path tags; they namespace the derivation tree so independent consumers
# of the same master seed can never collide.
TAG_FUNCTION = 1
TAG_MEASUREMENT = 2
TAG_MODEL_SOLUTION = 3
TAG_MODEL_HIDDEN = 4
TAG_EPOCH_SHUFFLE = 5
TAG_COLLOCATION = 6
TAG_TEST_FUNCTION = 7


def child_seed(*keys: int) -> int:
    """Derive a 32-bit child seed from an integer key path."""
    return int(np.random.SeedSequence(keys).generate_state(1)[0])
