"""Deterministic random-stream derivation.

All randomness in the package flows through Philox, a counter-based bit
generator, so that results are reproducible across platforms and across
worker counts. Streams are addressed by an integer path: ``substream(seed,
tag, ...)`` always yields the same generator for the same path, and distinct
paths yield statistically independent streams.

Path conventions used elsewhere in the package:

* dataset sampling uses tags ``STRATUM``, ``TREATMENT``, ``NOISE`` under the
  dataset seed;
* fold assignment hashes its own seed directly;
* the Monte Carlo runner derives per-replicate seeds as
  ``child_seed(scenario_seed, replicate_index, purpose)``.
"""

from __future__ import annotations

import numpy as np

STRATUM = 0
TREATMENT = 1
NOISE = 2


def _seed_sequence(*path: int) -> np.random.SeedSequence:
    if any(p < 0 for p in path):
        raise ValueError(f"seed path entries must be non-negative, got {path}")
    return np.random.SeedSequence(list(path))


def substream(*path: int) -> np.random.Generator:
    """Return a Philox generator addressed by the integer path."""
    return np.random.Generator(np.random.Philox(_seed_sequence(*path)))


def child_seed(*path: int) -> int:
    """Hash an integer path into a single derived seed."""
    return int(_seed_sequence(*path).generate_state(1, np.uint64)[0])
