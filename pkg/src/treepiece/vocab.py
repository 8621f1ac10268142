"""Vocabulary of tree-piece units with a probability simplex."""
from __future__ import annotations

import enum
import math
from typing import Iterator, Mapping

from .tree import PLACEHOLDER_TOKEN, Node, parse_unit

SIMPLEX_TOLERANCE = 1e-9


class Phase(enum.Enum):
    BARE = "bare"
    DECORATED = "decorated"


class Vocabulary:
    """Units keyed by canonical string, with frequencies and probabilities.

    In the bare phase tokenization looks units up by their bare shape; in the
    decorated phase by the shape with placeholders at detached children.
    """

    def __init__(
        self,
        freq: Mapping[str, float],
        simplex: Mapping[str, float] | None = None,
        phase: Phase | None = None,
    ):
        if not freq:
            raise ValueError("a vocabulary needs at least one unit")
        self.freq = dict(freq)
        if simplex is None:
            simplex = normalize(self.freq)
        self.simplex = dict(simplex)
        if phase is None:
            phase = Phase.DECORATED if any(PLACEHOLDER_TOKEN in k for k in self.freq) else Phase.BARE
        self.phase = phase
        self._check()
        self._logp = {k: math.log(p) for k, p in self.simplex.items() if p > 0}

    def _check(self):
        if self.simplex.keys() != self.freq.keys():
            raise ValueError("simplex and frequency maps have different domains")
        if any(p < 0 for p in self.simplex.values()):
            raise ValueError("negative probability in simplex")
        if any(f < 0 for f in self.freq.values()):
            raise ValueError("negative frequency")
        total = math.fsum(self.simplex.values())
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise ValueError(f"simplex sums to {total!r}")
        if self.phase is Phase.BARE and any(PLACEHOLDER_TOKEN in k for k in self.freq):
            raise ValueError("bare-phase vocabulary contains placeholder units")

    @property
    def decorated(self) -> bool:
        return self.phase is Phase.DECORATED

    def __len__(self):
        return len(self.freq)

    def __contains__(self, key: str):
        return key in self.freq

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.freq))

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.phase is other.phase and self.freq == other.freq and self.simplex == other.simplex

    def __repr__(self):
        return f"Vocabulary({len(self)} units, phase={self.phase.value})"

    def prob(self, key: str) -> float:
        return self.simplex.get(key, 0.0)

    def log_prob(self, key: str) -> float:
        """Natural log probability; ``-inf`` for unknown or zero-probability units."""
        return self._logp.get(key, -math.inf)

    def units(self) -> list[Node]:
        return [parse_unit(k) for k in self]


def normalize(freq: Mapping[str, float]) -> dict[str, float]:
    total = math.fsum(freq.values())
    if total <= 0:
        raise ValueError("frequencies sum to zero")
    return {k: f / total for k, f in freq.items()}
