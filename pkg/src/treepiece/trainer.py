"""Vocabulary generation, EM training and placeholder expansion.

The pipeline is ``init_vocab -> generate_vocabulary -> em_train ->
expand_vocab``. All randomness is drawn from generators keyed by
``(seed, ..., skeleton index, draw index)`` and per-skeleton results are
reduced in skeleton order, so results do not depend on ``n_jobs``.
"""
from __future__ import annotations

import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed

from .errors import EmptyCorpus
from .lattice import DEFAULT_MAX_NODES, SubtreeLattice
from .tree import Node, extract_skeleton
from .units import FlatTree
from .vocab import Phase, Vocabulary, normalize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    num_merges: int = 600
    em_max_iters: int = 30
    em_epsilon: float = 0.01
    expand_samples: int = 10
    expand_theta: float = 0.15
    seed: int = 0
    max_nodes: int = DEFAULT_MAX_NODES
    n_jobs: int = 1


class StopReason(enum.Enum):
    MAX_ITERS = "max_iters"
    CONVERGED = "converged"


@dataclass
class EmTrace:
    """Corpus log-likelihood of every simplex visited, starting with the
    initial one; ``iterations`` counts M-steps."""

    log_likelihoods: list[float] = field(default_factory=list)
    iterations: int = 0
    stop_reason: StopReason = StopReason.MAX_ITERS

    def is_monotone(self, slack: float = 1e-9) -> bool:
        ll = self.log_likelihoods
        return all(b >= a - slack for a, b in zip(ll, ll[1:]))


def _skeletons(corpus) -> list[Node]:
    skeletons = getattr(corpus, "skeletons", corpus)
    skeletons = [extract_skeleton(s) for s in skeletons]
    if not skeletons:
        raise EmptyCorpus("corpus has no skeletons")
    return skeletons


class LatticeCache:
    """Lattices keyed by skeleton; duplicates in a corpus share one."""

    def __init__(self, max_nodes: int = DEFAULT_MAX_NODES):
        self.max_nodes = max_nodes
        self._cache: dict[str, SubtreeLattice] = {}

    def get(self, skeleton: Node) -> SubtreeLattice:
        key = skeleton.serialize()
        lattice = self._cache.get(key)
        if lattice is None:
            lattice = self._cache[key] = SubtreeLattice(skeleton, self.max_nodes)
        return lattice


def _map_ordered(fn: Callable, chunks: Sequence, n_jobs: int) -> list:
    if n_jobs == 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(c) for c in chunks)


def _chunks(n: int, n_jobs: int) -> list[range]:
    if n_jobs == 1:
        return [range(n)]
    size = max(1, math.ceil(n / (4 * max(n_jobs, 1))))
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


# -- vocabulary generation --------------------------------------------------


def init_vocab(corpus) -> Vocabulary:
    """Single-ontology units with their occurrence counts."""
    counts: Counter[str] = Counter()
    for skeleton in _skeletons(corpus):
        for node in skeleton.preorder():
            counts[Node(node.label).serialize()] += 1
    return Vocabulary(dict(sorted(counts.items())), phase=Phase.BARE)


class _MergeState:
    """Current units of one skeleton during pair merging.

    Units are named by the pre-order index of their root. The contact of a
    non-root unit ``c`` is with the unit holding ``parent(c)``.
    """

    def __init__(self, skeleton: Node):
        self.flat = FlatTree(skeleton)
        self.owner = list(range(self.flat.size))
        self.mask = {v: 1 << v for v in range(self.flat.size)}

    def contact_key(self, c: int) -> str:
        host = self.owner[self.flat.parent[c]]
        merged = self.mask[host] | self.mask[c]
        return self.flat.render(merged, False, host)

    def contacts(self) -> dict[int, str]:
        return {c: self.contact_key(c) for c in self.mask if c != 0}

    def merge(self, c: int) -> int:
        host = self.owner[self.flat.parent[c]]
        for v in range(self.flat.size):
            if self.mask[c] >> v & 1:
                self.owner[v] = host
        self.mask[host] |= self.mask.pop(c)
        return host

    def touching(self, unit: int) -> list[int]:
        """Unit roots whose contact involves ``unit``."""
        out = [c for c in self.mask if c != 0 and self.owner[self.flat.parent[c]] == unit]
        if unit != 0:
            out.append(unit)
        return out


def generate_vocabulary(corpus, config: TrainConfig = TrainConfig()) -> Vocabulary:
    """Grow the vocabulary by repeatedly merging the most frequent adjacent
    unit pair, BPE style.

    A pair is identified by the bare shape of the merged unit. Each round
    merges all non-overlapping occurrences of the winner, in corpus order
    and pre-order of the lower unit. Stops after ``config.num_merges`` new
    units or when no pair occurs at least twice.
    """
    vocab = init_vocab(corpus)
    freq = dict(vocab.freq)
    states = [_MergeState(s) for s in _skeletons(corpus)]
    counts: Counter[str] = Counter()
    where: dict[str, set[tuple[int, int]]] = {}
    current: list[dict[int, str]] = []
    for s, state in enumerate(states):
        contacts = state.contacts()
        current.append(contacts)
        for c, key in contacts.items():
            counts[key] += 1
            where.setdefault(key, set()).add((s, c))

    def drop(s: int, c: int):
        key = current[s].pop(c)
        counts[key] -= 1
        if not counts[key]:
            del counts[key]
        where[key].discard((s, c))

    def add(s: int, c: int):
        key = states[s].contact_key(c)
        current[s][c] = key
        counts[key] += 1
        where.setdefault(key, set()).add((s, c))

    added = 0
    while added < config.num_merges and counts:
        best, n_best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if n_best < 2:
            break
        consumed: set[tuple[int, int]] = set()
        for s, c in sorted(where[best]):
            state = states[s]
            host = state.owner[state.flat.parent[c]]
            if (s, c) in consumed or (s, host) in consumed:
                continue
            for u in set(state.touching(c)) | set(state.touching(host)):
                drop(s, u)
            host = state.merge(c)
            consumed.update({(s, c), (s, host)})
            for u in state.touching(host):
                add(s, u)
        if best in freq:
            # the same shape can re-emerge through a different merge order
            freq[best] += n_best
        else:
            freq[best] = n_best
            added += 1
        log.debug("merge %d: %s (n=%d)", added, best, n_best)
    return Vocabulary(dict(sorted(freq.items())), phase=Phase.BARE)


# -- EM -----------------------------------------------------------------------


def _estep_one(lattice: SubtreeLattice, vocab: Vocabulary, sampled, seed: int, iteration: int, i: int):
    if sampled is None:
        r = lattice.viterbi_tokenize(vocab)
        return r.log_probability, [(k, 1) for k in r.keys]
    samples, theta = sampled
    sampler = lattice.sampler(vocab, theta)
    counts: Counter[str] = Counter()
    for k in range(samples):
        counts.update(sampler.draw(np.random.default_rng((seed, iteration, i, k))).keys)
    return math.log(sampler.marginal), sorted(counts.items())


def _estep_chunk(skeletons, vocab, sampled, seed, iteration, max_nodes, indices):
    cache = LatticeCache(max_nodes)
    return [_estep_one(cache.get(skeletons[i]), vocab, sampled, seed, iteration, i) for i in indices]


def _e_step(skeletons, vocab, config, sampled, iteration, cache):
    """Corpus log-likelihood and (expected) unit counts under ``vocab``."""
    n = len(skeletons)
    if config.n_jobs == 1:
        results = [_estep_one(cache.get(skeletons[i]), vocab, sampled, config.seed, iteration, i) for i in range(n)]
    else:
        fn = partial(_estep_chunk, skeletons, vocab, sampled, config.seed, iteration, config.max_nodes)
        results = [r for chunk in _map_ordered(fn, _chunks(n, config.n_jobs), config.n_jobs) for r in chunk]

    total = 0.0
    freq = dict.fromkeys(vocab.freq, 0)
    scale = sampled[0] if sampled else 1
    for log_p, units in results:
        total += log_p
        for key, c in units:
            freq[key] += c
    if scale != 1:
        freq = {k: c / scale for k, c in freq.items()}
    return total, freq


def _em(corpus, vocab: Vocabulary, config: TrainConfig, sampled=None) -> tuple[Vocabulary, EmTrace]:
    skeletons = _skeletons(corpus)
    trace = EmTrace()
    if config.em_max_iters <= 0:
        return vocab, trace
    cache = LatticeCache(config.max_nodes)
    prev_ll, freq = _e_step(skeletons, vocab, config, sampled, 0, cache)
    trace.log_likelihoods.append(prev_ll)
    while trace.iterations < config.em_max_iters:
        # M-step
        vocab = Vocabulary(freq, normalize(freq), vocab.phase)
        trace.iterations += 1
        curr_ll, freq = _e_step(skeletons, vocab, config, sampled, trace.iterations, cache)
        trace.log_likelihoods.append(curr_ll)
        log.info("EM iteration %d: log-likelihood %.6f", trace.iterations, curr_ll)
        if curr_ll - prev_ll <= config.em_epsilon:
            trace.stop_reason = StopReason.CONVERGED
            break
        prev_ll = curr_ll
    return vocab, trace


def em_train(corpus, vocab: Vocabulary, config: TrainConfig = TrainConfig()) -> tuple[Vocabulary, EmTrace]:
    """EM over the simplex with the Viterbi partition as the E-step.

    Each iteration re-estimates the simplex from unit counts in the current
    Viterbi partitions, then evaluates the corpus log-likelihood under the
    new simplex; training stops once that gain is at most ``em_epsilon`` or
    after ``em_max_iters`` M-steps. Units that drop out of every partition
    keep their entry with probability 0.
    """
    return _em(corpus, vocab, config)


def em_train_sampled(
    corpus,
    vocab: Vocabulary,
    config: TrainConfig = TrainConfig(),
    samples_per_skeleton: int = 10,
    theta: float = 1.0,
) -> tuple[Vocabulary, EmTrace]:
    """EM with unit counts averaged over FFBS draws.

    The log-likelihood uses the full forward marginal of each skeleton.
    Monotonicity is not guaranteed.
    """
    if samples_per_skeleton < 1:
        raise ValueError("samples_per_skeleton must be positive")
    return _em(corpus, vocab, config, sampled=(samples_per_skeleton, theta))


# -- placeholder expansion ----------------------------------------------------


def _expand_one(lattice, vocab, theta, samples, seed, i):
    if samples == 0:
        units = lattice.viterbi_tokenize(vocab).units
        return sorted(Counter(u.serialize() for u in units).items())
    sampler = lattice.sampler(vocab, theta)
    counts: Counter[str] = Counter()
    for k in range(samples):
        r = sampler.draw(np.random.default_rng((seed, i, k)))
        counts.update(u.serialize() for u in r.units)
    return sorted(counts.items())


def _expand_chunk(skeletons, vocab, theta, samples, seed, max_nodes, indices):
    cache = LatticeCache(max_nodes)
    return [_expand_one(cache.get(skeletons[i]), vocab, theta, samples, seed, i) for i in indices]


def expand_vocab(corpus, vocab: Vocabulary, config: TrainConfig = TrainConfig()) -> Vocabulary:
    """Decorated vocabulary built from ``expand_samples`` FFBS tokenizations
    of every training skeleton at ``expand_theta``.

    Only units actually emitted are kept; frequencies are emission counts.
    ``expand_samples=0`` uses the single Viterbi partition instead of
    sampling.
    """
    skeletons = _skeletons(corpus)
    n = len(skeletons)
    theta, samples, seed = config.expand_theta, config.expand_samples, config.seed
    if config.n_jobs == 1:
        cache = LatticeCache(config.max_nodes)
        results = [_expand_one(cache.get(skeletons[i]), vocab, theta, samples, seed, i) for i in range(n)]
    else:
        fn = partial(_expand_chunk, skeletons, vocab, theta, samples, seed, config.max_nodes)
        results = [r for chunk in _map_ordered(fn, _chunks(n, config.n_jobs), config.n_jobs) for r in chunk]
    freq: Counter[str] = Counter()
    for counts in results:
        for key, c in counts:
            freq[key] += c
    return Vocabulary(dict(sorted(freq.items())), phase=Phase.DECORATED)


@dataclass
class TrainReport:
    initial_size: int
    merged_size: int
    trace: EmTrace
    expanded_size: int | None


def train(corpus, config: TrainConfig = TrainConfig(), expand: bool = True) -> tuple[Vocabulary, TrainReport]:
    """Full pipeline: initial units, merges, EM, then expansion."""
    initial = init_vocab(corpus)
    merged = generate_vocabulary(corpus, config)
    vocab, trace = em_train(corpus, merged, config)
    if expand:
        vocab = expand_vocab(corpus, vocab, config)
    return vocab, TrainReport(len(initial), len(merged), trace, len(vocab) if expand else None)
