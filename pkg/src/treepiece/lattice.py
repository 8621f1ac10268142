"""Subtree lattices and the Viterbi / FFBS tokenizers.

Every state of the lattice is a connected subtree of the skeleton that
contains its root, stored as a bitmask over pre-order node indices. The
empty mask plays the role of the BOS state. A transition ``t' -> t`` adds
one unit ``t - t'``.

Each partition of a skeleton can be built up in many unit orders, which
would make forward sums count it several times. Transitions are therefore
restricted to adding units in pre-order of their roots: the unit added to
``t'`` must be rooted at the earliest node (pre-order) that hangs off
``t'``. For a unit rooted at ``v`` this is equivalent to ``v`` preceding
every node that hangs off ``t``, which only depends on ``t``. That gives
one path per partition, so the Viterbi max is unchanged, the forward sum is
exactly the sum over partitions and backward sampling at ``theta = 1``
draws partitions from the normalized product-weight distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import OovSkeleton, SkeletonTooLarge
from .tree import Node, extract_skeleton
from .units import FlatTree, Partition
from .vocab import Vocabulary

DEFAULT_MAX_NODES = 24
BRUTE_FORCE_MAX_NODES = 10
BOS = 0

# (previous state, added unit mask, added unit root)
Transition = tuple[int, int, int]


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


@dataclass
class TokenizationResult:
    partition: Partition
    probability: float
    keys: list[str]  # vocabulary keys of the units, in partition order
    components: list[int]  # node masks of the units, in partition order
    log_probability: float
    marginal: float | None = None  # sum over all partitions (FFBS only)

    @property
    def units(self) -> tuple[Node, ...]:
        return self.partition.units


class SubtreeLattice:
    """All root-containing subtrees of a skeleton, graded by depth.

    The structure (states, admissible transitions, unit keys) depends only on
    the skeleton, so one lattice can be scored against many vocabularies.
    """

    def __init__(self, skeleton: Node, max_nodes: int = DEFAULT_MAX_NODES):
        skeleton = extract_skeleton(skeleton)
        if skeleton.node_count > max_nodes:
            raise SkeletonTooLarge(f"skeleton has {skeleton.node_count} nodes, cap is {max_nodes}")
        self.source = skeleton
        self.flat = FlatTree(skeleton)
        self.depth: dict[int, int] = {}
        for mask, depth in self._rooted(0):
            self.depth[mask] = depth
        self.d_max = skeleton.depth
        self.graded: dict[int, list[int]] = {d: [] for d in range(1, self.d_max + 1)}
        for mask in sorted(self.depth, key=lambda m: (_popcount(m), m)):
            self.graded[self.depth[mask]].append(mask)
        # depth-major, then size; every strict subset comes first
        self.subtrees: list[int] = [m for d in sorted(self.graded) for m in self.graded[d]]
        self._keys: dict[tuple[int, bool], str] = {}

    def _rooted(self, v: int) -> list[tuple[int, int]]:
        combos = [(1 << v, 1)]
        for c in self.flat.children[v]:
            options = [(0, 0)] + self._rooted(c)
            combos = [(m | sm, max(d, sd + 1)) for m, d in combos for sm, sd in options]
        return combos

    def __len__(self):
        return len(self.subtrees)

    @property
    def full(self) -> int:
        return self.flat.full

    @cached_property
    def transitions(self) -> dict[int, list[Transition]]:
        flat = self.flat
        out: dict[int, list[Transition]] = {}
        for t in self.subtrees:
            hanging = [v for v in range(1, flat.size) if not t >> v & 1 and t >> flat.parent[v] & 1]
            limit = hanging[0] if hanging else flat.size
            moves = [(BOS, t, 0)]
            for v in range(1, limit):
                if t >> v & 1:
                    sub = flat.subtree[v]
                    moves.append((t & ~sub, t & sub, v))
            out[t] = moves
        return out

    def key(self, mask: int, root: int, decorated: bool) -> str:
        """Vocabulary key of a unit; placeholders are placed against the full
        skeleton."""
        k = (mask, decorated)
        if k not in self._keys:
            self._keys[k] = self.flat.render(mask, decorated, root)
        return self._keys[k]

    # -- scoring -----------------------------------------------------------

    def viterbi(self, vocab: Vocabulary) -> tuple[dict[int, float], dict[int, Transition]]:
        """Forward max pass: log scores and back pointers per state."""
        decorated = vocab.decorated
        log_score = {BOS: 0.0}
        back: dict[int, Transition] = {}
        for t in self.subtrees:
            best = -math.inf
            best_key = None
            best_move = None
            for move in self.transitions[t]:
                prev, delta, root = move
                base = log_score[prev]
                if base == -math.inf:
                    continue
                key = self.key(delta, root, decorated)
                lp = vocab.log_prob(key)
                if lp == -math.inf:
                    continue
                cand = base + lp
                if cand > best or (cand == best and key < best_key):
                    best, best_key, best_move = cand, key, move
            log_score[t] = best
            if best_move is not None:
                back[t] = best_move
        return log_score, back

    def forward(self, vocab: Vocabulary) -> tuple[dict[int, float], dict[int, list[tuple[int, int, int, float]]]]:
        """Forward sum pass: marginals and positive pair weights per state."""
        decorated = vocab.decorated
        marginal = {BOS: 1.0}
        pairs: dict[int, list[tuple[int, int, int, float]]] = {}
        for t in self.subtrees:
            total = 0.0
            support = []
            for prev, delta, root in self.transitions[t]:
                q = marginal[prev]
                if q == 0.0:
                    continue
                p = vocab.prob(self.key(delta, root, decorated))
                if p <= 0.0:
                    continue
                weight = q * p
                total += weight
                support.append((prev, delta, root, weight))
            marginal[t] = total
            pairs[t] = support
        return marginal, pairs

    def _result(self, vocab: Vocabulary, steps: Sequence[tuple[int, int]], marginal=None) -> TokenizationResult:
        # steps arrive last unit first
        steps = list(reversed(steps))
        keys = [self.key(delta, root, vocab.decorated) for delta, root in steps]
        masks = [delta for delta, _ in steps]
        log_p = 0.0
        for k in keys:
            log_p += vocab.log_prob(k)
        return TokenizationResult(
            partition=Partition.from_components(self.flat, masks),
            probability=math.exp(log_p),
            keys=keys,
            components=masks,
            log_probability=log_p,
            marginal=marginal,
        )

    def viterbi_tokenize(self, vocab: Vocabulary) -> TokenizationResult:
        log_score, back = self.viterbi(vocab)
        if log_score[self.full] == -math.inf:
            raise OovSkeleton(f"no in-vocabulary partition of {self.source.serialize()}")
        steps = []
        t = self.full
        while t != BOS:
            prev, delta, root = back[t]
            steps.append((delta, root))
            t = prev
        result = self._result(vocab, steps)
        # same float operations as the forward pass, in the same order
        result.log_probability = log_score[self.full]
        result.probability = math.exp(result.log_probability)
        return result

    def sampler(self, vocab: Vocabulary, theta: float) -> "FfbsSampler":
        return FfbsSampler(self, vocab, theta)


class FfbsSampler:
    """Backward sampler over one forward pass; draw repeatedly with
    different generators."""

    def __init__(self, lattice: SubtreeLattice, vocab: Vocabulary, theta: float):
        if not theta > 0:
            raise ValueError(f"theta must be positive, got {theta!r}")
        self.lattice = lattice
        self.vocab = vocab
        self.theta = theta
        self.marginal_table, pairs = lattice.forward(vocab)
        self.marginal = self.marginal_table[lattice.full]
        if self.marginal == 0.0:
            raise OovSkeleton(f"no in-vocabulary partition of {lattice.source.serialize()}")
        self._choices: dict[int, tuple[list[tuple[int, int, int]], list[float]]] = {}
        for t, support in pairs.items():
            if not support:
                continue
            logs = [theta * math.log(w) for *_, w in support]
            top = max(logs)
            cumulative = np.cumsum([math.exp(x - top) for x in logs]).tolist()
            self._choices[t] = ([s[:3] for s in support], cumulative)

    def draw(self, rng: np.random.Generator) -> TokenizationResult:
        steps = []
        t = self.lattice.full
        while t != BOS:
            moves, cumulative = self._choices[t]
            u = rng.random() * cumulative[-1]
            i = int(np.searchsorted(cumulative, u, side="right"))
            prev, delta, root = moves[min(i, len(moves) - 1)]
            steps.append((delta, root))
            t = prev
        return self.lattice._result(self.vocab, steps, marginal=self.marginal)


def enumerate_subtrees(skeleton: Node, max_nodes: int = DEFAULT_MAX_NODES) -> SubtreeLattice:
    return SubtreeLattice(skeleton, max_nodes)


def viterbi_tokenize(skeleton: Node, vocab: Vocabulary, max_nodes: int = DEFAULT_MAX_NODES) -> TokenizationResult:
    """Most probable partition of ``skeleton`` under ``vocab``.

    Raises :class:`OovSkeleton` when no partition uses only units with
    positive probability.
    """
    return SubtreeLattice(skeleton, max_nodes).viterbi_tokenize(vocab)


def ffbs_tokenize(
    skeleton: Node,
    vocab: Vocabulary,
    theta: float,
    rng_seed,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> TokenizationResult:
    """Sample a partition by forward filtering, backward sampling.

    ``theta`` sharpens (large) or flattens (small) the per-step predecessor
    distribution. ``rng_seed`` is anything :func:`numpy.random.default_rng`
    accepts, typically an int or a tuple of ints.
    """
    sampler = SubtreeLattice(skeleton, max_nodes).sampler(vocab, theta)
    return sampler.draw(np.random.default_rng(rng_seed))


@dataclass
class BruteForceResult:
    best: TokenizationResult | None
    total_probability: float
    all_partitions: list[TokenizationResult]


def brute_force_tokenize(skeleton: Node, vocab: Vocabulary) -> BruteForceResult:
    """Enumerate every partition by cutting every subset of edges.

    Partitions containing a unit that is missing from ``vocab`` or has zero
    probability are dropped. The best partition maximizes the pre-order log
    sum; ties go to the lexicographically smallest tab-joined key sequence.
    """
    flat = FlatTree(skeleton)
    if flat.size > BRUTE_FORCE_MAX_NODES:
        raise SkeletonTooLarge(f"brute force is capped at {BRUTE_FORCE_MAX_NODES} nodes")
    decorated = vocab.decorated
    found = []
    for cuts in range(1 << len(flat.edges)):
        owner = [0] * flat.size
        for e, (parent, child) in enumerate(flat.edges):
            owner[child] = child if cuts >> e & 1 else owner[parent]
        masks: dict[int, int] = {}
        for v, r in enumerate(owner):
            masks[r] = masks.get(r, 0) | (1 << v)
        roots = sorted(masks)
        keys = [flat.build(masks[r], decorated, r).serialize() for r in roots]
        if any(vocab.prob(k) <= 0 for k in keys):
            continue
        log_p = 0.0
        weight = 1.0
        for k in keys:
            log_p += math.log(vocab.prob(k))
            weight *= vocab.prob(k)
        comps = [masks[r] for r in roots]
        found.append(
            TokenizationResult(
                partition=Partition.from_components(flat, comps),
                probability=weight,
                keys=keys,
                components=comps,
                log_probability=log_p,
            )
        )
    total = math.fsum(r.probability for r in found)
    best = None
    if found:
        best = min(found, key=lambda r: (-r.log_probability, "\t".join(r.keys)))
    return BruteForceResult(best, total, found)
