import random
from pathlib import Path

from hypothesis import strategies as st

from treepiece import Kind, Label, Node, Phase, Vocabulary

from oracles import canonical, flatten, is_connected

FIXTURES = Path(__file__).parent / "fixtures"

INTENTS = ["A", "B"]
SLOTS = ["X", "Y", "Z"]


def build_tree(parents, names):
    """Tree from a parent array (pre-order: parent[i] < i) and node names."""
    kids = {i: [] for i in range(len(parents))}
    for i, p in enumerate(parents):
        if p >= 0:
            kids[p].append(i)

    def make(i):
        kind = Kind.INTENT if i == 0 or names[i] in INTENTS else Kind.SLOT
        return Node(Label(kind, names[i]), tuple(make(c) for c in kids[i]))

    return make(0)


@st.composite
def skeletons(draw, max_nodes=8):
    n = draw(st.integers(1, max_nodes))
    # attaching each new node to the current rightmost path keeps the
    # numbering in pre-order
    path = [0]
    fixed = [-1]
    for i in range(1, n):
        depth = draw(st.integers(0, len(path) - 1))
        del path[depth + 1:]
        fixed.append(path[depth])
        path.append(i)
    names = [draw(st.sampled_from(INTENTS))] + [draw(st.sampled_from(INTENTS + SLOTS)) for _ in range(1, n)]
    return build_tree(fixed, names)


def random_skeleton(rng, max_nodes=8):
    n = rng.randint(1, max_nodes)
    path = [0]
    parents = [-1]
    for i in range(1, n):
        depth = rng.randint(0, len(path) - 1)
        del path[depth + 1:]
        parents.append(path[depth])
        path.append(i)
    names = [rng.choice(INTENTS)] + [rng.choice(INTENTS + SLOTS) for _ in range(1, n)]
    return build_tree(parents, names)


def connected_sets(skeleton):
    """Every connected node set of the skeleton (any root)."""
    labels, parent = flatten(skeleton)
    n = len(labels)
    out = []
    for mask in range(1, 1 << n):
        nodes = {v for v in range(n) if mask >> v & 1}
        if is_connected(nodes, parent):
            out.append(nodes)
    return labels, parent, out


def random_vocab(rng, skeleton, decorated=None, keep=0.6, extra=2):
    """Random simplex over a random subset of the skeleton's own units."""
    if decorated is None:
        decorated = rng.random() < 0.5
    labels, parent, sets = connected_sets(skeleton)
    keys = {canonical(labels, parent, s, decorated) for s in sets if rng.random() < keep}
    keys.add(canonical(labels, parent, {0}, decorated))
    for _ in range(extra):
        keys.add(f"[sl:{rng.choice(SLOTS)} {'<ph> ' if decorated else ''}]")
    if decorated:
        keys.add("[in:A <ph> ]")
    weights = {k: rng.choice([rng.random(), rng.randint(1, 4)]) for k in sorted(keys)}
    return Vocabulary(weights, phase=Phase.DECORATED if decorated else Phase.BARE)


def random_em_fixture(seed):
    """Small random corpus plus a vocabulary holding every singleton, so
    nothing is OOV."""
    rng = rng_for(seed)
    corpus = [random_skeleton(rng, 7) for _ in range(rng.randint(1, 8))]
    decorated = rng.random() < 0.5
    weights = {}
    for skel in corpus:
        labels, parent = flatten(skel)
        n = len(labels)
        for v in range(n):
            weights[canonical(labels, parent, {v}, decorated)] = rng.random() + 0.01
        for _ in range(3):
            # random connected sets grown from a random node
            nodes = {rng.randrange(n)}
            for _ in range(rng.randint(0, 3)):
                grow = [c for c in range(n) if parent[c] in nodes and c not in nodes]
                if grow:
                    nodes.add(rng.choice(grow))
            weights[canonical(labels, parent, nodes, decorated)] = rng.random() * 3
    phase = Phase.DECORATED if decorated else Phase.BARE
    return corpus, Vocabulary(dict(sorted(weights.items())), phase=phase)


def rng_for(seed):
    return random.Random(seed)
