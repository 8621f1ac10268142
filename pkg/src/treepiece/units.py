"""Tree-piece units: canonical form, merging, decoration and assembly.

A unit is a :class:`~treepiece.tree.Node` without utterance leaves. A
*bare* unit has no placeholders; a *decorated* unit carries a placeholder at
every child position where another unit attaches. Units are identified by
their canonical serialization, e.g. ``[in:A [sl:B ] <ph> ]``.

Node sets within a skeleton are handled as bitmasks over pre-order indices
(see :class:`FlatTree`).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    DisconnectedComponent,
    EmptyInput,
    InvalidAttachPosition,
    InvalidPartition,
    NoOpenPlaceholder,
    RootNotIntent,
    UnfilledPlaceholders,
)
from .tree import PLACEHOLDER, PLACEHOLDER_TOKEN, Node, extract_skeleton


def canonicalize(unit: Node) -> str:
    return unit.serialize()


def is_decorated(unit: Node) -> bool:
    return unit.placeholder_count > 0


def strip_placeholders(unit: Node) -> Node:
    return Node(unit.label, tuple(strip_placeholders(c) for c in unit.ontology_children()))


class FlatTree:
    """Pre-order indexed view of a skeleton.

    ``parent[0] == -1``; ``subtree[v]`` is the bitmask of ``v`` and all of its
    descendants.
    """

    def __init__(self, skeleton: Node):
        skeleton = extract_skeleton(skeleton)
        self.skeleton = skeleton
        self.labels: list[str] = []
        self.parent: list[int] = []
        self.children: list[list[int]] = []

        def visit(node: Node, parent: int) -> int:
            index = len(self.labels)
            self.labels.append(str(node.label))
            self.parent.append(parent)
            self.children.append([])
            if parent >= 0:
                self.children[parent].append(index)
            for child in node.ontology_children():
                visit(child, index)
            return index

        visit(skeleton, -1)
        self.size = len(self.labels)
        self.full = (1 << self.size) - 1
        self.subtree = [0] * self.size
        for v in reversed(range(self.size)):
            mask = 1 << v
            for c in self.children[v]:
                mask |= self.subtree[c]
            self.subtree[v] = mask
        self.edges = [(self.parent[v], v) for v in range(1, self.size)]

    def component_root(self, mask: int) -> int:
        """Return the unique node of ``mask`` whose parent lies outside it."""
        if not mask or mask & ~self.full:
            raise DisconnectedComponent("component must be a non-empty node set of the skeleton")
        roots = [v for v in _bits(mask) if self.parent[v] < 0 or not mask >> self.parent[v] & 1]
        if len(roots) != 1:
            raise DisconnectedComponent(f"node set {sorted(_bits(mask))} is not connected")
        return roots[0]

    def render(self, mask: int, placeholders: bool, root: int | None = None) -> str:
        """Canonical string of the component ``mask``."""
        if root is None:
            root = self.component_root(mask)
        parts: list[str] = []
        stack: list = [root]
        while stack:
            item = stack.pop()
            if isinstance(item, str):
                parts.append(item)
                continue
            parts.append("[" + self.labels[item])
            stack.append("]")
            for c in reversed(self.children[item]):
                if mask >> c & 1:
                    stack.append(c)
                elif placeholders:
                    stack.append(PLACEHOLDER_TOKEN)
        return " ".join(parts)

    def build(self, mask: int, placeholders: bool, root: int | None = None) -> Node:
        if root is None:
            root = self.component_root(mask)
        source = list(self.skeleton.preorder())

        def make(v: int) -> Node:
            kids = []
            for c in self.children[v]:
                if mask >> c & 1:
                    kids.append(make(c))
                elif placeholders:
                    kids.append(PLACEHOLDER)
            return Node(source[v].label, tuple(kids))

        return make(root)

    def frontier(self, mask: int) -> list[int]:
        """Nodes outside ``mask`` whose parent is inside, in pre-order."""
        return [v for v in range(1, self.size) if not mask >> v & 1 and mask >> self.parent[v] & 1]


def _bits(mask: int) -> Iterable[int]:
    v = 0
    while mask:
        if mask & 1:
            yield v
        mask >>= 1
        v += 1


def to_mask(nodes: Iterable[int]) -> int:
    mask = 0
    for v in nodes:
        mask |= 1 << v
    return mask


def decorate(skeleton: Node, component: Iterable[int]) -> Node:
    """Unit for a connected node set of ``skeleton``, with placeholders where
    a child of a component node lies outside the component."""
    flat = FlatTree(skeleton)
    return flat.build(to_mask(component), placeholders=True)


def merge_pair(upper: Node, lower: Node, attach: tuple[int, int]) -> Node:
    """Graft ``lower`` under the node of ``upper`` with pre-order index
    ``attach[0]``, at child index ``attach[1]``."""
    if is_decorated(upper) or is_decorated(lower):
        raise InvalidAttachPosition("merge_pair expects bare units")
    node_index, child_index = attach
    if not 0 <= node_index < upper.node_count:
        raise InvalidAttachPosition(f"upper has no node {node_index}")
    counter = iter(range(upper.node_count))

    def graft(node: Node) -> Node:
        here = next(counter)
        kids = [graft(c) for c in node.children]
        if here == node_index:
            if not 0 <= child_index <= len(kids):
                raise InvalidAttachPosition(
                    f"child index {child_index} exceeds arity {len(kids)} of {node.label}"
                )
            kids.insert(child_index, lower)
        return Node(node.label, tuple(kids))

    return graft(upper)


class _Hole:
    __slots__ = ("host", "ordinal")

    def __init__(self, host: int, ordinal: int):
        self.host = host
        self.ordinal = ordinal


def _thaw(unit: Node, host: int, holes: list[_Hole]) -> list:
    kids = []
    for c in unit.children:
        if c is PLACEHOLDER:
            hole = _Hole(host, len(holes))
            holes.append(hole)
            kids.append(hole)
        else:
            kids.append(_thaw(c, host, holes))
    return [unit.label, kids]


def _first_hole(tree: list):
    for i, c in enumerate(tree[1]):
        if isinstance(c, _Hole):
            return tree[1], i
        found = _first_hole(c)
        if found is not None:
            return found
    return None


def _freeze(tree: list) -> Node:
    return Node(tree[0], tuple(_freeze(c) for c in tree[1]))


def assemble_with_attachments(units: Sequence[Node]) -> tuple[Node, list[tuple[int, int]]]:
    if not units:
        raise EmptyInput("no units to assemble")
    if not units[0].is_intent:
        raise RootNotIntent(f"first unit {units[0].serialize()} is not rooted at an intent")
    holes: list[_Hole] = []
    tree = _thaw(units[0], 0, holes)
    open_count = len(holes)
    attachments = []
    for k, unit in enumerate(units[1:], start=1):
        found = _first_hole(tree)
        if found is None:
            raise NoOpenPlaceholder(f"unit {k} ({unit.serialize()}) has no open placeholder to fill")
        kids, i = found
        hole = kids[i]
        attachments.append((hole.host, hole.ordinal))
        own: list[_Hole] = []
        kids[i] = _thaw(unit, k, own)
        open_count += len(own) - 1
    if open_count:
        raise UnfilledPlaceholders(f"{open_count} placeholder(s) left unfilled")
    return _freeze(tree), attachments


def assemble(units: Sequence[Node]) -> Node:
    """Glue units into a skeleton, filling the earliest open placeholder
    (pre-order) with each successive unit."""
    return assemble_with_attachments(units)[0]


@dataclass(frozen=True)
class Partition:
    """Units of a tokenization in pre-order of their roots.

    ``attachments[k - 1]`` is ``(host, ordinal)`` for unit ``k``: the index
    of the unit holding the placeholder it fills and that placeholder's
    pre-order position within the host.
    """

    units: tuple[Node, ...]
    attachments: tuple[tuple[int, int], ...]

    @classmethod
    def from_units(cls, units: Sequence[Node]) -> "Partition":
        units = tuple(units)
        try:
            _, attachments = assemble_with_attachments(units)
        except (EmptyInput, RootNotIntent, NoOpenPlaceholder, UnfilledPlaceholders) as exc:
            raise InvalidPartition(str(exc)) from exc
        return cls(units, tuple(attachments))

    @classmethod
    def from_components(cls, flat: FlatTree, masks: Sequence[int]) -> "Partition":
        """Partition from node-set masks covering ``flat`` exactly once."""
        covered = 0
        for m in masks:
            if covered & m:
                raise InvalidPartition("components overlap")
            covered |= m
        if covered != flat.full:
            raise InvalidPartition("components do not cover the skeleton")
        roots = [flat.component_root(m) for m in masks]
        order = sorted(range(len(masks)), key=roots.__getitem__)
        masks = [masks[i] for i in order]
        roots = [roots[i] for i in order]
        owner = {}
        for k, m in enumerate(masks):
            for v in _bits(m):
                owner[v] = k
        attachments = []
        for k in range(1, len(masks)):
            host = owner[flat.parent[roots[k]]]
            ordinal = flat.frontier(masks[host]).index(roots[k])
            attachments.append((host, ordinal))
        units = tuple(flat.build(m, True, r) for m, r in zip(masks, roots))
        return cls(units, tuple(attachments))

    def __len__(self):
        return len(self.units)

    def canonical(self) -> list[str]:
        return [u.serialize() for u in self.units]

    def assemble(self) -> Node:
        return assemble(self.units)


def serialize_placeholder_nest(skeleton: Node, partition: Partition) -> str:
    """Render ``skeleton`` with each placeholder of ``partition`` followed by
    the unit that fills it, as ``<ph>( ... )``."""
    try:
        rebuilt, attachments = assemble_with_attachments(partition.units)
    except (EmptyInput, RootNotIntent, NoOpenPlaceholder, UnfilledPlaceholders) as exc:
        raise InvalidPartition(str(exc)) from exc
    if rebuilt != extract_skeleton(skeleton):
        raise InvalidPartition("partition does not reassemble to the skeleton")
    fillers = {att: k for k, att in enumerate(attachments, start=1)}

    def render(k: int) -> str:
        ordinal = 0

        def walk(node: Node) -> str:
            nonlocal ordinal
            parts = ["[" + str(node.label)]
            for c in node.children:
                if c is PLACEHOLDER:
                    filler = fillers[(k, ordinal)]
                    ordinal += 1
                    parts.append(f"{PLACEHOLDER_TOKEN}( {render(filler)} )")
                else:
                    parts.append(walk(c))
            parts.append("]")
            return " ".join(parts)

        return walk(partition.units[k])

    return render(0)
