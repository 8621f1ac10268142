"""Parse trees in TOP bracketed notation.

A logical form such as ``[in:CREATE_REMINDER [sl:PERSON_REMINDED me ] ]`` is
parsed into immutable :class:`Node` objects. Ontology nodes carry a
:class:`Label`; utterance text under a slot is stored as a single
:class:`Leaf` per run of consecutive tokens. The same node type is reused for
tree-piece units, whose children may include :data:`PLACEHOLDER`.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, NamedTuple, Union

from .errors import (
    BadLabelPrefix,
    EmptyInput,
    RootNotIntent,
    TextUnderIntent,
    TopParseError,
    UnbalancedBrackets,
)

PLACEHOLDER_TOKEN = "<ph>"


class Kind(enum.Enum):
    INTENT = "in"
    SLOT = "sl"


@dataclass(frozen=True)
class Label:
    kind: Kind
    name: str

    def __post_init__(self):
        if not self.name:
            raise BadLabelPrefix("empty ontology name")

    def __str__(self):
        return f"{self.kind.value}:{self.name}"

    @classmethod
    def parse(cls, text: str) -> "Label":
        prefix, sep, name = text.partition(":")
        if not sep or prefix.lower() not in ("in", "sl") or not name:
            raise BadLabelPrefix(f"label {text!r} lacks an in:/sl: prefix")
        return cls(Kind(prefix.lower()), name)


@dataclass(frozen=True)
class Leaf:
    text: str

    def serialize(self) -> str:
        return self.text


class _Placeholder:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return PLACEHOLDER_TOKEN

    def __reduce__(self):
        return (_Placeholder, ())

    def serialize(self) -> str:
        return PLACEHOLDER_TOKEN


PLACEHOLDER = _Placeholder()

Child = Union["Node", Leaf, _Placeholder]


@dataclass(frozen=True)
class Node:
    """An ontology node with ordered children.

    Children are other nodes, utterance leaves (parse trees only) or
    placeholders (tree-piece units only).
    """

    label: Label
    children: tuple = ()

    def __repr__(self):
        return f"Node({self.serialize()!r})"

    @cached_property
    def _text(self) -> str:
        parts = ["[" + str(self.label)]
        parts.extend(child.serialize() for child in self.children)
        parts.append("]")
        return " ".join(parts)

    def serialize(self) -> str:
        return self._text

    @property
    def is_intent(self) -> bool:
        return self.label.kind is Kind.INTENT

    def ontology_children(self) -> Iterator["Node"]:
        return (c for c in self.children if isinstance(c, Node))

    def preorder(self) -> Iterator["Node"]:
        """Yield ontology nodes in pre-order."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed([c for c in node.children if isinstance(c, Node)]))

    @cached_property
    def node_count(self) -> int:
        return 1 + sum(c.node_count for c in self.ontology_children())

    @cached_property
    def depth(self) -> int:
        return 1 + max((c.depth for c in self.ontology_children()), default=0)

    @cached_property
    def placeholder_count(self) -> int:
        own = sum(1 for c in self.children if c is PLACEHOLDER)
        return own + sum(c.placeholder_count for c in self.ontology_children())

    @property
    def has_leaves(self) -> bool:
        return any(isinstance(c, Leaf) for c in self.children) or any(
            c.has_leaves for c in self.ontology_children()
        )


# ``[label`` | ``]`` | any other whitespace-free run
_TOKEN_RE = re.compile(r"\[[^\s\[\]]*|\]|[^\s\[\]]+")


def _parse(text: str, units: bool = False, decouple: bool = False) -> Node:
    tokens = _TOKEN_RE.findall(text)
    if not tokens:
        raise EmptyInput("empty logical form")
    # each frame: [label, children, pending text tokens]
    stack: list = []
    root = None
    for tok in tokens:
        if root is not None:
            raise UnbalancedBrackets(f"unexpected {tok!r} after the root closed")
        if tok.startswith("["):
            label = Label.parse(tok[1:])
            if stack:
                _flush_text(stack[-1])
            stack.append([label, [], []])
        elif tok == "]":
            if not stack:
                raise UnbalancedBrackets("closing bracket without an open node")
            frame = stack.pop()
            _flush_text(frame)
            node = Node(frame[0], tuple(frame[1]))
            if stack:
                stack[-1][1].append(node)
            else:
                root = node
        elif units and tok == PLACEHOLDER_TOKEN:
            if not stack:
                raise UnbalancedBrackets("placeholder outside any node")
            stack[-1][1].append(PLACEHOLDER)
        else:
            if not stack:
                raise UnbalancedBrackets(f"text {tok!r} outside brackets")
            if units:
                raise TopParseError(f"unexpected token {tok!r} in a unit")
            label = stack[-1][0]
            if label.kind is Kind.INTENT:
                if decouple:
                    continue
                raise TextUnderIntent(f"text {tok!r} directly under {label}")
            stack[-1][2].append(tok)
    if stack:
        raise UnbalancedBrackets(f"{len(stack)} unclosed bracket(s)")
    if not units and not root.is_intent:
        raise RootNotIntent(f"root {root.label} is not an intent")
    return root


def _flush_text(frame) -> None:
    if frame[2]:
        frame[1].append(Leaf(" ".join(frame[2])))
        frame[2] = []


def parse_top(text: str, decouple: bool = False) -> Node:
    """Parse a bracketed logical form into a tree.

    With ``decouple=True`` raw tokens directly under intents are dropped
    instead of rejected, which turns full TOP annotations into the
    decoupled form.
    """
    return _parse(text, decouple=decouple)


def parse_unit(text: str) -> Node:
    """Parse the canonical serialization of a tree-piece unit."""
    return _parse(text, units=True)


def serialize_top(tree: Node) -> str:
    return tree.serialize()


def normalize_whitespace(text: str) -> str:
    return " ".join(_TOKEN_RE.findall(text))


def extract_skeleton(tree: Node) -> Node:
    if not tree.has_leaves:
        return tree
    return Node(tree.label, tuple(extract_skeleton(c) for c in tree.ontology_children()))


class LeafRef(NamedTuple):
    slot_index: int  # pre-order index of the owning slot in the skeleton
    text: str
    position: int  # child position within the slot in the full tree


def extract_leaves(tree: Node) -> list[LeafRef]:
    out = []
    for index, node in enumerate(tree.preorder()):
        for position, child in enumerate(node.children):
            if isinstance(child, Leaf):
                out.append(LeafRef(index, child.text, position))
    return out


def attach_leaves(skeleton: Node, leaves: list[LeafRef]) -> Node:
    """Inverse of the (extract_skeleton, extract_leaves) pair."""
    by_slot: dict[int, list[LeafRef]] = {}
    for ref in leaves:
        by_slot.setdefault(ref.slot_index, []).append(ref)
    counter = iter(range(skeleton.node_count))

    def rebuild(node: Node) -> Node:
        index = next(counter)
        children = [rebuild(c) for c in node.ontology_children()]
        for ref in sorted(by_slot.get(index, ()), key=lambda r: r.position):
            children.insert(ref.position, Leaf(ref.text))
        return Node(node.label, tuple(children))

    return rebuild(skeleton)
