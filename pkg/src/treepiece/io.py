"""Corpus files and vocabulary files."""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, TextIO

from .errors import CorruptVocabFile, EmptyCorpus, ParseErrorAtLine, TopParseError
from .tree import Node, extract_skeleton, parse_top, parse_unit
from .vocab import SIMPLEX_TOLERANCE, Phase, Vocabulary

log = logging.getLogger(__name__)

VOCAB_HEADER = "TPV1"
_VOCAB_KEYS = ("unit", "freq", "prob", "phase")


@dataclass(frozen=True)
class Record:
    domain: str | None
    utterance: str
    tree: Node
    lineno: int = 0


@dataclass(frozen=True)
class Corpus:
    records: tuple[Record, ...]

    def __len__(self):
        return len(self.records)

    @cached_property
    def skeletons(self) -> list[Node]:
        return [extract_skeleton(r.tree) for r in self.records]

    @classmethod
    def from_forms(cls, forms: Iterable[str], decouple: bool = False) -> "Corpus":
        return cls(tuple(Record(None, "", parse_top(f, decouple)) for f in forms))


def read_corpus(
    lines: Iterable[str],
    lenient: bool = False,
    columns: int | None = None,
    decouple: bool = False,
) -> Corpus:
    """Parse tab-separated corpus lines.

    The column count (3: domain, utterance, form; 2: utterance, form; 1:
    form) is taken from the first data line unless ``columns`` is given. A
    first line whose last field does not start with ``[`` is a header.
    """
    records = []
    first = True
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if first:
            first = False
            if not fields[-1].lstrip().startswith("["):
                continue
        if columns is None:
            columns = len(fields)
        try:
            if len(fields) != columns:
                raise ParseErrorAtLine(lineno, f"expected {columns} column(s), found {len(fields)}")
            try:
                tree = parse_top(fields[-1], decouple=decouple)
            except TopParseError as exc:
                raise ParseErrorAtLine(lineno, f"{type(exc).__name__}: {exc}") from exc
        except ParseErrorAtLine as exc:
            if not lenient:
                raise
            log.warning("skipping %s", exc)
            continue
        domain = fields[0] if columns == 3 else None
        utterance = fields[-2] if columns >= 2 else ""
        records.append(Record(domain, utterance, tree, lineno))
    if not records:
        raise EmptyCorpus("corpus has no records")
    return Corpus(tuple(records))


def load_corpus(path, lenient: bool = False, columns: int | None = None, decouple: bool = False) -> Corpus:
    with open(path, encoding="utf-8") as f:
        return read_corpus(f, lenient=lenient, columns=columns, decouple=decouple)


def _number(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return format(x, ".17g")


def write_vocab(vocab: Vocabulary, f: TextIO) -> None:
    f.write(VOCAB_HEADER + "\n")
    for unit in sorted(vocab.freq):
        f.write(
            '{"unit": %s, "freq": %s, "prob": %s, "phase": "%s"}\n'
            % (json.dumps(unit, ensure_ascii=False), _number(vocab.freq[unit]),
               format(vocab.simplex[unit], ".17g"), vocab.phase.value)
        )


def save_vocab(vocab: Vocabulary, path) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        write_vocab(vocab, f)
    os.replace(tmp, path)


def read_vocab(lines: Iterable[str]) -> Vocabulary:
    lines = iter(lines)
    header = next(lines, "").rstrip("\n")
    if header != VOCAB_HEADER:
        raise CorruptVocabFile(f"bad header {header!r}")
    freq: dict[str, float] = {}
    simplex: dict[str, float] = {}
    phases = set()
    for lineno, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptVocabFile(f"line {lineno}: {exc}") from exc
        if not isinstance(entry, dict) or tuple(sorted(entry)) != tuple(sorted(_VOCAB_KEYS)):
            raise CorruptVocabFile(f"line {lineno}: expected keys {', '.join(_VOCAB_KEYS)}")
        unit = entry["unit"]
        try:
            if not isinstance(unit, str) or parse_unit(unit).serialize() != unit:
                raise CorruptVocabFile(f"line {lineno}: unit {unit!r} is not in canonical form")
        except TopParseError as exc:
            raise CorruptVocabFile(f"line {lineno}: {exc}") from exc
        if unit in freq:
            raise CorruptVocabFile(f"line {lineno}: duplicate unit {unit}")
        try:
            phases.add(Phase(entry["phase"]))
            for name in ("freq", "prob"):
                if isinstance(entry[name], bool) or not isinstance(entry[name], (int, float)):
                    raise TypeError(f"{name} must be a number")
            freq[unit] = entry["freq"]
            simplex[unit] = float(entry["prob"])
        except (ValueError, TypeError) as exc:
            raise CorruptVocabFile(f"line {lineno}: {exc}") from exc
    if not freq:
        raise CorruptVocabFile("no vocabulary entries")
    if len(phases) != 1:
        raise CorruptVocabFile("entries disagree on phase")
    total = math.fsum(simplex.values())
    if abs(total - 1.0) > SIMPLEX_TOLERANCE:
        raise CorruptVocabFile(f"probabilities sum to {total!r}")
    try:
        return Vocabulary(freq, simplex, phases.pop())
    except ValueError as exc:
        raise CorruptVocabFile(str(exc)) from exc


def load_vocab(path) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        return read_vocab(f)
