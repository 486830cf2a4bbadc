"""Statement data model: vocabularies, statements, graphs and statement files.

Statement files hold one statement per line, ``h,r,t[,qr,qe]*``.
"""
from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

Qualifiers = tuple[tuple[int, int], ...]


class MalformedLineError(ValueError):
    def __init__(self, path, lineno: int, reason: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {reason}")


class RawStatement(NamedTuple):
    head: str
    relation: str
    tail: str
    qualifiers: tuple[tuple[str, str], ...] = ()


class Statement(NamedTuple):
    """An interned statement; ``qualifiers`` is sorted and duplicate-free."""

    head: int
    relation: int
    tail: int
    qualifiers: Qualifiers = ()

    @classmethod
    def make(cls, head: int, relation: int, tail: int, qualifiers: Iterable[tuple[int, int]] = ()) -> "Statement":
        return cls(int(head), int(relation), int(tail),
                   tuple(sorted({(int(r), int(e)) for r, e in qualifiers})))

    @property
    def triple(self) -> tuple[int, int, int]:
        return self.head, self.relation, self.tail

    def entities(self) -> set[int]:
        return {self.head, self.tail, *(e for _, e in self.qualifiers)}

    def relations(self) -> set[int]:
        return {self.relation, *(r for r, _ in self.qualifiers)}


class Vocabulary:
    """Label <-> dense index mapping, indices assigned in insertion order."""

    def __init__(self, labels: Iterable[str] = ()):
        self._labels: list[str] = []
        self._index: dict[str, int] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        idx = self._index.get(label)
        if idx is None:
            idx = len(self._labels)
            self._labels.append(label)
            self._index[label] = idx
        return idx

    def index(self, label: str) -> int:
        return self._index[label]

    def get(self, label: str, default=None):
        return self._index.get(label, default)

    def label(self, idx: int) -> str:
        return self._labels[idx]

    @property
    def labels(self) -> list[str]:
        return list(self._labels)

    def __contains__(self, label) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self):
        return iter(self._labels)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._labels == other._labels

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, label in enumerate(self._labels):
                fh.write(f"{i}\t{label}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        vocab = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                idx, _, label = line.partition("\t")
                if int(idx) != len(vocab):
                    raise MalformedLineError(path, lineno, f"expected index {len(vocab)}, got {idx}")
                vocab.add(label)
        return vocab


class AdjacencyRecord(NamedTuple):
    neighbor: int
    relation: int
    direction: str  # "out": this node is the head; "in": this node is the tail
    statement: int


@dataclass(frozen=True)
class StatementGraph:
    entities: Vocabulary
    relations: Vocabulary
    statements: tuple[Statement, ...]
    adjacency: dict[int, tuple[AdjacencyRecord, ...]] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.adjacency:
            object.__setattr__(self, "adjacency", build_adjacency(self.statements))

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def qualifiers(self, statement_index: int) -> Qualifiers:
        return self.statements[statement_index].qualifiers

    def statement_entities(self) -> set[int]:
        """Entities occurring as head or tail of some statement."""
        out: set[int] = set()
        for s in self.statements:
            out.add(s.head)
            out.add(s.tail)
        return out

    def to_raw(self, statements: Iterable[Statement] | None = None) -> list[RawStatement]:
        stmts = self.statements if statements is None else statements
        return [to_raw(s, self.entities, self.relations) for s in stmts]


def build_adjacency(statements: Sequence[Statement]) -> dict[int, tuple[AdjacencyRecord, ...]]:
    adj: dict[int, list[AdjacencyRecord]] = {}
    for i, s in enumerate(statements):
        adj.setdefault(s.head, []).append(AdjacencyRecord(s.tail, s.relation, "out", i))
        adj.setdefault(s.tail, []).append(AdjacencyRecord(s.head, s.relation, "in", i))
    return {k: tuple(v) for k, v in adj.items()}


def to_raw(s: Statement, entities: Vocabulary, relations: Vocabulary) -> RawStatement:
    return RawStatement(
        entities.label(s.head), relations.label(s.relation), entities.label(s.tail),
        tuple((relations.label(r), entities.label(e)) for r, e in s.qualifiers),
    )


def parse_line(line: str, path="<string>", lineno: int = 1) -> RawStatement:
    fields = [f.strip() for f in line.split(",")]
    if len(fields) < 3:
        raise MalformedLineError(path, lineno, f"expected at least 3 fields, got {len(fields)}")
    if (len(fields) - 3) % 2:
        raise MalformedLineError(path, lineno, "odd number of qualifier fields")
    if any(not f for f in fields):
        raise MalformedLineError(path, lineno, "empty field")
    quals = tuple(zip(fields[3::2], fields[4::2]))
    return RawStatement(fields[0], fields[1], fields[2], quals)


def parse_statement_file(path) -> list[RawStatement]:
    """Read a statement file; blank lines are skipped, order is preserved."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            out.append(parse_line(line, path, lineno))
    return out


def format_line(raw: RawStatement) -> str:
    parts = [raw.head, raw.relation, raw.tail]
    for r, e in raw.qualifiers:
        parts += [r, e]
    return ",".join(parts)


def write_statement_file(path, raws: Iterable[RawStatement]) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for raw in raws:
            fh.write(format_line(raw) + "\n")
    os.replace(tmp, path)


def intern_statements(raws: Iterable[RawStatement], entities: Vocabulary,
                      relations: Vocabulary) -> list[Statement]:
    """Intern raw statements into the given (growing) vocabularies, deduplicating."""
    seen: set[Statement] = set()
    out = []
    for raw in raws:
        h = entities.add(raw.head)
        r = relations.add(raw.relation)
        t = entities.add(raw.tail)
        quals = [(relations.add(qr), entities.add(qe)) for qr, qe in raw.qualifiers]
        s = Statement.make(h, r, t, quals)
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def intern(raws: Iterable[RawStatement], entities: Vocabulary | None = None,
           relations: Vocabulary | None = None) -> StatementGraph:
    entities = Vocabulary() if entities is None else entities
    relations = Vocabulary() if relations is None else relations
    stmts = intern_statements(raws, entities, relations)
    return StatementGraph(entities, relations, tuple(stmts))


def qualifier_ratio(statements: Iterable[Statement]) -> dict[int, float]:
    """Fraction of statements per qualifier-pair count."""
    counts = Counter(len(s.qualifiers) for s in statements)
    total = sum(counts.values())
    if not total:
        return {}
    return {k: counts[k] / total for k in sorted(counts)}


def qualifier_percentage(statements: Iterable[Statement]) -> float:
    """Q%: percentage of statements with at least one qualifier pair."""
    ratio = qualifier_ratio(statements)
    if not ratio:
        return 0.0
    return 100.0 * (1.0 - ratio.get(0, 0.0))
