"""A split bundle plus vocabularies and features, and the graph contexts built from it."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import torch

from .context import GraphContext, build_context
from .features import FeatureTable
from .kg import Statement, Vocabulary
from .splits import FI, SI, SplitBundle, _entities


@dataclass
class InductiveData:
    bundle: SplitBundle
    entities: Vocabulary
    relations: Vocabulary
    features: FeatureTable

    def __post_init__(self):
        if len(self.features) != len(self.entities):
            raise ValueError(f"feature table has {len(self.features)} rows for {len(self.entities)} entities")

    @property
    def mode(self) -> str:
        return self.bundle.mode

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> list[Statement]:
        return self.bundle.split(name)

    def train_context(self, dtype=torch.float32) -> GraphContext:
        """Training graph; candidates are the training entities E_tr."""
        seen = self.bundle.seen_entities
        return build_context(self.bundle.train, seen, self.features, seen, dtype)

    def eval_context(self, inference: Sequence[Statement] | None = None, dtype=torch.float32) -> GraphContext:
        """Inference-time context.

        FI: message passing over the inference graph, candidates are the unseen
        entities of inference/valid/test (E_inf). SI: no message passing, the
        held-out entities only get features, candidates stay E_tr.
        """
        b = self.bundle
        if b.mode == FI:
            inf = b.inference if inference is None else list(inference)
            # entity and candidate sets come from the unmodified graph so masking cannot shrink them
            unseen = _entities(b.inference) | _entities(b.valid) | _entities(b.test)
            return build_context(inf, unseen, self.features, unseen, dtype)
        if b.mode == SI:
            ents = set(b.seen_entities) | _entities(b.valid) | _entities(b.test)
            return build_context([], ents, self.features, b.seen_entities, dtype)
        raise ValueError(f"unknown mode {b.mode!r}")

    def filter_index(self) -> "TripleFilter":
        b = self.bundle
        return TripleFilter(b.train + b.valid + b.test + b.inference)

    def with_bundle(self, **changes) -> "InductiveData":
        return InductiveData(replace(self.bundle, **changes), self.entities, self.relations, self.features)


class TripleFilter:
    """Known main triples, queryable per (given entity, relation row)."""

    def __init__(self, statements: Iterable[Statement]):
        self.tails: dict[tuple[int, int], set[int]] = defaultdict(set)
        self.heads: dict[tuple[int, int], set[int]] = defaultdict(set)
        for s in statements:
            self.tails[(s.head, s.relation)].add(s.tail)
            self.heads[(s.tail, s.relation)].add(s.head)

    def known(self, given: int, relation_row: int, num_relations: int) -> set[int]:
        if relation_row < num_relations:
            return self.tails.get((given, relation_row), set())
        return self.heads.get((given, relation_row - num_relations), set())
