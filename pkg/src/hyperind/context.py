"""Index-level view of a statement graph that the encoders run on."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch

from .features import FeatureTable
from .kg import Statement


@dataclass
class GraphContext:
    """Local entity numbering, features and message-passing arrays for one graph.

    ``entity_ids`` are global vocabulary ids in ascending order; every tensor
    index below refers to positions in that array.
    """

    entity_ids: np.ndarray
    features: torch.Tensor
    statements: tuple[Statement, ...]
    heads: torch.Tensor
    relations: torch.Tensor
    tails: torch.Tensor
    qual_stmt: torch.Tensor
    qual_rel: torch.Tensor
    qual_ent: torch.Tensor
    candidates: torch.Tensor  # local indices that may be scored

    @property
    def num_entities(self) -> int:
        return len(self.entity_ids)

    @property
    def num_statements(self) -> int:
        return len(self.statements)

    def local(self, global_ids) -> np.ndarray:
        ids = np.asarray(global_ids, dtype=np.int64)
        pos = np.searchsorted(self.entity_ids, ids)
        ok = (pos < len(self.entity_ids)) & (self.entity_ids[np.minimum(pos, len(self.entity_ids) - 1)] == ids)
        if not ok.all():
            raise KeyError(f"entities not in context: {ids[~ok][:10].tolist()}")
        return pos

    def candidate_ids(self) -> np.ndarray:
        return self.entity_ids[self.candidates.numpy()]


def build_context(message_statements: Sequence[Statement], entity_ids: Iterable[int],
                  features: FeatureTable, candidate_ids: Iterable[int] | None = None,
                  dtype: torch.dtype = torch.float32) -> GraphContext:
    """Build a context over ``entity_ids``; message passing uses ``message_statements`` only."""
    stmts = tuple(message_statements)
    ids = set(int(e) for e in entity_ids)
    for s in stmts:
        ids |= s.entities()
    ent = np.array(sorted(ids), dtype=np.int64)

    def loc(xs):
        return torch.as_tensor(np.searchsorted(ent, np.asarray(xs, dtype=np.int64)), dtype=torch.long)

    q_stmt, q_rel, q_ent = [], [], []
    for i, s in enumerate(stmts):
        for r, e in s.qualifiers:
            q_stmt.append(i)
            q_rel.append(r)
            q_ent.append(e)
    cands = ent if candidate_ids is None else np.array(sorted(set(int(c) for c in candidate_ids)), dtype=np.int64)
    cand_local = loc(cands)
    if len(cands) and not np.array_equal(ent[cand_local.numpy()], cands):
        raise KeyError("candidate entities must be part of the context")
    return GraphContext(
        entity_ids=ent,
        features=torch.as_tensor(features.rows[ent], dtype=dtype) if len(ent) else torch.zeros((0, features.dim), dtype=dtype),
        statements=stmts,
        heads=loc([s.head for s in stmts]),
        relations=torch.as_tensor([s.relation for s in stmts], dtype=torch.long),
        tails=loc([s.tail for s in stmts]),
        qual_stmt=torch.as_tensor(q_stmt, dtype=torch.long),
        qual_rel=torch.as_tensor(q_rel, dtype=torch.long),
        qual_ent=loc(q_ent),
        candidates=cand_local,
    )
