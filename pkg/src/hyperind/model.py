"""QBLP (linear encoder) and StarE (message passing) link predictors sharing one decoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .context import GraphContext
from .decoder import QP_SLOT_CHOICES, StatementDecoder, position_ids, score_candidates
from .encoder import LinearEncoder, RelationTable, StarELayer, stare_forward
from .kg import Qualifiers, Statement

TAIL, HEAD = "tail", "head"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass
class ModelConfig:
    encoder: str = "linear"  # "linear" (QBLP) or "stare"
    dim: int = 64
    qp_slots: int = 2
    stare_layers: int = 2
    encoder_qualifiers: bool = True  # False turns StarE into CompGCN
    alpha: float = 0.8
    aggregation: str = "sum"
    attention_slope: float = 0.2
    compose: str = "mult"
    activation: str = "tanh"
    degree_norm: bool = True
    transformer_layers: int = 2
    heads: int = 2
    ff_dim: int = 128
    dropout: float = 0.0

    def validate(self, prefix: str = "model") -> "ModelConfig":
        def bad(name, msg):
            raise ConfigError(f"{prefix}.{name}", msg)
        if self.encoder not in ("linear", "stare"):
            bad("encoder", f"must be 'linear' or 'stare', got {self.encoder!r}")
        if self.qp_slots not in QP_SLOT_CHOICES:
            bad("qp_slots", f"must be one of {QP_SLOT_CHOICES}, got {self.qp_slots}")
        if not 0.0 <= self.alpha <= 1.0:
            bad("alpha", "must lie in [0, 1]")
        if self.aggregation not in ("sum", "attention"):
            bad("aggregation", "must be 'sum' or 'attention'")
        if self.compose not in ("mult", "sub"):
            bad("compose", "must be 'mult' or 'sub'")
        if self.activation not in ("tanh", "identity", "relu"):
            bad("activation", "must be 'tanh', 'identity' or 'relu'")
        if self.dim < 1 or self.dim % self.heads:
            bad("dim", f"must be positive and divisible by heads={self.heads}")
        if self.stare_layers < 1:
            bad("stare_layers", "must be >= 1")
        if self.transformer_layers < 1:
            bad("transformer_layers", "must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            bad("dropout", "must lie in [0, 1)")
        return self

    @classmethod
    def from_dict(cls, d: dict, prefix: str = "model") -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(f"{prefix}.{k}", "unknown field")
        return cls(**d).validate(prefix)


class Query(NamedTuple):
    """``(given, relation-row, ?, qualifiers)``; head queries use the inverse relation row."""

    given: int
    relation: int
    target: int
    qualifiers: Qualifiers
    side: str
    statement: int


def statement_queries(statements: Sequence[Statement], num_relations: int,
                      sides: Sequence[str] = (TAIL, HEAD)) -> list[Query]:
    out = []
    for i, s in enumerate(statements):
        if TAIL in sides:
            out.append(Query(s.head, s.relation, s.tail, s.qualifiers, TAIL, i))
        if HEAD in sides:
            out.append(Query(s.tail, s.relation + num_relations, s.head, s.qualifiers, HEAD, i))
    return out


class LinkPredictor(nn.Module):
    def __init__(self, num_relations: int, feature_dim: int, config: ModelConfig, seed: int = 0):
        super().__init__()
        config.validate()
        self.config = config
        self.num_relations = num_relations
        self.feature_dim = feature_dim
        gen = torch.Generator().manual_seed(seed)
        d = config.dim
        self.relations = RelationTable(num_relations, d, gen)
        self.projection = LinearEncoder(feature_dim, d, gen)
        if config.encoder == "stare":
            self.gnn = nn.ModuleList(StarELayer(d, gen, config.aggregation) for _ in range(config.stare_layers))
        else:
            self.gnn = None
        self.decoder = StatementDecoder(d, config.transformer_layers, config.heads, config.ff_dim, gen,
                                        config.dropout)

    @property
    def dtype(self) -> torch.dtype:
        return self.relations.weight.dtype

    def encode(self, ctx: GraphContext) -> tuple[torch.Tensor, torch.Tensor]:
        """Entity vectors for every context entity and the relation table."""
        x = self.projection(ctx.features.to(self.dtype))
        rel = self.relations()
        if self.gnn is not None:
            c = self.config
            x, rel = stare_forward(ctx, x, rel, self.gnn, self.num_relations, alpha=c.alpha,
                                   use_qualifiers=c.encoder_qualifiers, activation=c.activation,
                                   degree_norm=c.degree_norm, compose_mode=c.compose,
                                   slope=c.attention_slope)
        return x, rel

    def linearize_batch(self, x: torch.Tensor, rel: torch.Tensor, ctx: GraphContext,
                        queries: Sequence[Query], qp_slots: int | None = None):
        qp = self.config.qp_slots if qp_slots is None else qp_slots
        b = len(queries)
        given = torch.as_tensor(ctx.local([q.given for q in queries]), dtype=torch.long)
        rels = torch.as_tensor([q.relation for q in queries], dtype=torch.long)
        toks = [x[given].unsqueeze(1), rel[rels].unsqueeze(1)]
        mask = torch.ones((b, 2 + 2 * qp), dtype=torch.bool)
        if qp:
            q_rel = np.zeros((b, qp), dtype=np.int64)
            q_ent = np.zeros((b, qp), dtype=np.int64)
            q_mask = np.zeros((b, qp), dtype=bool)
            for i, q in enumerate(queries):
                # canonical order makes truncation and float summation independent of input order
                kept = sorted(q.qualifiers)[:qp]
                if kept:
                    q_rel[i, :len(kept)] = [r for r, _ in kept]
                    q_ent[i, :len(kept)] = ctx.local([e for _, e in kept])
                    q_mask[i, :len(kept)] = True
            q_mask_t = torch.as_tensor(q_mask)
            pairs = torch.stack([rel[torch.as_tensor(q_rel)], x[torch.as_tensor(q_ent)]], dim=2)
            pairs = torch.where(q_mask_t[:, :, None, None], pairs, self.decoder.pad)
            toks.append(pairs.reshape(b, 2 * qp, -1))
            mask[:, 2:] = q_mask_t.repeat_interleave(2, dim=1)
        return torch.cat(toks, dim=1), mask, position_ids(qp)

    def pool(self, x, rel, ctx: GraphContext, queries: Sequence[Query], qp_slots: int | None = None):
        vectors, mask, positions = self.linearize_batch(x, rel, ctx, queries, qp_slots)
        return self.decoder(vectors, mask, positions)

    def score(self, ctx: GraphContext, queries: Sequence[Query], encoded=None,
              qp_slots: int | None = None) -> torch.Tensor:
        """Scores ``(len(queries), len(ctx.candidates))``."""
        x, rel = self.encode(ctx) if encoded is None else encoded
        pooled = self.pool(x, rel, ctx, queries, qp_slots)
        return score_candidates(pooled, x[ctx.candidates])

    def score_statement(self, ctx: GraphContext, statement: Statement, encoded=None) -> torch.Tensor:
        """f(h, r, t, q): the tail-side score of one statement."""
        x, rel = self.encode(ctx) if encoded is None else encoded
        q = Query(statement.head, statement.relation, statement.tail, statement.qualifiers, TAIL, 0)
        pooled = self.pool(x, rel, ctx, [q])[0]
        return pooled @ x[int(ctx.local([statement.tail])[0])]

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def score_statement_both_sides(statement: Statement, model: LinkPredictor, ctx: GraphContext,
                               encoded=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Tail scores for (h, r, ?, q) and head scores for (t, r^-1, ?, q) over ``ctx.candidates``."""
    queries = statement_queries([statement], model.num_relations)
    scores = model.score(ctx, queries, encoded)
    return scores[0], scores[1]


def model_config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)
