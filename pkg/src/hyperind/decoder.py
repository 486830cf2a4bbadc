"""Statement linearization, Transformer decoder with mean pooling, and 1-N scoring."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .encoder import uniform_

QP_SLOT_CHOICES = (0, 2, 4, 6)
POS_HEAD, POS_RELATION, POS_QUAL_RELATION, POS_QUAL_ENTITY = 0, 1, 2, 3


@dataclass
class LinearizedStatement:
    vectors: torch.Tensor  # (L, d)
    mask: torch.Tensor  # (L,), True = real token
    positions: torch.Tensor  # (L,)


def position_ids(qp_slots: int) -> torch.Tensor:
    return torch.tensor([POS_HEAD, POS_RELATION] + [POS_QUAL_RELATION, POS_QUAL_ENTITY] * qp_slots,
                        dtype=torch.long)


def linearize(head_vec: torch.Tensor, rel_vec: torch.Tensor, qualifier_vecs, qp_slots: int,
              pad: torch.Tensor) -> LinearizedStatement:
    """Lay out ``[x_h, x_r, x_q1r, x_q1e, ..., PAD, ...]`` with ``2 + 2*qp_slots`` slots.

    ``qualifier_vecs`` is a sequence of (relation vector, entity vector) pairs in
    canonical order; pairs beyond ``qp_slots`` are dropped. The tail never
    appears in the sequence.
    """
    if qp_slots not in QP_SLOT_CHOICES:
        raise ValueError(f"qp_slots must be one of {QP_SLOT_CHOICES}, got {qp_slots}")
    toks = [head_vec, rel_vec]
    kept = list(qualifier_vecs)[:qp_slots]
    for r, e in kept:
        toks += [r, e]
    n_real = len(toks)
    toks += [pad] * (2 + 2 * qp_slots - n_real)
    mask = torch.zeros(len(toks), dtype=torch.bool)
    mask[:n_real] = True
    return LinearizedStatement(torch.stack(toks), mask, position_ids(qp_slots))


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block with key padding mask."""

    def __init__(self, dim: int, heads: int, ff_dim: int, generator: torch.Generator, dropout: float = 0.0):
        super().__init__()
        if dim % heads:
            raise ValueError(f"width {dim} not divisible by {heads} heads")
        self.heads = heads
        self.ln1 = nn.LayerNorm(dim)
        self.ln2 = nn.LayerNorm(dim)
        self.qkv = nn.Parameter(uniform_(torch.empty(3 * dim, dim), dim, generator))
        self.qkv_bias = nn.Parameter(torch.zeros(3 * dim))
        self.out = nn.Parameter(uniform_(torch.empty(dim, dim), dim, generator))
        self.out_bias = nn.Parameter(torch.zeros(dim))
        self.ff1 = nn.Parameter(uniform_(torch.empty(ff_dim, dim), dim, generator))
        self.ff1_bias = nn.Parameter(torch.zeros(ff_dim))
        self.ff2 = nn.Parameter(uniform_(torch.empty(dim, ff_dim), ff_dim, generator))
        self.ff2_bias = nn.Parameter(torch.zeros(dim))
        self.dropout = dropout

    def attention(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        b, l, d = x.shape
        hd = d // self.heads
        q, k, v = F.linear(x, self.qkv, self.qkv_bias).split(d, dim=-1)
        q, k, v = (t.reshape(b, l, self.heads, hd).transpose(1, 2) for t in (q, k, v))
        scores = q @ k.transpose(-1, -2) / math.sqrt(hd)
        scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        att = torch.softmax(scores, dim=-1)
        att = F.dropout(att, self.dropout, self.training)
        ctx = (att @ v).transpose(1, 2).reshape(b, l, d)
        return F.linear(ctx, self.out, self.out_bias)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = x + F.dropout(self.attention(self.ln1(x), mask), self.dropout, self.training)
        h = F.gelu(F.linear(self.ln2(x), self.ff1, self.ff1_bias))
        h = F.linear(F.dropout(h, self.dropout, self.training), self.ff2, self.ff2_bias)
        return x + F.dropout(h, self.dropout, self.training)


class StatementDecoder(nn.Module):
    def __init__(self, dim: int, layers: int, heads: int, ff_dim: int, generator: torch.Generator,
                 dropout: float = 0.0):
        super().__init__()
        self.pad = nn.Parameter(uniform_(torch.empty(dim), dim, generator))
        self.position = nn.Parameter(uniform_(torch.empty(4, dim), dim, generator))
        self.blocks = nn.ModuleList(TransformerBlock(dim, heads, ff_dim, generator, dropout)
                                    for _ in range(layers))

    def forward(self, vectors: torch.Tensor, mask: torch.Tensor, positions: torch.Tensor) -> torch.Tensor:
        """Pooled representation of a batch ``(B, L, d)`` of linearized statements."""
        single = vectors.dim() == 2
        if single:
            vectors, mask = vectors.unsqueeze(0), mask.unsqueeze(0)
        if not mask.any(dim=-1).all():
            raise ValueError("statement sequence without any real token")
        # trailing slots that are padding in every row cannot influence the result
        idx = torch.arange(mask.shape[-1])
        length = int((mask * (idx + 1)).max())
        x = vectors[:, :length] + self.position[positions[:length]]
        m = mask[:, :length]
        for block in self.blocks:
            x = block(x, m)
        mf = m.unsqueeze(-1).to(x.dtype)
        pooled = (x * mf).sum(1) / mf.sum(1)
        return pooled[0] if single else pooled


def decode_pool(seq: LinearizedStatement, decoder: StatementDecoder) -> torch.Tensor:
    return decoder(seq.vectors, seq.mask, seq.positions)


def score_candidates(pooled: torch.Tensor, candidates: torch.Tensor) -> torch.Tensor:
    """1-N scores: ``pooled . candidate_j`` for every candidate row."""
    if candidates.shape[0] == 0:
        raise ValueError("empty candidate set")
    if pooled.shape[-1] != candidates.shape[-1]:
        raise ValueError(f"width mismatch: {pooled.shape[-1]} vs {candidates.shape[-1]}")
    return pooled @ candidates.T
