"""Entity/relation encoders: linear feature projection and StarE message passing."""
from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F

from .context import GraphContext

ACTIVATIONS = {
    "tanh": torch.tanh,
    "identity": lambda x: x,
    "relu": torch.relu,
}


def uniform_(t: torch.Tensor, fan_in: int, generator: torch.Generator) -> torch.Tensor:
    """Uniform init with standard deviation 1/sqrt(fan_in)."""
    bound = math.sqrt(3.0 / fan_in)
    with torch.no_grad():
        t.uniform_(-bound, bound, generator=generator)
    return t


class RelationTable(nn.Module):
    """Rows ``[0, R)`` base relations, ``[R, 2R)`` inverses, row ``2R`` the self-loop."""

    def __init__(self, num_relations: int, dim: int, generator: torch.Generator):
        super().__init__()
        self.num_relations = num_relations
        # embedding rows see a one-hot input, i.e. fan-in 1
        self.weight = nn.Parameter(uniform_(torch.empty(2 * num_relations + 1, dim), 1, generator))

    def inverse(self, r):
        return r + self.num_relations

    @property
    def loop(self) -> int:
        return 2 * self.num_relations

    def forward(self) -> torch.Tensor:
        return self.weight


class LinearEncoder(nn.Module):
    """phi: features (d_f) -> relation space (d_r); ignores graph structure."""

    def __init__(self, feature_dim: int, dim: int, generator: torch.Generator):
        super().__init__()
        self.projection = nn.Parameter(uniform_(torch.empty(feature_dim, dim), feature_dim, generator))
        self.bias = nn.Parameter(torch.zeros(dim))

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return linear_encode(features, self.projection, self.bias)


def linear_encode(features: torch.Tensor, projection: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    if features.shape[-1] != projection.shape[0] or projection.shape[1] != bias.shape[-1]:
        raise ValueError(f"width mismatch: features {tuple(features.shape)}, "
                         f"projection {tuple(projection.shape)}, bias {tuple(bias.shape)}")
    return features @ projection + bias


def compose(x: torch.Tensor, rel: torch.Tensor, mode: str = "mult") -> torch.Tensor:
    if mode == "mult":
        return x * rel
    if mode == "sub":
        return x - rel
    raise ValueError(f"unknown composition {mode!r}")


def aggregate_qualifiers(qual_rel_vecs: torch.Tensor, qual_ent_vecs: torch.Tensor, w_q: torch.Tensor,
                         index: torch.Tensor | None = None, num_groups: int = 1,
                         mode: str = "sum", attention: torch.Tensor | None = None,
                         slope: float = 0.2, compose_mode: str = "mult"):
    """Aggregate qualifier pairs into x_q = W_q . sum_i compose(x_qe_i, x_qr_i).

    Without ``index`` all pairs belong to one statement and the result is a
    single vector, or ``None`` if there are no pairs. With ``index`` (statement
    id per pair) returns ``(x_q, has_q)`` of shapes ``(num_groups, d)`` and
    ``(num_groups,)``. ``mode="attention"`` replaces the plain sum with a
    softmax-weighted one, scored by ``attention`` through a leaky ReLU.
    """
    single = index is None
    if single:
        if qual_rel_vecs.shape[0] == 0:
            return None
        index = torch.zeros(qual_rel_vecs.shape[0], dtype=torch.long)
        num_groups = 1
    msgs = compose(qual_ent_vecs, qual_rel_vecs, compose_mode)
    if mode == "attention":
        if attention is None:
            raise ValueError("attention aggregation needs an attention vector")
        logits = F.leaky_relu(msgs @ attention, negative_slope=slope)
        gmax = torch.full((num_groups,), float("-inf"), dtype=logits.dtype)
        gmax = gmax.scatter_reduce(0, index, logits.detach(), reduce="amax", include_self=True)
        w = torch.exp(logits - gmax[index])
        denom = torch.zeros(num_groups, dtype=w.dtype).index_add(0, index, w)
        msgs = msgs * (w / denom[index]).unsqueeze(-1)
    elif mode != "sum":
        raise ValueError(f"unknown qualifier aggregation {mode!r}")
    summed = torch.zeros((num_groups, msgs.shape[-1]), dtype=msgs.dtype).index_add(0, index, msgs)
    x_q = summed @ w_q.T
    if single:
        return x_q[0]
    has_q = torch.zeros(num_groups, dtype=torch.bool)
    has_q[index] = True
    return x_q, has_q


def gamma_infuse(x_r: torch.Tensor, x_q: torch.Tensor | None, alpha: float,
                 has_q: torch.Tensor | None = None) -> torch.Tensor:
    """alpha * x_r + (1 - alpha) * x_q; rows without qualifiers keep x_r exactly."""
    if x_q is None:
        return x_r
    mixed = alpha * x_r + (1.0 - alpha) * x_q
    if has_q is None:
        return mixed
    return torch.where(has_q.unsqueeze(-1), mixed, x_r)


class StarELayer(nn.Module):
    def __init__(self, dim: int, generator: torch.Generator, aggregation: str = "sum"):
        super().__init__()
        self.w_in = nn.Parameter(uniform_(torch.empty(dim, dim), dim, generator))
        self.w_out = nn.Parameter(uniform_(torch.empty(dim, dim), dim, generator))
        self.w_loop = nn.Parameter(uniform_(torch.empty(dim, dim), dim, generator))
        self.w_rel = nn.Parameter(uniform_(torch.empty(dim, dim), dim, generator))
        self.w_q = nn.Parameter(uniform_(torch.empty(dim, dim), dim, generator))
        self.aggregation = aggregation
        if aggregation == "attention":
            self.attention = nn.Parameter(uniform_(torch.empty(dim), dim, generator))
        else:
            self.register_parameter("attention", None)


def stare_forward(ctx: GraphContext, x: torch.Tensor, rel: torch.Tensor, layers,
                  num_relations: int, alpha: float = 0.8, use_qualifiers: bool = True,
                  activation: str = "tanh", degree_norm: bool = True,
                  compose_mode: str = "mult", slope: float = 0.2):
    """Run the StarE layers over ``ctx``; returns updated (entity, relation) vectors.

    With ``use_qualifiers=False`` this is CompGCN: relation messages are the
    plain relation vectors.
    """
    if x.shape[-1] != rel.shape[-1]:
        raise ValueError(f"width mismatch: entities {x.shape[-1]}, relations {rel.shape[-1]}")
    if x.shape[0] != ctx.num_entities:
        raise ValueError(f"expected {ctx.num_entities} entity rows, got {x.shape[0]}")
    act = ACTIVATIONS[activation]
    n = ctx.num_entities
    loop = 2 * num_relations
    degree = torch.ones(n, dtype=x.dtype)
    degree = degree.index_add(0, ctx.heads, torch.ones(len(ctx.heads), dtype=x.dtype))
    degree = degree.index_add(0, ctx.tails, torch.ones(len(ctx.tails), dtype=x.dtype))
    for layer in layers:
        r_fwd = rel[ctx.relations]
        r_inv = rel[ctx.relations + num_relations]
        if use_qualifiers and ctx.num_statements:
            x_q, has_q = aggregate_qualifiers(
                rel[ctx.qual_rel], x[ctx.qual_ent], layer.w_q, index=ctx.qual_stmt,
                num_groups=ctx.num_statements, mode=layer.aggregation,
                attention=layer.attention, slope=slope, compose_mode=compose_mode)
            r_fwd = gamma_infuse(r_fwd, x_q, alpha, has_q)
            r_inv = gamma_infuse(r_inv, x_q, alpha, has_q)
        # messages arriving at tails (W_in) and at heads via the inverse relation (W_out)
        m_in = compose(x[ctx.heads], r_fwd, compose_mode) @ layer.w_in.T
        m_out = compose(x[ctx.tails], r_inv, compose_mode) @ layer.w_out.T
        m_loop = compose(x, rel[loop].expand_as(x), compose_mode) @ layer.w_loop.T
        agg = m_loop.index_add(0, ctx.tails, m_in).index_add(0, ctx.heads, m_out)
        if degree_norm:
            agg = agg / degree.unsqueeze(-1)
        x = act(agg)
        rel = rel @ layer.w_rel.T
    return x, rel
