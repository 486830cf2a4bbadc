"""Losses, negative sampling and the sLCWA / LCWA training loops with early stopping."""
from __future__ import annotations

import copy
import json
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple, Sequence

import numpy as np
import torch
from torch.nn import functional as F

from .context import GraphContext
from .data import InductiveData
from .evaluation import evaluate
from .kg import Statement
from .model import HEAD, TAIL, ConfigError, LinkPredictor, Query, statement_queries

log = logging.getLogger(__name__)

REGIME_LOSS = {"sLCWA": "margin-ranking", "LCWA": "binary-cross-entropy"}
MAX_EPOCHS = {"FI": 1000, "SI": 600}


class NumericalError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    regime: str = "LCWA"
    loss: str | None = None  # derived from the regime when omitted
    margin: float = 1.0
    label_smoothing: float = 0.0
    negatives: int = 16
    lr: float = 1e-3
    batch_size: int = 128
    max_epochs: int | None = None  # FI 1000, SI 600
    patience: int = 200
    min_delta: float = 0.003
    frequency: int = 1
    metric: str = "hits@10"
    seed: int = 0
    optimizer: str = "adam"

    def validate(self, prefix: str = "train") -> "TrainConfig":
        def bad(name, msg):
            raise ConfigError(f"{prefix}.{name}", msg)
        if self.regime not in REGIME_LOSS:
            bad("regime", f"must be one of {sorted(REGIME_LOSS)}")
        if self.loss is None:
            self.loss = REGIME_LOSS[self.regime]
        if self.loss != REGIME_LOSS[self.regime]:
            bad("loss", f"{self.regime} pairs with {REGIME_LOSS[self.regime]}, got {self.loss}")
        if self.margin < 0:
            bad("margin", "must be >= 0")
        if not 0.0 <= self.label_smoothing < 1.0:
            bad("label_smoothing", "must lie in [0, 1)")
        for name in ("negatives", "batch_size", "patience", "frequency"):
            if getattr(self, name) < 1:
                bad(name, "must be >= 1")
        if self.max_epochs is not None and self.max_epochs < 0:
            bad("max_epochs", "must be >= 0")
        if self.lr < 0:
            bad("lr", "must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            bad("optimizer", "must be 'adam' or 'sgd'")
        return self

    @classmethod
    def from_dict(cls, d: dict, prefix: str = "train") -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(f"{prefix}.{k}", "unknown field")
        return cls(**d).validate(prefix)


def _tensor(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=torch.float64)


# -- losses --------------------------------------------------------------------

def margin_ranking_loss(pos, neg, margin: float) -> torch.Tensor:
    """mean(max(0, margin + f(neg) - f(pos)))."""
    pos, neg = _tensor(pos), _tensor(neg)
    return torch.clamp(margin + neg - pos, min=0).mean()


def smooth_labels(labels: torch.Tensor, eps: float) -> torch.Tensor:
    return labels * (1.0 - eps) + eps / labels.shape[-1]


def bce_loss(logits, labels, eps: float = 0.0) -> torch.Tensor:
    """Binary cross-entropy over all candidates, labels smoothed by ``eps``."""
    logits = _tensor(logits)
    labels = torch.as_tensor(labels, dtype=logits.dtype)
    return F.binary_cross_entropy_with_logits(logits, smooth_labels(labels, eps), reduction="mean")


# -- negative sampling -----------------------------------------------------------

def negative_sample(statement: Statement, candidates: Sequence[int], count: int,
                    rng: np.random.Generator, side: str | None = None) -> list[Statement]:
    """Corrupt head or tail (random side unless given) with uniform candidates != original."""
    cands = np.asarray(sorted(set(int(c) for c in candidates)), dtype=np.int64)
    out = []
    for _ in range(count):
        sd = side or (TAIL if rng.random() < 0.5 else HEAD)
        orig = statement.tail if sd == TAIL else statement.head
        pool = cands[cands != orig]
        if len(pool) == 0:
            raise ValueError(f"no candidate other than {orig} to corrupt the {sd} with")
        e = int(pool[rng.integers(len(pool))])
        if sd == TAIL:
            out.append(statement._replace(tail=e))
        else:
            out.append(statement._replace(head=e))
    return out


# -- batches -----------------------------------------------------------------------

class LCWABatch(NamedTuple):
    queries: list[Query]
    targets: list[tuple[int, ...]]  # positive global ids per query


class SLCWABatch(NamedTuple):
    queries: list[Query]  # oriented so that the corrupted side is the target
    positives: list[int]
    negatives: list[int]


def lcwa_groups(statements: Sequence[Statement], num_relations: int) -> list[LCWABatch]:
    """One (query, positive targets) group per distinct (given, relation-row, qualifiers)."""
    groups: OrderedDict = OrderedDict()
    for q in statement_queries(statements, num_relations):
        key = (q.given, q.relation, q.qualifiers)
        if key not in groups:
            groups[key] = (q, [])
        groups[key][1].append(q.target)
    return [LCWABatch([q], [tuple(sorted(set(ts)))]) for q, ts in groups.values()]


def _merge_lcwa(items: Sequence[LCWABatch]) -> LCWABatch:
    return LCWABatch([q for it in items for q in it.queries], [t for it in items for t in it.targets])


def slcwa_batch(statements: Sequence[Statement], candidates: Sequence[int], negatives: int,
                rng: np.random.Generator, num_relations: int) -> SLCWABatch:
    qs, pos, neg = [], [], []
    for s in statements:
        for n in negative_sample(s, candidates, negatives, rng):
            if n.tail != s.tail:
                qs.append(Query(s.head, s.relation, s.tail, s.qualifiers, TAIL, 0))
                pos.append(s.tail)
                neg.append(n.tail)
            else:
                qs.append(Query(s.tail, s.relation + num_relations, s.head, s.qualifiers, HEAD, 0))
                pos.append(s.head)
                neg.append(n.head)
    return SLCWABatch(qs, pos, neg)


def compute_loss(model: LinkPredictor, ctx: GraphContext, batch, cfg: TrainConfig, encoded=None) -> torch.Tensor:
    x, rel = model.encode(ctx) if encoded is None else encoded
    if isinstance(batch, LCWABatch):
        pooled = model.pool(x, rel, ctx, batch.queries)
        scores = pooled @ x[ctx.candidates].T
        cand_pos = {int(e): i for i, e in enumerate(ctx.candidate_ids())}
        labels = torch.zeros_like(scores)
        for i, ts in enumerate(batch.targets):
            labels[i, [cand_pos[t] for t in ts]] = 1.0
        return bce_loss(scores, labels, cfg.label_smoothing)
    if isinstance(batch, SLCWABatch):
        # pool each distinct query once
        uniq: dict = {}
        idx = [uniq.setdefault((q.given, q.relation, q.qualifiers), len(uniq)) for q in batch.queries]
        first = {}
        for q, i in zip(batch.queries, idx):
            first.setdefault(i, q)
        pooled = model.pool(x, rel, ctx, [first[i] for i in range(len(uniq))])[torch.as_tensor(idx)]
        pos = (pooled * x[torch.as_tensor(ctx.local(batch.positives))]).sum(-1)
        neg = (pooled * x[torch.as_tensor(ctx.local(batch.negatives))]).sum(-1)
        return margin_ranking_loss(pos, neg, cfg.margin)
    raise TypeError(f"unsupported batch type {type(batch).__name__}")


def gradients(model: LinkPredictor, ctx: GraphContext, batch, cfg: TrainConfig) -> dict[str, torch.Tensor]:
    """Exact gradients of the configured loss for every named parameter."""
    model.zero_grad(set_to_none=True)
    loss = compute_loss(model, ctx, batch, cfg)
    if not torch.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss.item()}")
    loss.backward()
    out = {}
    for name, p in model.named_parameters():
        g = torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
        if not torch.isfinite(g).all():
            raise NumericalError(f"non-finite gradient in parameter block {name!r}")
        out[name] = g
    model.zero_grad(set_to_none=True)
    return out


# -- training loop ---------------------------------------------------------------

@dataclass
class TrainResult:
    model: LinkPredictor
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("nan")
    stopped_epoch: int = 0


def _improved(value: float, best: float | None, min_delta: float) -> bool:
    if best is None:
        return True
    if best > 0:
        return value > best * (1.0 + min_delta)
    return value > best


def train(model: LinkPredictor, data: InductiveData, cfg: TrainConfig, log_path=None,
          dtype: torch.dtype = torch.float32) -> TrainResult:
    """Train with early stopping on validation ``cfg.metric``; returns the best-validation model."""
    cfg.validate()
    max_epochs = cfg.max_epochs if cfg.max_epochs is not None else MAX_EPOCHS[data.mode]
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model.to(dtype)
    ctx = data.train_context(dtype)
    valid = data.split("valid")
    eval_ctx = data.eval_context(dtype=dtype) if valid else None
    triple_filter = data.filter_index()
    cands = ctx.candidate_ids().tolist()
    if cfg.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    else:
        opt = torch.optim.SGD(model.parameters(), lr=cfg.lr)
    lcwa = lcwa_groups(data.split("train"), model.num_relations) if cfg.regime == "LCWA" else None
    train_stmts = data.split("train")

    result = TrainResult(model)
    best, best_state, bad_evals = None, copy.deepcopy(model.state_dict()), 0
    fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        epoch = 0
        for epoch in range(1, max_epochs + 1):
            model.train()
            n_items = len(lcwa) if lcwa is not None else len(train_stmts)
            order = rng.permutation(n_items)
            total, batches = 0.0, 0
            for start in range(0, n_items, cfg.batch_size):
                sel = order[start:start + cfg.batch_size]
                if lcwa is not None:
                    batch = _merge_lcwa([lcwa[i] for i in sel])
                else:
                    batch = slcwa_batch([train_stmts[i] for i in sel], cands, cfg.negatives, rng,
                                        model.num_relations)
                opt.zero_grad(set_to_none=True)
                loss = compute_loss(model, ctx, batch, cfg)
                if not torch.isfinite(loss):
                    raise NumericalError(f"non-finite loss at epoch {epoch}")
                loss.backward()
                for name, p in model.named_parameters():
                    if p.grad is not None and not torch.isfinite(p.grad).all():
                        raise NumericalError(f"non-finite gradient in parameter block {name!r} at epoch {epoch}")
                opt.step()
                total += loss.item()
                batches += 1
            if epoch % cfg.frequency:
                continue
            record = {"epoch": epoch, "loss": total / max(batches, 1)}
            if eval_ctx is not None:
                ev = evaluate(model, valid, eval_ctx, triple_filter)
                value = ev.metrics["both"][cfg.metric] if ev.metrics else 0.0
                record["valid"] = ev.metrics.get("both", {})
                if _improved(value, best, cfg.min_delta):
                    best, bad_evals = value, 0
                    best_state = copy.deepcopy(model.state_dict())
                    result.best_epoch = epoch
                else:
                    bad_evals += 1
            else:
                best_state = copy.deepcopy(model.state_dict())
                result.best_epoch = epoch
            result.log.append(record)
            if fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
                fh.flush()
            log.debug("epoch %d %s", epoch, record)
            if bad_evals >= cfg.patience:
                break
        result.stopped_epoch = epoch
    finally:
        if fh:
            fh.close()
    model.load_state_dict(best_state)
    result.best_metric = float("nan") if best is None else best
    return result


def config_echo(cfg: TrainConfig) -> dict:
    return asdict(cfg)
