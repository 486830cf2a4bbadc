"""Filtered ranking and MR / MRR / Hits@k / AMR metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import torch

from .context import GraphContext
from .data import TripleFilter
from .kg import Statement
from .model import HEAD, TAIL, Query, statement_queries

DEFAULT_KS = (1, 5, 10)
TIE_POLICIES = ("realistic", "optimistic", "pessimistic")


class RankResult(NamedTuple):
    optimistic: float
    pessimistic: float
    realistic: float
    num_candidates: int  # after filtering, the true entity included
    side: str = TAIL

    def get(self, tie: str) -> float:
        return getattr(self, tie)


def rank(scores, true_index: int, filter_mask=None, side: str = TAIL) -> RankResult:
    """Rank of ``scores[true_index]`` among the unfiltered candidates.

    ``filter_mask[j]`` True removes candidate j from the comparison.
    """
    s = np.asarray(scores, dtype=np.float64)
    keep = np.ones(len(s), dtype=bool) if filter_mask is None else ~np.asarray(filter_mask, dtype=bool)
    if not keep[true_index]:
        raise ValueError(f"true candidate {true_index} is filtered out")
    target = s[true_index]
    opt = 1 + int(np.count_nonzero((s > target) & keep))
    pes = int(np.count_nonzero((s >= target) & keep))
    return RankResult(float(opt), float(pes), (opt + pes) / 2.0, int(keep.sum()), side)


def rank_batch(scores: np.ndarray, true_index: np.ndarray, filter_mask: np.ndarray | None = None,
               sides: Sequence[str] | None = None) -> list[RankResult]:
    scores = np.asarray(scores, dtype=np.float64)
    b = scores.shape[0]
    keep = np.ones_like(scores, dtype=bool) if filter_mask is None else ~np.asarray(filter_mask, dtype=bool)
    rows = np.arange(b)
    if not keep[rows, true_index].all():
        raise ValueError("true candidate is filtered out")
    target = scores[rows, true_index][:, None]
    opt = 1 + np.count_nonzero((scores > target) & keep, axis=1)
    pes = np.count_nonzero((scores >= target) & keep, axis=1)
    n = keep.sum(axis=1)
    sides = sides or [TAIL] * b
    return [RankResult(float(o), float(p), (o + p) / 2.0, int(c), sd)
            for o, p, c, sd in zip(opt, pes, n, sides)]


def metrics(results: Sequence[RankResult], ks: Sequence[int] = DEFAULT_KS, tie: str = "realistic") -> dict:
    """MR, MRR and Hits@k (fractions) plus AMR in percent."""
    if not results:
        raise ValueError("no rank results")
    if tie not in TIE_POLICIES:
        raise ValueError(f"tie policy must be one of {TIE_POLICIES}")
    ranks = np.array([r.get(tie) for r in results])
    expected = np.array([(r.num_candidates + 1) / 2.0 for r in results])
    out = {
        "mr": float(ranks.mean()),
        "mrr": float((1.0 / ranks).mean()),
        "amr": float(100.0 * ranks.mean() / expected.mean()),
        "count": len(results),
    }
    for k in ks:
        out[f"hits@{k}"] = float((ranks <= k).mean())
    return out


@dataclass
class Evaluation:
    queries: list[Query]
    ranks: list[RankResult]
    metrics: dict = field(default_factory=dict)
    skipped: int = 0

    def table_row(self, side: str = "both") -> str:
        m = self.metrics[side]
        return " | ".join(f"{v:.2f}" for v in
                          (m["amr"], 100 * m["mrr"], 100 * m["hits@1"], 100 * m["hits@5"], 100 * m["hits@10"]))


def summarize(ranks: Sequence[RankResult], ks=DEFAULT_KS, tie="realistic") -> dict:
    out = {}
    for name, sel in (("tail", TAIL), ("head", HEAD), ("both", None)):
        rs = [r for r in ranks if sel is None or r.side == sel]
        if rs:
            out[name] = metrics(rs, ks, tie)
    return out


@torch.no_grad()
def evaluate(model, statements: Sequence[Statement], ctx: GraphContext, triple_filter: TripleFilter | None,
             ks: Sequence[int] = DEFAULT_KS, tie: str = "realistic", sides=(TAIL, HEAD),
             batch_size: int = 256, encoded=None) -> Evaluation:
    """Rank every head/tail query of ``statements`` against ``ctx.candidates``.

    Queries whose answer is not a candidate (the unseen side in SI) are
    skipped and counted. ``triple_filter=None`` gives unfiltered ranks.
    """
    was_training = model.training
    model.eval()
    try:
        encoded = model.encode(ctx) if encoded is None else encoded
        cand_ids = ctx.candidate_ids()
        cand_pos = {int(e): i for i, e in enumerate(cand_ids)}
        queries = [q for q in statement_queries(statements, model.num_relations, sides) if q.target in cand_pos]
        skipped = len(statements) * len(sides) - len(queries)
        ranks: list[RankResult] = []
        for start in range(0, len(queries), batch_size):
            chunk = queries[start:start + batch_size]
            scores = model.score(ctx, chunk, encoded).double().numpy()
            true_idx = np.array([cand_pos[q.target] for q in chunk])
            mask = np.zeros(scores.shape, dtype=bool)
            if triple_filter is not None:
                for i, q in enumerate(chunk):
                    for e in triple_filter.known(q.given, q.relation, model.num_relations):
                        j = cand_pos.get(e)
                        if j is not None and e != q.target:
                            mask[i, j] = True
            ranks += rank_batch(scores, true_idx, mask, [q.side for q in chunk])
    finally:
        model.train(was_training)
    ev = Evaluation(queries, ranks, summarize(ranks, ks, tie) if ranks else {}, skipped)
    return ev


METRIC_COLUMNS = ("AMR", "MRR", "H@1", "H@5", "H@10")


def metrics_csv_row(model_name: str, dataset: str, qp_slots: int, m: dict) -> dict:
    return {"model": model_name, "dataset": dataset, "qp": qp_slots,
            "AMR": round(m["amr"], 2), "MRR": round(100 * m["mrr"], 2),
            "H@1": round(100 * m["hits@1"], 2), "H@5": round(100 * m["hits@5"], 2),
            "H@10": round(100 * m["hits@10"], 2)}


def to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()
