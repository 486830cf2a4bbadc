"""Qualifier analyses: ranks grouped by qualifier count and relation-masking delta MR."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .data import InductiveData
from .evaluation import evaluate, to_csv
from .kg import Statement
from .splits import SplitBundle

STATEMENT, GLOBAL = "statement", "global"


@dataclass
class MaskReport:
    relation: int
    label: str
    scope: str
    delta_mr: float  # MR_unmasked - MR_masked; negative means the qualifier helps
    affected: int
    frequency: int
    mr_unmasked: float
    mr_masked: float

    def row(self) -> dict:
        return {"relation_id": self.relation, "label": self.label, "scope": self.scope,
                "delta_mr": round(self.delta_mr, 4), "frequency": self.frequency, "affected": self.affected}


def ranks_by_qualifier_count(model, data: InductiveData, split: str = "test", tie: str = "realistic",
                             ctx=None) -> dict[int, list[float]]:
    """Head/tail ranks of each evaluated statement, bucketed by its qualifier-pair count."""
    stmts = data.split(split)
    ctx = data.eval_context() if ctx is None else ctx
    ev = evaluate(model, stmts, ctx, data.filter_index())
    buckets: dict[int, list[float]] = defaultdict(list)
    for q, r in zip(ev.queries, ev.ranks):
        buckets[len(stmts[q.statement].qualifiers)].append(r.get(tie))
    return dict(sorted(buckets.items()))


def mask_qualifier_relation(statements: Sequence[Statement], relation: int) -> list[Statement]:
    """Copy of ``statements`` with every qualifier pair using ``relation`` removed."""
    return [s if all(r != relation for r, _ in s.qualifiers)
            else s._replace(qualifiers=tuple(p for p in s.qualifiers if p[0] != relation))
            for s in statements]


def mask_bundle(bundle: SplitBundle, relation: int, splits: Sequence[str]) -> dict[str, list[Statement]]:
    return {name: mask_qualifier_relation(bundle.split(name), relation) for name in splits}


def _uses(s: Statement, relation: int) -> bool:
    return any(r == relation for r, _ in s.qualifiers)


def delta_mr(model, data: InductiveData, relation: int, scope: str = STATEMENT, split: str = "test",
             mask_eval: bool = True, tie: str = "realistic") -> MaskReport:
    """Mean-rank change from masking qualifier pairs with ``relation``.

    ``scope="statement"`` restricts MR to queries whose statement uses the
    relation as a qualifier; ``"global"`` uses every query of ``split``. The
    inference graph is always masked; ``mask_eval`` also masks the evaluated
    statements themselves.
    """
    if scope not in (STATEMENT, GLOBAL):
        raise ValueError(f"scope must be {STATEMENT!r} or {GLOBAL!r}")
    stmts = data.split(split)
    inference = data.bundle.inference
    label = data.relations.label(relation)
    frequency = sum(1 for s in list(inference) + list(stmts) for r, _ in s.qualifiers if r == relation)
    using = [i for i, s in enumerate(stmts) if _uses(s, relation)]
    if frequency == 0:
        return MaskReport(relation, label, scope, 0.0, 0, 0, float("nan"), float("nan"))

    triple_filter = data.filter_index()
    base = evaluate(model, stmts, data.eval_context(), triple_filter)
    masked_stmts = mask_qualifier_relation(stmts, relation) if mask_eval else list(stmts)
    masked_ctx = data.eval_context(inference=mask_qualifier_relation(inference, relation))
    masked = evaluate(model, masked_stmts, masked_ctx, triple_filter)

    keep = set(using)
    sel = [i for i, q in enumerate(base.queries) if scope == GLOBAL or q.statement in keep]
    affected = sum(1 for q in base.queries if q.statement in keep)
    if not sel:
        return MaskReport(relation, label, scope, 0.0, 0, frequency, float("nan"), float("nan"))
    mr_u = float(np.mean([base.ranks[i].get(tie) for i in sel]))
    mr_m = float(np.mean([masked.ranks[i].get(tie) for i in sel]))
    return MaskReport(relation, label, scope, mr_u - mr_m, affected, frequency, mr_u, mr_m)


def qualifier_relations(data: InductiveData, split: str = "test") -> list[int]:
    rels = set()
    for s in list(data.bundle.inference) + list(data.split(split)):
        rels.update(r for r, _ in s.qualifiers)
    return sorted(rels)


def mask_reports_csv(reports: Sequence[MaskReport]) -> str:
    return to_csv([r.row() for r in reports])


def report_dict(r: MaskReport) -> dict:
    return asdict(r)
