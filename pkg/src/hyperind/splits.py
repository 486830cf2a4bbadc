"""Semi-inductive (SI) and fully-inductive (FI) benchmark split construction."""
from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .kg import (Statement, StatementGraph, Vocabulary, intern_statements,
                 parse_statement_file, qualifier_percentage, to_raw,
                 write_statement_file)

FI, SI = "FI", "SI"
SPLIT_NAMES = ("train", "valid", "test", "inference")
MAX_COUNTEREXAMPLES = 5


class UnsatisfiableSplitError(RuntimeError):
    pass


class AuditFailure(RuntimeError):
    def __init__(self, report: "AuditReport"):
        self.report = report
        super().__init__("split audit failed:\n" + report.format())


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    n: int = 10           # FI: train seed entities
    k: int = 1            # FI: train hop radius
    m: int = 10           # FI: inductive seed entities
    l: int = 1            # FI: inductive hop radius
    ratios: tuple[float, float, float] = (0.55, 0.20, 0.25)  # inference / valid / test
    si_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)  # train / valid / test entities

    def __post_init__(self):
        for name in ("ratios", "si_fractions"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if len(vals) != 3 or any(v <= 0 for v in vals) or abs(sum(vals) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be three positive fractions summing to 1, got {vals}")
        for name in ("n", "m"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("k", "l"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class SplitBundle:
    mode: str
    train: list[Statement]
    valid: list[Statement]
    test: list[Statement]
    inference: list[Statement] = field(default_factory=list)
    seen_entities: frozenset[int] = frozenset()
    # SI only: the statement-entity partition, keyed train / valid / test
    entity_splits: dict[str, frozenset[int]] | None = None
    config: dict | None = None

    def split(self, name: str) -> list[Statement]:
        return getattr(self, name)

    def stats(self) -> dict:
        out = {}
        for name in SPLIT_NAMES:
            stmts = self.split(name)
            out[name] = {
                "statements": len(stmts),
                "q_percent": qualifier_percentage(stmts),
                "entities": len(_entities(stmts)),
                "relations": len(_relations(stmts)),
            }
        if self.mode == FI:
            inf_main = set()
            for s in self.inference:
                inf_main.update((s.head, s.tail))
            missing = set()
            for s in self.valid + self.test:
                missing |= s.entities() - inf_main
            out["eval_entities_outside_inference_triples"] = len(missing)
        return out


def _entities(stmts: Iterable[Statement]) -> set[int]:
    out: set[int] = set()
    for s in stmts:
        out |= s.entities()
    return out


def _relations(stmts: Iterable[Statement]) -> set[int]:
    out: set[int] = set()
    for s in stmts:
        out |= s.relations()
    return out


def _neighbourhood(statements: Sequence[Statement], seeds: Iterable[int], hops: int) -> set[int]:
    """Entities within ``hops`` undirected main-edge steps of the seeds."""
    nbrs: dict[int, set[int]] = {}
    for s in statements:
        nbrs.setdefault(s.head, set()).add(s.tail)
        nbrs.setdefault(s.tail, set()).add(s.head)
    dist = {e: 0 for e in seeds}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        if dist[u] == hops:
            continue
        for v in sorted(nbrs.get(u, ())):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return set(dist)


def _touching(statements: Sequence[Statement], nodes: set[int]) -> list[Statement]:
    return [s for s in statements if s.head in nodes or s.tail in nodes]


def _sample(rng: np.random.Generator, population: Iterable[int], count: int) -> list[int]:
    pool = sorted(population)
    count = min(count, len(pool))
    idx = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in idx]


def _partition(rng: np.random.Generator, items: list, fractions: Sequence[float]) -> list[list]:
    """Seeded shuffle, then prefix slicing by cumulative fractions."""
    order = rng.permutation(len(items))
    shuffled = [items[i] for i in order]
    bounds = [0]
    acc = 0.0
    for f in fractions[:-1]:
        acc += f
        bounds.append(int(round(acc * len(items))))
    bounds.append(len(items))
    return [shuffled[a:b] for a, b in zip(bounds, bounds[1:])]


def build_fi_split(graph: StatementGraph, cfg: SamplerConfig) -> SplitBundle:
    if not graph.statements:
        raise UnsatisfiableSplitError("graph has no statements")
    rng = np.random.default_rng(cfg.seed)
    stmts = list(graph.statements)

    seeds = _sample(rng, graph.statement_entities(), cfg.n)
    train_nodes = _neighbourhood(stmts, seeds, cfg.k)
    train = _touching(stmts, train_nodes)
    seen = frozenset(_entities(train))
    train_set = set(train)

    # candidate inductive statements share no entity with the training graph
    pool = [s for s in stmts if s not in train_set and not (s.entities() & seen)]
    pool_entities = {e for s in pool for e in (s.head, s.tail)}
    if not pool_entities:
        raise UnsatisfiableSplitError("no statements left that are entity-disjoint from train")
    ind_seeds = _sample(rng, pool_entities, cfg.m)
    ind_nodes = _neighbourhood(pool, ind_seeds, cfg.l)
    train_rels = _relations(train)
    inductive = [s for s in _touching(pool, ind_nodes) if s.relations() <= train_rels]
    if not inductive:
        raise UnsatisfiableSplitError("inductive pool is empty after relation filtering")

    inference, valid, test = _partition(rng, inductive, cfg.ratios)
    bundle = SplitBundle(FI, train, valid, test, inference, seen, config=_echo(cfg, FI))
    _check(bundle)
    return bundle


def build_si_split(graph: StatementGraph, cfg: SamplerConfig) -> SplitBundle:
    if not graph.statements:
        raise UnsatisfiableSplitError("graph has no statements")
    rng = np.random.default_rng(cfg.seed)
    stmts = list(graph.statements)
    ents = sorted(graph.statement_entities())
    parts = _partition(rng, ents, cfg.si_fractions)
    e_train, e_valid, e_test = (frozenset(p) for p in parts)

    def restrict(s: Statement, allowed: frozenset[int]) -> Statement:
        return Statement(s.head, s.relation, s.tail,
                         tuple(p for p in s.qualifiers if p[1] in allowed))

    train = _dedup(restrict(s, e_train) for s in stmts
                   if s.head in e_train and s.tail in e_train)
    if not train:
        raise UnsatisfiableSplitError("no statement has both endpoints in the train entity split")
    seen = frozenset(_entities(train))
    train_rels = _relations(train)

    def eval_split(e_split: frozenset[int]) -> list[Statement]:
        allowed = e_train | e_split
        out = []
        for s in stmts:
            if (s.head in seen and s.tail in e_split) or (s.tail in seen and s.head in e_split):
                s = restrict(s, allowed)
                if s.relations() <= train_rels:
                    out.append(s)
        return _dedup(out)

    valid, test = eval_split(e_valid), eval_split(e_test)
    if not (valid or test):
        raise UnsatisfiableSplitError("no statement connects a seen entity with a held-out one")
    bundle = SplitBundle(SI, train, valid, test, [], seen,
                         entity_splits={"train": e_train, "valid": e_valid, "test": e_test},
                         config=_echo(cfg, SI))
    _check(bundle)
    return bundle


def _dedup(stmts: Iterable[Statement]) -> list[Statement]:
    return list(dict.fromkeys(stmts))


def _echo(cfg: SamplerConfig, mode: str) -> dict:
    d = asdict(cfg)
    d["ratios"] = list(cfg.ratios)
    d["si_fractions"] = list(cfg.si_fractions)
    d["mode"] = mode
    return d


def _check(bundle: SplitBundle) -> None:
    report = audit(bundle)
    if not report.passed:
        raise AuditFailure(report)


@dataclass
class CheckResult:
    passed: bool
    counterexamples: list = field(default_factory=list)


@dataclass
class AuditReport:
    checks: dict[str, CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c.passed]

    def format(self) -> str:
        lines = []
        for name, res in self.checks.items():
            lines.append(f"{'PASS' if res.passed else 'FAIL'} {name}")
            for ex in res.counterexamples:
                lines.append(f"    {ex}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {k: {"passed": v.passed, "counterexamples": [list(map(_jsonable, e)) if isinstance(e, tuple) else e
                                                           for e in v.counterexamples]}
                for k, v in self.checks.items()}


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(v) for v in x]
    return x


def _check_all(stmts: Iterable, pred) -> CheckResult:
    bad = []
    for s in stmts:
        if not pred(s):
            bad.append(s)
            if len(bad) >= MAX_COUNTEREXAMPLES:
                break
    return CheckResult(not bad, bad)


def audit(bundle: SplitBundle) -> AuditReport:
    """Check every split invariant; each check lists up to 5 offending statements."""
    checks: dict[str, CheckResult] = {}
    seen = bundle.seen_entities
    evals = bundle.valid + bundle.test
    checks["seen_entities_match_train"] = CheckResult(
        set(seen) == _entities(bundle.train),
        sorted(set(seen) ^ _entities(bundle.train))[:MAX_COUNTEREXAMPLES])

    train_rels = _relations(bundle.train)
    checks["relation_coverage"] = _check_all(evals + bundle.inference,
                                             lambda s: s.relations() <= train_rels)

    if bundle.mode == FI:
        checks["fi_entity_disjointness"] = _check_all(
            bundle.inference + evals, lambda s: not (s.entities() & seen))
        inf, valid, test = set(bundle.inference), set(bundle.valid), set(bundle.test)
        checks["fi_statement_disjointness"] = _check_all(
            evals, lambda s: s not in inf and not (s in valid and s in test))
        # qualifier entities must come from the unseen graph
        checks["qualifier_entities"] = _check_all(
            evals, lambda s: all(e not in seen for _, e in s.qualifiers))
    elif bundle.mode == SI:
        checks["si_inference_empty"] = CheckResult(not bundle.inference, bundle.inference[:MAX_COUNTEREXAMPLES])
        checks["si_one_unseen_endpoint"] = _check_all(
            evals, lambda s: (s.head in seen) != (s.tail in seen))
        splits = bundle.entity_splits
        if splits is not None:
            def in_split(name):
                part = splits[name]
                allowed = splits["train"] | part

                def ok(s):
                    unseen = s.tail if s.head in seen else s.head
                    return unseen in part and all(e in allowed for _, e in s.qualifiers)
                return ok
            checks["si_split_entities"] = CheckResult(True)
            checks["qualifier_entities"] = CheckResult(True)
            for name in ("valid", "test"):
                res = _check_all(bundle.split(name), in_split(name))
                if not res.passed:
                    checks["si_split_entities"] = res
            checks["train_qualifier_entities"] = _check_all(
                bundle.train, lambda s: all(e in splits["train"] for _, e in s.qualifiers))
        else:
            # without the partition, the allowed set is seen entities plus the split's unseen endpoints
            for name in ("valid", "test"):
                stmts = bundle.split(name)
                allowed = set(seen) | {e for s in stmts for e in (s.head, s.tail)}
                res = _check_all(stmts, lambda s: all(e in allowed for _, e in s.qualifiers))
                if name == "valid" or not res.passed:
                    checks["qualifier_entities"] = res
    else:
        checks["mode"] = CheckResult(False, [bundle.mode])
    return AuditReport(checks)


# -- split directories --------------------------------------------------------

def write_split_dir(out_dir, bundle: SplitBundle, entities: Vocabulary, relations: Vocabulary) -> None:
    os.makedirs(out_dir, exist_ok=True)
    names = ["train", "valid", "test"] + (["inference"] if bundle.mode == FI else [])
    for name in names:
        write_statement_file(os.path.join(out_dir, f"{name}.txt"),
                             (to_raw(s, entities, relations) for s in bundle.split(name)))
    stats = bundle.stats()
    stats["mode"] = bundle.mode
    stats["seed"] = (bundle.config or {}).get("seed")
    stats["config"] = bundle.config
    if bundle.entity_splits is not None:
        stats["entity_split_sizes"] = {k: len(v) for k, v in bundle.entity_splits.items()}
    with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
    if bundle.entity_splits is not None:
        with open(os.path.join(out_dir, "entity_splits.json"), "w", encoding="utf-8") as fh:
            json.dump({k: sorted(entities.label(e) for e in v) for k, v in bundle.entity_splits.items()},
                      fh, indent=1)


def load_split_dir(path) -> tuple[SplitBundle, Vocabulary, Vocabulary]:
    """Load a split directory; vocabularies follow first appearance, train first."""
    entities, relations = Vocabulary(), Vocabulary()
    parts = {}
    for name in SPLIT_NAMES:
        fn = os.path.join(path, f"{name}.txt")
        raws = parse_statement_file(fn) if os.path.exists(fn) else []
        parts[name] = intern_statements(raws, entities, relations)
    mode = FI if os.path.exists(os.path.join(path, "inference.txt")) else SI
    config = None
    stats_fn = os.path.join(path, "stats.json")
    if os.path.exists(stats_fn):
        with open(stats_fn, encoding="utf-8") as fh:
            stats = json.load(fh)
        mode = stats.get("mode", mode)
        config = stats.get("config")
    splits = None
    es_fn = os.path.join(path, "entity_splits.json")
    if os.path.exists(es_fn):
        with open(es_fn, encoding="utf-8") as fh:
            raw = json.load(fh)
        splits = {k: frozenset(entities.add(lbl) for lbl in v) for k, v in raw.items()}
    bundle = SplitBundle(mode, parts["train"], parts["valid"], parts["test"], parts["inference"],
                         frozenset(_entities(parts["train"])), entity_splits=splits, config=config)
    return bundle, entities, relations


def format_stats_row(stats: dict, name: str) -> str:
    """Render ``S (Q%) | E | R`` for one split."""
    s = stats[name]
    return f"{s['statements']:,} ({s['q_percent']:.0f}%) | {s['entities']} | {s['relations']}"
