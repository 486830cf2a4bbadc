"""Synthetic hyper-relational graphs for tests, demos and the acceptance suite."""
from __future__ import annotations

import numpy as np

from .features import FeatureTable, label_vector
from .kg import RawStatement, Vocabulary, intern_statements
from .splits import FI, SplitBundle, _entities

INFO_RELATION = "Q_info"
SOURCE_RELATION = "Q_src"
MAIN_RELATION = "P_main"


def community_graph(num_statements: int = 1000, communities: int = 10, entities_per_community: int = 60,
                    num_relations: int = 6, num_qualifier_relations: int = 4, qualifier_prob: float = 0.6,
                    max_qualifiers: int = 3, seed: int = 0) -> list[RawStatement]:
    """Random statements inside disjoint entity communities sharing one relation set.

    Qualifier entities are drawn from the statement's own community, so
    communities stay entity-disjoint and fully-inductive splits exist.
    """
    rng = np.random.default_rng(seed)
    out = []
    seen = set()
    while len(out) < num_statements:
        c = int(rng.integers(communities))
        h, t = rng.integers(entities_per_community, size=2)
        quals = ()
        if rng.random() < qualifier_prob:
            n = int(rng.integers(1, max_qualifiers + 1))
            quals = tuple((f"Q{int(rng.integers(num_qualifier_relations))}",
                           f"E{c}_{int(rng.integers(entities_per_community))}") for _ in range(n))
        raw = RawStatement(f"E{c}_{int(h)}", f"P{int(rng.integers(num_relations))}", f"E{c}_{int(t)}", quals)
        key = (raw.head, raw.relation, raw.tail, tuple(sorted(set(quals))))
        if key not in seen:
            seen.add(key)
            out.append(raw)
    return out


def _informative_block(prefix: str, count: int, qualifier_prob: float, rng: np.random.Generator,
                       reuse: float) -> list[RawStatement]:
    """Statements whose tail (head) is the twin of the Q_info (Q_src) qualifier entity.

    Entity pools are sized so each entity appears in about ``reuse`` statements.
    """
    pool = max(2, int(round(count * qualifier_prob / reuse)))
    noise_pool = max(2, int(round(count * (1 - qualifier_prob) / reuse)))
    out: list[RawStatement] = []
    seen = set()
    while len(out) < count:
        if rng.random() < qualifier_prob:
            i, j = (int(v) for v in rng.integers(pool, size=2))
            raw = RawStatement(f"{prefix}src{j}*", MAIN_RELATION, f"{prefix}info{i}*",
                               ((INFO_RELATION, f"{prefix}info{i}"), (SOURCE_RELATION, f"{prefix}src{j}")))
        else:
            h, t = (int(v) for v in rng.integers(noise_pool, size=2))
            raw = RawStatement(f"{prefix}x{h}", MAIN_RELATION, f"{prefix}y{t}")
        if raw not in seen:
            seen.add(raw)
            out.append(raw)
    return out


def twin_features(vocab: Vocabulary, dim: int, seed: int, noise: float = 0.1) -> FeatureTable:
    """Unit features where ``X*`` is a noisy copy of ``X``."""
    rows = []
    for label in vocab:
        if label.endswith("*"):
            v = label_vector(label[:-1], dim, seed) + noise * label_vector(label, dim, seed)
            rows.append(v / np.linalg.norm(v))
        else:
            rows.append(label_vector(label, dim, seed))
    return FeatureTable(np.stack(rows))


def qualifier_informative(num_train: int = 500, num_test: int = 100, qualifier_prob: float = 0.7,
                          ratios=(0.55, 0.20, 0.25), feature_dim: int = 32, reuse: float = 3.0,
                          seed: int = 0):
    """FI dataset where the tail is determined by one qualifier entity.

    A statement with qualifiers reads ``(src_i*, P_main, info_i*, {(Q_info, info_i),
    (Q_src, src_i)})``: its tail is the feature twin of the ``Q_info`` entity
    (and its head the twin of the ``Q_src`` entity). Statements without
    qualifiers connect random entities. The training graph and the inductive
    graph use disjoint entities; the inductive pool is split into
    inference / valid / test by ``ratios`` so that the test split has
    ``num_test`` statements.

    Returns ``(bundle, entities, relations, features)``.
    """
    rng = np.random.default_rng(seed)
    train_raw = _informative_block("T", num_train, qualifier_prob, rng, reuse)
    n_ind = int(round(num_test / ratios[2]))
    ind_raw = _informative_block("I", n_ind, qualifier_prob, rng, reuse)
    entities, relations = Vocabulary(), Vocabulary()
    for label in (MAIN_RELATION, INFO_RELATION, SOURCE_RELATION):
        relations.add(label)
    train = intern_statements(train_raw, entities, relations)
    ind = intern_statements(ind_raw, entities, relations)
    order = rng.permutation(len(ind))
    ind = [ind[i] for i in order]
    n_inf = int(round(ratios[0] * len(ind)))
    n_val = int(round((ratios[0] + ratios[1]) * len(ind))) - n_inf
    inference, valid, test = ind[:n_inf], ind[n_inf:n_inf + n_val], ind[n_inf + n_val:]
    bundle = SplitBundle(FI, train, valid, test, inference, frozenset(_entities(train)),
                         config={"generator": "qualifier_informative", "seed": seed})
    return bundle, entities, relations, twin_features(entities, feature_dim, seed)
