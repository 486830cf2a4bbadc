import json
import os

import pytest
from hypothesis import given, settings, strategies as st

from hyperind.kg import RawStatement, Statement, intern, parse_statement_file, to_raw
from hyperind.splits import (FI, SI, SPLIT_NAMES, AuditFailure, SamplerConfig, SplitBundle, UnsatisfiableSplitError,
                             audit, build_fi_split, build_si_split, format_stats_row, load_split_dir,
                             write_split_dir)
from hyperind.synthetic import community_graph


def _labels(bundle, graph, name):
    return [[r.head, r.relation, r.tail, [list(p) for p in r.qualifiers]]
            for r in (to_raw(s, graph.entities, graph.relations) for s in bundle.split(name))]


@pytest.mark.parametrize("golden,builder", [("fi_kg40_seed7.json", build_fi_split),
                                            ("si_kg30_seed3.json", build_si_split)])
def test_matches_reference_golden(golden_dir, golden, builder):
    with open(os.path.join(golden_dir, golden)) as fh:
        gold = json.load(fh)
    case = dict(gold["case"])
    graph = intern(parse_statement_file(os.path.join(golden_dir, case.pop("file"))))
    bundle = builder(graph, SamplerConfig(**case))
    for name in SPLIT_NAMES:
        assert _labels(bundle, graph, name) == gold["splits"][name], name


@pytest.fixture(scope="module")
def kg1000():
    return intern(community_graph(1000, seed=0))


def test_two_components_disjoint_by_construction():
    raws = [RawStatement(f"a{i}", "r", f"a{i + 1}") for i in range(10)]
    raws += [RawStatement(f"b{i}", "r", f"b{i + 1}", (("q", f"b{i + 2}"),)) for i in range(10)]
    raws += [RawStatement("a0", "q", "a1")]
    g = intern(raws)
    b = build_fi_split(g, SamplerConfig(seed=0, n=1, k=20, m=1, l=20))
    assert audit(b).passed
    train_ents = {e for s in b.train for e in s.entities()}
    for s in b.inference + b.valid + b.test:
        assert not s.entities() & train_ents


def test_fi_determinism(kg1000):
    cfg = SamplerConfig(seed=11)
    assert build_fi_split(kg1000, cfg) == build_fi_split(kg1000, cfg)


def test_si_determinism(kg1000):
    cfg = SamplerConfig(seed=11)
    assert build_si_split(kg1000, cfg) == build_si_split(kg1000, cfg)


def test_fi_ratios_with_large_pool(kg1000):
    b = build_fi_split(kg1000, SamplerConfig(seed=2, n=5, k=1, m=20, l=2))
    n = len(b.inference) + len(b.valid) + len(b.test)
    assert n >= 300
    for part, ratio in zip((b.inference, b.valid, b.test), (0.55, 0.2, 0.25)):
        assert abs(len(part) / n - ratio) <= 0.02


def _si_graph():
    # entities sorted by id: h0..h5 train-ish; the split is controlled by hand below
    return intern([RawStatement("s0", "r", "s1", (("q", "s2"),)),
                   RawStatement("s1", "r", "s2"),
                   RawStatement("s0", "r", "u_test", (("q", "s1"), ("q", "u_valid"))),
                   RawStatement("u_test", "r", "u_test2"),
                   RawStatement("s2", "q", "u_valid")])


def test_partition_prefix_slices():
    g = _si_graph()
    from hyperind import splits as sp

    class Rng:
        def permutation(self, n):
            return list(range(n))

    order = sorted(g.statement_entities())
    assert [g.entities.label(i) for i in order] == ["s0", "s1", "s2", "u_test", "u_valid", "u_test2"]
    parts = sp._partition(Rng(), order, (0.5, 1 / 6, 1 / 3))
    assert [[g.entities.label(i) for i in p] for p in parts] == [["s0", "s1", "s2"], ["u_test"], ["u_valid", "u_test2"]]


def test_si_statement_rules(monkeypatch):
    g = _si_graph()
    from hyperind import splits as sp

    labels = {"train": {"s0", "s1", "s2"}, "valid": {"u_valid"}, "test": {"u_test", "u_test2"}}

    def fake_partition(rng, items, fractions):
        return [[i for i in items if g.entities.label(i) in labels[k]] for k in ("train", "valid", "test")]

    monkeypatch.setattr(sp, "_partition", fake_partition)
    b = build_si_split(g, SamplerConfig(seed=0))
    test = [to_raw(s, g.entities, g.relations) for s in b.test]
    # both endpoints in the test split: excluded
    assert all({r.head, r.tail} != {"u_test", "u_test2"} for r in test)
    # train-entity qualifier kept, valid-split qualifier dropped
    assert test == [RawStatement("s0", "r", "u_test", (("q", "s1"),))]
    valid = [to_raw(s, g.entities, g.relations) for s in b.valid]
    assert valid == [RawStatement("s2", "q", "u_valid")] or valid == []
    assert b.inference == []
    assert audit(b).passed


def test_audit_flags_train_entity_in_fi_test(kg1000):
    b = build_fi_split(kg1000, SamplerConfig(seed=4))
    leak = next(iter(b.train))
    bad_stmt = Statement(leak.head, leak.relation, b.test[0].tail, ())
    broken = SplitBundle(FI, b.train, b.valid, b.test + [bad_stmt], b.inference, b.seen_entities)
    report = audit(broken)
    assert not report.passed
    assert "fi_entity_disjointness" in report.failed()
    assert bad_stmt in report.checks["fi_entity_disjointness"].counterexamples


def test_audit_flags_unseen_relation(kg1000):
    b = build_fi_split(kg1000, SamplerConfig(seed=4))
    s = b.valid[0]
    bad = s._replace(relation=10_000)
    broken = SplitBundle(FI, b.train, [bad] + b.valid[1:], b.test, b.inference, b.seen_entities)
    assert "relation_coverage" in audit(broken).failed()


def test_audit_counterexamples_capped(kg1000):
    b = build_fi_split(kg1000, SamplerConfig(seed=4))
    bad = [s._replace(relation=10_000) for s in b.valid]
    broken = SplitBundle(FI, b.train, bad, b.test, b.inference, b.seen_entities)
    assert len(audit(broken).checks["relation_coverage"].counterexamples) == min(5, len(bad))


def test_audit_flags_si_both_unseen(kg1000):
    b = build_si_split(kg1000, SamplerConfig(seed=4))
    unseen = [e for e in b.entity_splits["test"]][:2]
    bad = Statement(unseen[0], b.train[0].relation, unseen[1], ())
    broken = SplitBundle(SI, b.train, b.valid, b.test + [bad], [], b.seen_entities, b.entity_splits)
    assert "si_one_unseen_endpoint" in audit(broken).failed()


def test_unsatisfiable_when_everything_connected():
    g = intern([RawStatement("a", "r", "b"), RawStatement("b", "r", "c")])
    with pytest.raises(UnsatisfiableSplitError):
        build_fi_split(g, SamplerConfig(seed=0, n=1, k=5))


def test_builders_never_return_failing_bundle(monkeypatch, kg1000):
    from hyperind import splits as sp
    from hyperind.splits import AuditReport, CheckResult
    monkeypatch.setattr(sp, "audit", lambda bundle: AuditReport({"forced": CheckResult(False, ["x"])}))
    with pytest.raises(AuditFailure):
        build_fi_split(kg1000, SamplerConfig(seed=0))


@pytest.mark.parametrize("ratios", [(0.5, 0.5, 0.1), (0.0, 0.5, 0.5), (0.5, 0.5)])
def test_sampler_config_rejects_bad_ratios(ratios):
    with pytest.raises(ValueError):
        SamplerConfig(seed=0, ratios=ratios)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_builders_pass_audit_for_any_seed(seed):
    g = intern(community_graph(300, communities=6, entities_per_community=30, seed=5))
    for builder in (build_fi_split, build_si_split):
        try:
            b = builder(g, SamplerConfig(seed=seed, n=3, m=3))
        except UnsatisfiableSplitError:
            continue
        assert audit(b).passed
        if b.mode == SI:
            for s in b.valid + b.test:
                assert (s.head in b.seen_entities) != (s.tail in b.seen_entities)


def _unordered(raw):
    return raw._replace(qualifiers=frozenset(raw.qualifiers))


def test_split_dir_roundtrip(tmp_path, kg1000):
    b = build_fi_split(kg1000, SamplerConfig(seed=3))
    write_split_dir(tmp_path / "fi", b, kg1000.entities, kg1000.relations)
    assert sorted(os.listdir(tmp_path / "fi")) == ["inference.txt", "stats.json", "test.txt", "train.txt",
                                                   "valid.txt"]
    b2, ents, rels = load_split_dir(tmp_path / "fi")
    assert b2.mode == FI
    for name in SPLIT_NAMES:
        assert ([_unordered(to_raw(s, ents, rels)) for s in b2.split(name)]
                == [_unordered(to_raw(s, kg1000.entities, kg1000.relations)) for s in b.split(name)])
    stats = json.loads((tmp_path / "fi" / "stats.json").read_text())
    assert stats["seed"] == 3 and stats["train"]["statements"] == len(b.train)


def test_si_dir_has_no_inference(tmp_path, kg1000):
    b = build_si_split(kg1000, SamplerConfig(seed=3))
    write_split_dir(tmp_path / "si", b, kg1000.entities, kg1000.relations)
    assert not (tmp_path / "si" / "inference.txt").exists()
    b2, _, _ = load_split_dir(tmp_path / "si")
    assert b2.mode == SI and audit(b2).passed


def test_stats_row_format():
    stats = {"train": {"statements": 7785, "q_percent": 100.0, "entities": 5783, "relations": 92}}
    assert format_stats_row(stats, "train") == "7,785 (100%) | 5783 | 92"
