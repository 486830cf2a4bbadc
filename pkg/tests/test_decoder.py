import json
import os

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from hyperind.context import build_context
from hyperind.decoder import StatementDecoder, linearize, position_ids, score_candidates
from hyperind.features import FeatureTable
from hyperind.kg import Statement
from hyperind.model import LinkPredictor, ModelConfig, Query, score_statement_both_sides
from oracles.decoder_numpy import decode, hand_set_weights
from oracles.make_decoder_golden import inputs

D = torch.float64


def _load(decoder, blocks, position_table):
    with torch.no_grad():
        decoder.position.copy_(torch.as_tensor(position_table))
        for blk, p in zip(decoder.blocks, blocks):
            blk.ln1.weight.copy_(torch.as_tensor(p["ln1_w"]))
            blk.ln1.bias.copy_(torch.as_tensor(p["ln1_b"]))
            blk.ln2.weight.copy_(torch.as_tensor(p["ln2_w"]))
            blk.ln2.bias.copy_(torch.as_tensor(p["ln2_b"]))
            for name in ("qkv", "qkv_bias", "out", "out_bias", "ff1", "ff1_bias", "ff2", "ff2_bias"):
                getattr(blk, name).copy_(torch.as_tensor(p[name]))


@pytest.fixture
def micro(golden_dir):
    with open(os.path.join(golden_dir, "decoder_micro.json")) as fh:
        gold = json.load(fh)
    dec = StatementDecoder(gold["dim"], gold["layers"], gold["heads"], gold["ff_dim"],
                           torch.Generator().manual_seed(0)).double()
    tokens, positions, table = inputs()
    _load(dec, hand_set_weights(gold["dim"], gold["ff_dim"], gold["layers"]), table)
    dec.eval()
    return dec, gold, torch.as_tensor(tokens), torch.as_tensor(positions)


def test_micro_decoder_golden(micro):
    dec, gold, tokens, positions = micro
    out = dec(tokens, torch.ones(4, dtype=torch.bool), positions)
    assert np.allclose(out.detach().numpy(), gold["pooled_all_real"], atol=1e-10)


def test_micro_decoder_masked_golden(micro):
    dec, gold, tokens, positions = micro
    out = dec(tokens, torch.tensor([True, True, False, False]), positions)
    assert np.allclose(out.detach().numpy(), gold["pooled_two_real"], atol=1e-10)


def test_single_real_token_pools_to_its_output(micro):
    dec, _, tokens, positions = micro
    mask = torch.tensor([True, False, False, False])
    pooled = dec(tokens, mask, positions)
    x = (tokens + dec.position[positions])[:1].unsqueeze(0)
    for blk in dec.blocks:
        x = blk(x, mask[:1].unsqueeze(0))
    assert torch.allclose(pooled, x[0, 0], atol=1e-12)


def test_all_pad_rejected(micro):
    dec, _, tokens, positions = micro
    with pytest.raises(ValueError):
        dec(tokens, torch.zeros(4, dtype=torch.bool), positions)


def test_linearize_one_pair_two_slots():
    h, r, pad = torch.full((3,), 1.0), torch.full((3,), 2.0), torch.zeros(3)
    qr, qe = torch.full((3,), 3.0), torch.full((3,), 4.0)
    seq = linearize(h, r, [(qr, qe)], 2, pad)
    assert seq.vectors[:, 0].tolist() == [1, 2, 3, 4, 0, 0]
    assert seq.mask.tolist() == [True, True, True, True, False, False]
    assert seq.positions.tolist() == [0, 1, 2, 3, 2, 3]


def test_linearize_triple_only():
    seq = linearize(torch.ones(2), torch.ones(2), [(torch.ones(2), torch.ones(2))], 0, torch.zeros(2))
    assert seq.vectors.shape == (2, 2) and seq.mask.tolist() == [True, True]


def test_linearize_truncates_to_first_pairs():
    pairs = [(torch.full((1,), float(i)), torch.full((1,), 10.0 + i)) for i in range(3)]
    seq = linearize(torch.zeros(1), torch.zeros(1), pairs, 2, torch.full((1,), -1.0))
    assert seq.vectors[:, 0].tolist() == [0, 0, 0, 10, 1, 11]


def test_linearize_rejects_bad_slots():
    with pytest.raises(ValueError):
        linearize(torch.ones(1), torch.ones(1), [], 3, torch.zeros(1))


def test_position_ids():
    assert position_ids(2).tolist() == [0, 1, 2, 3, 2, 3]


def test_score_candidates_argmax():
    cands = torch.eye(4, dtype=D)
    assert int(score_candidates(cands[2], cands).argmax()) == 2


def test_score_candidates_zero():
    assert torch.equal(score_candidates(torch.zeros(3), torch.randn(5, 3)), torch.zeros(5))


def test_score_candidates_hand_dotted():
    pooled = torch.tensor([1.0, -2.0, 0.5], dtype=D)
    cands = torch.tensor([[1.0, 0, 0], [0, 1, 0], [2, 2, 2]], dtype=D)
    assert score_candidates(pooled, cands).tolist() == [1.0, -2.0, -1.0]


def test_score_candidates_errors():
    with pytest.raises(ValueError):
        score_candidates(torch.zeros(3), torch.zeros(0, 3))
    with pytest.raises(ValueError):
        score_candidates(torch.zeros(3), torch.zeros(2, 4))


def _toy(qp=2, encoder="linear", seed=0):
    n = 8
    feats = np.random.default_rng(seed).standard_normal((n, 6))
    stmts = [Statement.make(0, 0, 1, [(1, 2), (2, 3)]), Statement.make(1, 1, 4, [(2, 5)]),
             Statement.make(4, 0, 6), Statement.make(6, 2, 7, [(1, 0)])]
    ctx = build_context(stmts, range(n), FeatureTable(feats), dtype=D)
    model = LinkPredictor(3, 6, ModelConfig(encoder=encoder, dim=8, qp_slots=qp, heads=2, ff_dim=16),
                          seed=seed).double().eval()
    return model, ctx, stmts


@pytest.mark.parametrize("encoder", ["linear", "stare"])
def test_padding_invariance(encoder):
    model, ctx, _ = _toy(2, encoder)
    q = Query(1, 1, 4, ((2, 5),), "tail", 0)
    scores = [model.score(ctx, [q], qp_slots=qp) for qp in (2, 4, 6)]
    assert torch.equal(scores[0], scores[1]) and torch.equal(scores[0], scores[2])


def test_padding_invariance_in_mixed_batch():
    model, ctx, _ = _toy(2)
    a = Query(1, 1, 4, ((2, 5),), "tail", 0)
    b = Query(0, 0, 1, ((1, 2), (2, 3)), "tail", 0)
    alone = model.score(ctx, [a], qp_slots=6)[0]
    batched = model.score(ctx, [a, b], qp_slots=6)[0]
    assert torch.allclose(alone, batched, atol=1e-12)


@given(st.permutations([(1, 2), (2, 3), (1, 5)]))
def test_qualifier_order_invariance(perm):
    model, ctx, _ = _toy(4)
    base = model.score(ctx, [Query(0, 0, 1, tuple(sorted(perm)), "tail", 0)])
    perm_q = model.score(ctx, [Query(0, 0, 1, tuple(perm), "tail", 0)])
    assert torch.allclose(base, perm_q, atol=1e-12)


def test_one_to_n_matches_single_pair_scores():
    model, ctx, stmts = _toy(2)
    x, rel = model.encode(ctx)
    scores = model.score(ctx, [Query(0, 0, 1, stmts[0].qualifiers, "tail", 0)])[0]
    pooled = model.pool(x, rel, ctx, [Query(0, 0, 1, stmts[0].qualifiers, "tail", 0)])[0]
    for j in range(len(scores)):
        assert torch.allclose(scores[j], pooled @ x[j], atol=1e-12)


def test_triple_only_ignores_qualifiers():
    model, ctx, _ = _toy(0)
    s1, s2 = Statement.make(0, 0, 1, [(1, 2)]), Statement.make(0, 0, 1, [(2, 7)])
    assert torch.equal(model.score_statement(ctx, s1), model.score_statement(ctx, s2))


def test_both_sides_symmetric_toy():
    model, ctx, _ = _toy(2)
    with torch.no_grad():
        model.relations.weight[3] = model.relations.weight[0]  # x_{r^-1} = x_r
    s = Statement.make(2, 0, 2, [(1, 3)])
    tail, head = score_statement_both_sides(s, model, ctx)
    assert torch.equal(tail, head)


def test_both_sides_against_numpy_oracle():
    model, ctx, _ = _toy(2)
    s = Statement.make(0, 0, 1, [(1, 2), (2, 3)])
    tail, head = score_statement_both_sides(s, model, ctx)
    x, rel = (t.detach().numpy() for t in model.encode(ctx))
    dec = model.decoder
    blocks = [{"ln1_w": b.ln1.weight, "ln1_b": b.ln1.bias, "ln2_w": b.ln2.weight, "ln2_b": b.ln2.bias,
               "qkv": b.qkv, "qkv_bias": b.qkv_bias, "out": b.out, "out_bias": b.out_bias,
               "ff1": b.ff1, "ff1_bias": b.ff1_bias, "ff2": b.ff2, "ff2_bias": b.ff2_bias} for b in dec.blocks]
    blocks = [{k: v.detach().numpy() for k, v in p.items()} for p in blocks]
    table = dec.position.detach().numpy()
    for given_e, rel_row, out in ((0, 0, tail), (1, 3, head)):
        seq = np.stack([x[given_e], rel[rel_row], rel[1], x[2], rel[2], x[3]])
        pooled = decode(seq, [True] * 6, np.array([0, 1, 2, 3, 2, 3]), table, blocks, 2)
        assert np.allclose(out.detach().numpy(), x @ pooled, atol=1e-10)
