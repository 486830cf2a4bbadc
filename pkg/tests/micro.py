"""The gradient-check micro-model: d_r = 8, 20 entities, 1 StarE layer, 2 Transformer layers."""
import numpy as np
import torch

from hyperind.context import build_context
from hyperind.features import FeatureTable
from hyperind.kg import Statement
from hyperind.model import LinkPredictor, ModelConfig
from hyperind.training import TrainConfig, lcwa_groups, slcwa_batch, _merge_lcwa

NUM_ENTITIES, NUM_RELATIONS, FEATURE_DIM = 20, 3, 6


def micro_setup(regime, seed=0):
    rng = np.random.default_rng(seed)
    stmts = []
    while len(stmts) < 24:
        h, t = (int(v) for v in rng.integers(NUM_ENTITIES, size=2))
        q = [(int(rng.integers(NUM_RELATIONS)), int(rng.integers(NUM_ENTITIES))) for _ in range(rng.integers(0, 3))]
        s = Statement.make(h, int(rng.integers(NUM_RELATIONS)), t, q)
        if s not in stmts:
            stmts.append(s)
    feats = FeatureTable(rng.standard_normal((NUM_ENTITIES, FEATURE_DIM)))
    ctx = build_context(stmts, range(NUM_ENTITIES), feats, dtype=torch.float64)
    cfg = ModelConfig(encoder="stare", dim=8, qp_slots=2, stare_layers=1, transformer_layers=2, heads=2, ff_dim=16)
    model = LinkPredictor(NUM_RELATIONS, FEATURE_DIM, cfg, seed=seed).double()
    tcfg = TrainConfig(regime=regime, label_smoothing=0.1 if regime == "LCWA" else 0.0, negatives=2).validate()
    if regime == "LCWA":
        batch = _merge_lcwa(lcwa_groups(stmts[:8], NUM_RELATIONS))
    else:
        batch = slcwa_batch(stmts[:8], range(NUM_ENTITIES), 2, np.random.default_rng(seed), NUM_RELATIONS)
    return model, ctx, batch, tcfg
