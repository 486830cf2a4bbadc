"""Seeded random search over the allowed hyperparameter ranges."""
from __future__ import annotations

import json
import math
import os
from typing import Any

import numpy as np

from .evaluation import to_csv
from .model import ConfigError
from .pipeline import RunConfig, load_data, run_train

# Allowed values per "section.field". Learning rate is a log-uniform interval.
SEARCH_SPACE: dict[str, Any] = {
    "model.stare_layers": [2, 3],
    "model.dim": list(range(32, 257, 32)),
    "model.ff_dim": list(range(512, 1025, 64)),
    "model.heads": [2, 4],
    "model.transformer_layers": [2, 3, 4],
    "model.aggregation": ["sum", "attention"],
    "model.alpha": [0.8],
    "model.dropout": [0.1, 0.2, 0.3, 0.4, 0.5],
    "model.attention_slope": [0.1, 0.2, 0.3, 0.4],
    "train.regime": ["sLCWA", "LCWA"],
    "train.label_smoothing": [0.1, 0.15],
    "train.batch_size": list(range(128, 1025, 64)),
    "train.lr": {"log_uniform": [1e-4, 1.0]},
}


def _close_member(v, allowed) -> bool:
    for a in allowed:
        if isinstance(a, float) or isinstance(v, float):
            if isinstance(a, (int, float)) and isinstance(v, (int, float)) and math.isclose(a, v):
                return True
        elif a == v:
            return True
    return False


def validate_ranges(ranges: dict) -> dict:
    """Check every range is a subset of :data:`SEARCH_SPACE`; returns a normalized copy."""
    out = {}
    for key, given in ranges.items():
        if key not in SEARCH_SPACE:
            raise ConfigError(f"sweep.{key}", "not a searchable hyperparameter")
        allowed = SEARCH_SPACE[key]
        if isinstance(allowed, dict):
            if isinstance(given, dict):
                lo, hi = given.get("log_uniform", [None, None])
                a_lo, a_hi = allowed["log_uniform"]
                if lo is None or hi is None or not (a_lo <= lo <= hi <= a_hi) or lo >= a_hi:
                    raise ConfigError(f"sweep.{key}", f"log_uniform bounds must lie in [{a_lo}, {a_hi})")
                out[key] = {"log_uniform": [float(lo), float(hi)]}
                continue
            values = given if isinstance(given, list) else [given]
            lo, hi = allowed["log_uniform"]
            if not values or any(not (lo <= float(v) < hi) for v in values):
                raise ConfigError(f"sweep.{key}", f"values must lie in [{lo}, {hi})")
            out[key] = list(values)
            continue
        values = given if isinstance(given, list) else [given]
        bad = [v for v in values if not _close_member(v, allowed)]
        if not values or bad:
            raise ConfigError(f"sweep.{key}", f"values {bad or values} outside the allowed set {allowed}")
        out[key] = list(values)
    return out


def sample_trial(ranges: dict, rng: np.random.Generator) -> dict:
    """One assignment; keys are visited in sorted order so the draw is reproducible."""
    out = {}
    for key in sorted(ranges):
        given = ranges[key]
        if isinstance(given, dict):
            lo, hi = given["log_uniform"]
            out[key] = float(math.exp(rng.uniform(math.log(lo), math.log(hi)))) if hi > lo else float(lo)
        else:
            out[key] = given[int(rng.integers(len(given)))]
    if out.get("train.regime") is not None:
        out["train.loss"] = None  # re-derived from the sampled regime
    return out


def trial_config(base: RunConfig, assignment: dict) -> RunConfig:
    raw = base.to_dict()
    raw["sweep"] = {}
    for key, value in assignment.items():
        section, name = key.split(".", 1)
        raw[section][name] = value
    return RunConfig.from_dict(raw)


def run_sweep(base: RunConfig, trials: int, seed: int, out_dir: str) -> list[dict]:
    """Train ``trials`` sampled configurations; leaderboard sorted by validation Hits@10."""
    if trials < 1:
        raise ConfigError("trials", "must be >= 1")
    ranges = validate_ranges(base.sweep)
    rng = np.random.default_rng(seed)
    data = load_data(base.data)
    rows = []
    for i in range(trials):
        assignment = sample_trial(ranges, rng)
        run = trial_config(base, assignment)
        trial_dir = os.path.join(out_dir, f"trial_{i:03d}")
        summary = run_train(run, trial_dir, data)
        valid = summary["splits"].get("valid", {}).get("metrics", {}).get("both", {})
        rows.append({"trial": i, "valid_hits@10": valid.get("hits@10", float("nan")),
                     "best_epoch": summary["best_epoch"],
                     "params": {k: v for k, v in assignment.items() if k != "train.loss"}})
    rows.sort(key=lambda r: (-_num(r["valid_hits@10"]), r["trial"]))
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "leaderboard.json"), "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
    flat = [{"rank": n + 1, "trial": r["trial"], "valid_hits@10": round(_num(r["valid_hits@10"]), 6),
             "best_epoch": r["best_epoch"], "params": json.dumps(r["params"], sort_keys=True)}
            for n, r in enumerate(rows)]
    with open(os.path.join(out_dir, "leaderboard.csv"), "w", encoding="utf-8") as fh:
        fh.write(to_csv(flat))
    return rows


def _num(v) -> float:
    return -math.inf if v is None or v != v else float(v)
