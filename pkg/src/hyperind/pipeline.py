"""Run configuration and the train / evaluate / ablate steps shared by the CLI and the sweep."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

from .analysis import GLOBAL, STATEMENT, delta_mr, mask_reports_csv, qualifier_relations, ranks_by_qualifier_count
from .checkpoint import load_checkpoint, save_checkpoint
from .data import InductiveData
from .evaluation import DEFAULT_KS, TIE_POLICIES, evaluate, metrics_csv_row, to_csv
from .features import load_features, synthetic_features
from .model import ConfigError, LinkPredictor, ModelConfig
from .splits import FI, AuditFailure, audit, load_split_dir
from .training import TrainConfig, config_echo, train

SECTIONS = ("data", "split", "model", "train", "eval", "sweep")


@dataclass
class DataConfig:
    split_dir: str | None = None
    features: str | None = None  # TSV; else split_dir/features.tsv, else synthetic label-keyed features
    feature_dim: int = 32
    feature_seed: int = 0
    name: str | None = None

    @property
    def dataset(self) -> str:
        if self.name:
            return self.name
        return os.path.basename(os.path.normpath(self.split_dir)) if self.split_dir else "unnamed"


@dataclass
class EvalConfig:
    ks: tuple[int, ...] = DEFAULT_KS
    tie: str = "realistic"
    filtered: bool = True
    split: str = "test"
    mask_eval: bool = True  # ablation also masks the evaluated statements, not only the inference graph

    def validate(self, prefix: str = "eval") -> "EvalConfig":
        self.ks = tuple(int(k) for k in self.ks)
        if not self.ks or min(self.ks) < 1:
            raise ConfigError(f"{prefix}.ks", "must be a nonempty list of positive integers")
        # report columns need H@1, H@5 and H@10
        self.ks = tuple(sorted(set(self.ks) | set(DEFAULT_KS)))
        if self.tie not in TIE_POLICIES:
            raise ConfigError(f"{prefix}.tie", f"must be one of {TIE_POLICIES}")
        if self.split not in ("valid", "test"):
            raise ConfigError(f"{prefix}.split", "must be 'valid' or 'test'")
        return self


def _section(cls, d, prefix):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(prefix, "must be an object")
    known = {f.name for f in fields(cls)}
    for k in d:
        if k not in known:
            raise ConfigError(f"{prefix}.{k}", "unknown field")
    return cls(**d)


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: dict = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        for k in d:
            if k not in SECTIONS:
                raise ConfigError(k, "unknown section")
        cfg = cls(
            data=_section(DataConfig, d.get("data"), "data"),
            split=dict(d.get("split") or {}),
            model=ModelConfig.from_dict(d.get("model") or {}),
            train=TrainConfig.from_dict(d.get("train") or {}),
            eval=_section(EvalConfig, d.get("eval"), "eval").validate(),
            sweep=dict(d.get("sweep") or {}),
        )
        return cfg

    def to_dict(self) -> dict:
        out = {"data": asdict(self.data), "split": dict(self.split), "model": asdict(self.model),
               "train": config_echo(self.train), "eval": asdict(self.eval), "sweep": dict(self.sweep)}
        out["eval"]["ks"] = list(self.eval.ks)
        return out

    def check_data(self, data: InductiveData) -> None:
        if self.model.encoder == "stare" and (data.mode != FI or not data.bundle.inference):
            raise ConfigError("model.encoder", "stare needs a fully-inductive split with a nonempty inference graph")


def load_run_config(path: str | None, overrides: Sequence[str] = ()) -> RunConfig:
    raw: dict = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(path, f"invalid JSON: {exc}") from None
    return RunConfig.from_dict(apply_overrides(raw, overrides))


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``section.key=value`` overrides; values are parsed as JSON when possible."""
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        path, value = item.split("=", 1)
        keys = path.split(".")
        if len(keys) < 2:
            raise ConfigError(path, "override must name a section and a field")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = out
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(path, "cannot descend into a non-object")
        node[keys[-1]] = parsed
    return out


def load_data(cfg: DataConfig) -> InductiveData:
    if not cfg.split_dir:
        raise ConfigError("data.split_dir", "required")
    if not os.path.isdir(cfg.split_dir):
        raise ConfigError("data.split_dir", f"not a directory: {cfg.split_dir}")
    bundle, entities, relations = load_split_dir(cfg.split_dir)
    report = audit(bundle)
    if not report.passed:
        raise AuditFailure(report)
    features = cfg.features
    if not features and os.path.exists(os.path.join(cfg.split_dir, "features.tsv")):
        features = os.path.join(cfg.split_dir, "features.tsv")
    if features:
        feats = load_features(features, entities)
    else:
        feats = synthetic_features(entities, cfg.feature_dim, cfg.feature_seed)
    return InductiveData(bundle, entities, relations, feats)


def model_name(cfg: ModelConfig) -> str:
    if cfg.encoder == "linear":
        return "QBLP"
    return "StarE" if cfg.encoder_qualifiers else "CompGCN"


def build_model(run: RunConfig, data: InductiveData) -> LinkPredictor:
    run.check_data(data)
    return LinkPredictor(data.num_relations, data.features.dim, run.model, seed=run.train.seed)


def _finite(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and v != v else v) for k, v in d.items()}


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def evaluation_report(model, data: InductiveData, run: RunConfig, split: str | None = None) -> dict:
    split = split or run.eval.split
    ev = evaluate(model, data.split(split), data.eval_context(),
                  data.filter_index() if run.eval.filtered else None, ks=run.eval.ks, tie=run.eval.tie)
    return {"metrics": ev.metrics, "skipped": ev.skipped, "queries": len(ev.queries)}


def write_metrics(out_dir: str, run: RunConfig, reports: dict) -> None:
    """``metrics.json`` (per split, per side) and a ``metrics.csv`` row per split."""
    payload = {"model": model_name(run.model), "dataset": run.data.dataset, "qp": run.model.qp_slots,
               "splits": reports, "config": run.to_dict()}
    _write_json(os.path.join(out_dir, "metrics.json"), payload)
    rows = []
    for split, rep in reports.items():
        if "both" in rep["metrics"]:
            row = metrics_csv_row(payload["model"], run.data.dataset, run.model.qp_slots, rep["metrics"]["both"])
            rows.append({"split": split, **row})
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write(to_csv(rows))


def run_train(run: RunConfig, out_dir: str, data: InductiveData | None = None) -> dict:
    """Train, checkpoint and evaluate; returns the metrics payload written to ``out_dir``."""
    data = load_data(run.data) if data is None else data
    model = build_model(run, data)
    os.makedirs(out_dir, exist_ok=True)
    result = train(model, data, run.train, log_path=os.path.join(out_dir, "train_log.jsonl"))
    save_checkpoint(os.path.join(out_dir, "model"), model, data.entities, data.relations,
                    run.to_dict(), result.log)
    reports = {}
    for split in ("valid", "test"):
        if data.split(split):
            reports[split] = evaluation_report(model, data, run, split)
    write_metrics(out_dir, run, reports)
    summary = {"best_epoch": result.best_epoch, "stopped_epoch": result.stopped_epoch,
               "best_valid": result.best_metric, "splits": reports}
    _write_json(os.path.join(out_dir, "train_summary.json"), summary)
    return summary


def restore_model(run: RunConfig, data: InductiveData, checkpoint: str | None) -> LinkPredictor:
    """The checkpointed model, or a fresh seeded initialization when ``checkpoint`` is None."""
    if checkpoint is None:
        return build_model(run, data)
    model, manifest = load_checkpoint(checkpoint, data.relations)
    run.model = model.config
    run.check_data(data)
    return model


def run_eval(run: RunConfig, out_dir: str, checkpoint: str | None = None) -> dict:
    data = load_data(run.data)
    model = restore_model(run, data, checkpoint)
    os.makedirs(out_dir, exist_ok=True)
    reports = {run.eval.split: evaluation_report(model, data, run)}
    write_metrics(out_dir, run, reports)
    return reports


def run_ablate(run: RunConfig, out_dir: str, checkpoint: str | None = None,
               relations: Sequence[str] | None = None, scopes: Sequence[str] = (GLOBAL, STATEMENT)) -> list:
    data = load_data(run.data)
    model = restore_model(run, data, checkpoint)
    os.makedirs(out_dir, exist_ok=True)
    if relations:
        missing = [r for r in relations if r not in data.relations]
        if missing:
            raise ConfigError("relations", f"unknown relation label(s): {', '.join(missing)}")
        rel_ids = [data.relations.index(r) for r in relations]
    else:
        rel_ids = qualifier_relations(data, run.eval.split)
    reports = [delta_mr(model, data, r, scope, run.eval.split, run.eval.mask_eval, run.eval.tie)
               for r in rel_ids for scope in scopes]
    with open(os.path.join(out_dir, "masks.csv"), "w", encoding="utf-8") as fh:
        fh.write(mask_reports_csv(reports))
    _write_json(os.path.join(out_dir, "masks.json"), [_finite(asdict(r)) for r in reports])
    buckets = ranks_by_qualifier_count(model, data, run.eval.split, run.eval.tie)
    _write_json(os.path.join(out_dir, "rank_buckets.json"), {str(k): v for k, v in buckets.items()})
    return reports
