"""Entity feature tables: TSV ingestion and a deterministic synthetic featurizer."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .kg import Vocabulary


class FeatureFormatError(ValueError):
    pass


class MissingFeatureError(KeyError):
    def __init__(self, labels: list[str]):
        self.labels = labels
        shown = ", ".join(labels[:20]) + (" ..." if len(labels) > 20 else "")
        super().__init__(f"no features for {len(labels)} entities: {shown}")


@dataclass(frozen=True)
class FeatureTable:
    rows: np.ndarray  # (num_entities, dim), aligned with an entity vocabulary

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise FeatureFormatError(f"feature rows must be 2-d, got shape {rows.shape}")
        if not np.isfinite(rows).all():
            bad = np.unique(np.nonzero(~np.isfinite(rows))[0])
            raise FeatureFormatError(f"non-finite feature values in rows {bad[:10].tolist()}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]


def load_features(path, vocab: Vocabulary) -> FeatureTable:
    """Read ``label<TAB>v1<TAB>...<TAB>vd`` lines and align them to ``vocab``."""
    by_label: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            label, *vals = line.split("\t")
            if dim is None:
                dim = len(vals)
                if dim == 0:
                    raise FeatureFormatError(f"{path}:{lineno}: no feature values")
            elif len(vals) != dim:
                raise FeatureFormatError(f"{path}:{lineno}: expected {dim} values, got {len(vals)}")
            try:
                by_label[label] = np.array([float(v) for v in vals])
            except ValueError as exc:
                raise FeatureFormatError(f"{path}:{lineno}: {exc}") from None
    missing = [lbl for lbl in vocab if lbl not in by_label]
    if missing:
        raise MissingFeatureError(missing)
    if dim is None:
        return FeatureTable(np.zeros((0, 0)))
    return FeatureTable(np.stack([by_label[lbl] for lbl in vocab]) if len(vocab) else np.zeros((0, dim)))


def write_features(path, vocab: Vocabulary, table: FeatureTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for label, row in zip(vocab, table.rows):
            fh.write(label + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


def label_vector(label: str, dim: int, seed: int) -> np.ndarray:
    """Unit vector drawn from a generator keyed on (seed, sha256(label))."""
    key = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")
    v = np.random.default_rng([seed, key]).standard_normal(dim)
    return v / np.linalg.norm(v)


def synthetic_features(vocab: Iterable[str], dim: int, seed: int) -> FeatureTable:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    labels = list(vocab)
    if not labels:
        return FeatureTable(np.zeros((0, dim)))
    return FeatureTable(np.stack([label_vector(lbl, dim, seed) for lbl in labels]))
