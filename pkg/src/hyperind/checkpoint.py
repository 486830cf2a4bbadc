"""Checkpoints: little-endian float32 tensor blob plus a JSON manifest."""
from __future__ import annotations

import hashlib
import json

import numpy as np
import torch

from .kg import Vocabulary
from .model import LinkPredictor, ModelConfig


def vocab_fingerprint(vocab: Vocabulary) -> str:
    h = hashlib.sha256()
    for label in vocab:
        h.update(label.encode("utf-8") + b"\n")
    return h.hexdigest()


def save_checkpoint(path_prefix, model: LinkPredictor, entities: Vocabulary | None = None,
                    relations: Vocabulary | None = None, config: dict | None = None,
                    history: list | None = None) -> tuple[str, str]:
    """Write ``<prefix>.bin`` and ``<prefix>.json``; returns both paths."""
    blob_path, manifest_path = f"{path_prefix}.bin", f"{path_prefix}.json"
    tensors = []
    offset = 0
    with open(blob_path, "wb") as fh:
        for name, t in model.state_dict().items():
            arr = t.detach().cpu().numpy().astype("<f4")
            fh.write(arr.tobytes())
            tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    manifest = {
        "format": "f32le",
        "num_relations": model.num_relations,
        "feature_dim": model.feature_dim,
        "model": {k: getattr(model.config, k) for k in model.config.__dataclass_fields__},
        "tensors": tensors,
        "vocab": {
            "entities": vocab_fingerprint(entities) if entities is not None else None,
            "relations": vocab_fingerprint(relations) if relations is not None else None,
        },
        "config": config,
        "history": history or [],
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return blob_path, manifest_path


def load_checkpoint(path_prefix, relations: Vocabulary | None = None) -> tuple[LinkPredictor, dict]:
    prefix = str(path_prefix)
    for ext in (".bin", ".json"):
        if prefix.endswith(ext):
            prefix = prefix[: -len(ext)]
    with open(f"{prefix}.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if relations is not None and manifest["vocab"]["relations"] not in (None, vocab_fingerprint(relations)):
        raise ValueError("checkpoint was trained with a different relation vocabulary")
    model = LinkPredictor(manifest["num_relations"], manifest["feature_dim"], ModelConfig(**manifest["model"]))
    flat = np.fromfile(f"{prefix}.bin", dtype="<f4")
    state = {}
    for t in manifest["tensors"]:
        n = int(np.prod(t["shape"])) if t["shape"] else 1
        state[t["name"]] = torch.from_numpy(flat[t["offset"]: t["offset"] + n].reshape(t["shape"]).astype(np.float32))
    model.load_state_dict(state)
    return model, manifest
