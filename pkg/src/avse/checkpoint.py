"""Trained-model checkpoints: a directory holding the parameters, a JSON
manifest (model config, training settings, corpus hash) and the loss history."""

from __future__ import annotations

import hashlib
from pathlib import Path

from . import storage
from .errors import ValidationError
from .models import GenerativeModel, ModelConfig, build_model

PARAMS_FILE = "params.bin"
MANIFEST_FILE = "manifest.json"
HISTORY_FILE = "history.tsv"


def save_checkpoint(out_dir, model: GenerativeModel, history=(), extra: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.save_arrays(out / PARAMS_FILE, model.named_params())
    manifest = {"model": model.config.to_dict(), **(extra or {})}
    manifest["params_sha256"] = file_digest(out / PARAMS_FILE)
    storage.write_json(out / MANIFEST_FILE, manifest)
    with open(out / HISTORY_FILE, "w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain\tvalid\n")
        for row in history:
            fh.write(f"{row['epoch']}\t{row['train']!r}\t{row['valid']!r}\n")
    return out


def load_checkpoint(ckpt_dir) -> tuple[GenerativeModel, dict]:
    root = Path(ckpt_dir)
    if not (root / MANIFEST_FILE).is_file() or not (root / PARAMS_FILE).is_file():
        raise FileNotFoundError(f"{root} is not a checkpoint directory")
    manifest = storage.read_json(root / MANIFEST_FILE)
    config = ModelConfig(**manifest["model"])
    skeleton = build_model(config, zero=True)
    arrays = storage.load_arrays(root / PARAMS_FILE)
    expected = skeleton.named_params()
    if set(arrays) != set(expected):
        raise ValidationError(f"{root}: parameter names do not match a {config.kind} model")
    for name, value in arrays.items():
        if value.shape != expected[name].shape:
            raise ValidationError(f"{root}: {name} has shape {value.shape}, expected {expected[name].shape}")
    return skeleton.with_params(arrays), manifest


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
