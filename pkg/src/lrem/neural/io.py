"""Text serialization of trained networks."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..dataset import NormStats
from .inn import DnnModel, InnModel

FORMAT_VERSION = 1


def _arrays(params):
    return [{"shape": list(p.shape), "values": p.ravel(order="C").tolist()} for p in params]


def _load_into(params, stored):
    if len(params) != len(stored):
        raise ValueError("parameter count mismatch in model file")
    for p, s in zip(params, stored):
        if list(p.shape) != s["shape"]:
            raise ValueError(f"shape mismatch {p.shape} vs {s['shape']}")
        p[...] = np.asarray(s["values"], dtype=float).reshape(s["shape"])


def model_to_dict(model) -> dict:
    d = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "seed": model.seed,
        "width": model.width,
        "hidden": model.hidden,
        "params": _arrays(model.params),
        "norm": model.norm.to_dict() if model.norm is not None else None,
    }
    if model.kind == "inn":
        d.update(n_in=model.layout.n_in, n_out=model.layout.n_out, n_blocks=len(model.blocks),
                 alpha=model.alpha, permutations=[p.tolist() for p in model.perms])
    else:
        d.update(n_in=model.net.sizes[0], n_out=model.net.sizes[-1])
    return d


def model_from_dict(d: dict):
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {d.get('format_version')}")
    if d["kind"] == "inn":
        model = InnModel(d["n_in"], d["n_out"], d["n_blocks"], d["width"], d["hidden"],
                         d["alpha"], d["seed"])
        model.perms = [np.asarray(p, dtype=int) for p in d["permutations"]]
    elif d["kind"] == "dnn":
        model = DnnModel(d["n_in"], d["n_out"], d["width"], d["hidden"], d["seed"])
    else:
        raise ValueError(f"unknown model kind {d['kind']!r}")
    _load_into(model.params, d["params"])
    model.norm = NormStats.from_dict(d["norm"]) if d.get("norm") else None
    return model


def save_model(model, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model)))
    return path


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text()))
