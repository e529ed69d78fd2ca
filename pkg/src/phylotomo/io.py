"""File formats: sample and metric CSVs with JSON sidecars, model and tree configs."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .delays import DelayModel, SampleMatrix, _num, distribution_from_dict
from .errors import ValidationError
from .estimators import DistortedMetric
from .generate import make_tree
from .newick import parse_newick, to_newick
from .tree import RoutingTree


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    return repr(float(x))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def config_hash(cfg: Mapping) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def versions() -> dict:
    return {"phylotomo": __version__, "numpy": np.__version__}


def _write_matrix_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _read_matrix_csv(path: Path) -> tuple[tuple[int, ...], np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    if not rows:
        raise ValidationError(f"{path}: empty file")
    try:
        header = tuple(int(x) for x in rows[0])
        values = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if values.size == 0:
        values = values.reshape(0, len(header))
    return header, values


def write_samples(path, samples: SampleMatrix) -> None:
    path = Path(path)
    _write_matrix_csv(path, samples.leaves, samples.values)
    write_json(_sidecar(path), {"seed": samples.seed, "k": samples.k, "M": samples.bound})


def read_samples(path) -> SampleMatrix:
    path = Path(path)
    leaves, values = _read_matrix_csv(path)
    meta = read_json(_sidecar(path)) if _sidecar(path).exists() else {}
    if "k" in meta and meta["k"] != values.shape[0]:
        raise ValidationError(f"{path}: sidecar says k={meta['k']}, file has {values.shape[0]} rows")
    return SampleMatrix(leaves, values, seed=meta.get("seed"), bound=meta.get("M"))


def write_metric(path, metric: DistortedMetric) -> None:
    path = Path(path)
    _write_matrix_csv(path, metric.leaves, metric.values)
    write_json(
        _sidecar(path),
        {"tau": metric.tau, "M_tilde": metric.M_tilde, "k": metric.k, "seed": metric.seed},
    )


def read_metric(path) -> DistortedMetric:
    path = Path(path)
    leaves, values = _read_matrix_csv(path)
    meta = read_json(_sidecar(path))
    return DistortedMetric(
        leaves, values, meta["tau"], meta["M_tilde"], k=meta.get("k"), seed=meta.get("seed")
    )


def tree_from_config(spec, base: Path) -> RoutingTree:
    """``{"newick": str}``, ``{"file": path}`` or ``{"generator": {shape, n, seed}}``."""
    if not isinstance(spec, Mapping):
        raise ValidationError("tree config must be an object")
    if "newick" in spec:
        return parse_newick(spec["newick"])[0]
    if "file" in spec:
        path = base / spec["file"]
        if not path.exists():
            raise ValidationError(f"tree file not found: {path}")
        return parse_newick(path.read_text())[0]
    if "generator" in spec:
        g = spec["generator"]
        return make_tree(g.get("shape", "balanced"), int(g["n"]), g.get("seed"))
    raise ValidationError("tree config needs one of 'newick', 'file' or 'generator'")


def _edge_for(tree: RoutingTree, rec: Mapping):
    if "below" in rec:
        below = frozenset(rec["below"])
        for p, c in tree.edges:
            if tree.leaves_below(c) == below:
                return (p, c)
        raise ValidationError(f"no edge has exactly the leaves {sorted(below)} below it")
    if "edge" in rec:
        p, c = rec["edge"]
        return tree.edge_key(p, c)
    raise ValidationError("edge record needs 'below' or 'edge'")


def model_from_config(tree: RoutingTree, spec: Mapping) -> DelayModel:
    """Per-edge distributions from ``default`` plus ``edges`` overrides.

    ``M`` and ``f`` default to the largest support bound and the smallest
    edge variance.
    """
    if not isinstance(spec, Mapping):
        raise ValidationError("model config must be an object")
    dists = {}
    if "default" in spec:
        d = distribution_from_dict(spec["default"])
        dists = {e: d for e in tree.edges}
    for rec in spec.get("edges", []):
        dists[_edge_for(tree, rec)] = distribution_from_dict(rec)
    missing = [e for e in tree.edges if e not in dists]
    if missing:
        raise ValidationError(f"no distribution for edges {missing}; add a 'default'")
    bound = _num(spec["M"]) if "M" in spec else max(d.upper for d in dists.values())
    floor = _num(spec["f"]) if "f" in spec else min(d.central_moment(2) for d in dists.values())
    return DelayModel(tree, dists, bound, floor)


def model_to_config(model: DelayModel) -> dict:
    return {"tree": {"newick": to_newick(model.tree)}, "model": model.to_dict()}


def per_edge_setting(tree: RoutingTree, spec, key: str):
    """Resolve ``{"default": x, "edges": [{"below": [...], key: y}]}`` to an edge map."""
    if not isinstance(spec, Mapping):
        return {e: spec for e in tree.edges}
    out = {e: spec["default"] for e in tree.edges} if "default" in spec else {}
    for rec in spec.get("edges", []):
        out[_edge_for(tree, rec)] = rec[key]
    return out


__all__ = [
    "config_hash",
    "model_from_config",
    "model_to_config",
    "per_edge_setting",
    "read_json",
    "read_metric",
    "read_samples",
    "tree_from_config",
    "versions",
    "write_json",
    "write_metric",
    "write_samples",
]
