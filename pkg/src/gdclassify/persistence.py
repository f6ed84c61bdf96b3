"""Versioned JSON documents for fitted models.

Documents are written with sorted keys and a fixed indent, and floats are
stored with their shortest round-tripping representation, so loading a file
and saving it again reproduces it byte for byte.
"""
from __future__ import annotations

import json

from .dgd import DGDModel
from .errors import SchemaError
from .hmgd import HMGDTree

SCHEMA_VERSION = 1


def dgd_to_dict(model: DGDModel, class_names=None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "dgd",
        "C": model.class_count,
        "D": model.dim,
        "A": float(model.scale),
        "alphas": [float(x) for x in model.alphas],
        "shapes": [[[float(a), float(b)] for a, b in zip(ra, rb)]
                   for ra, rb in zip(model.a, model.b)],
    }
    if class_names is not None:
        doc["class_names"] = [str(c) for c in class_names]
    return doc


def _check_version(doc, kind):
    if not isinstance(doc, dict):
        raise SchemaError("model document must be a JSON object")
    version = doc.get("schema_version")
    if not isinstance(version, int):
        raise SchemaError("model document has no integer schema_version")
    if version > SCHEMA_VERSION:
        raise SchemaError(f"model schema_version {version} is newer than the supported "
                          f"version {SCHEMA_VERSION}; upgrade gdclassify to read it")
    if doc.get("kind") != kind:
        raise SchemaError(f"expected a {kind!r} document, got kind={doc.get('kind')!r}")


def dgd_from_dict(doc) -> DGDModel:
    _check_version(doc, "dgd")
    try:
        shapes = doc["shapes"]
        model = DGDModel(doc["alphas"], [[p[0] for p in row] for row in shapes],
                         [[p[1] for p in row] for row in shapes], doc["A"])
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError(f"malformed dgd document: {exc}") from None
    if model.class_count != doc["C"] or model.dim != doc["D"]:
        raise SchemaError("dgd document sizes disagree with its shapes")
    return model


def hmgd_to_dict(tree: HMGDTree, class_names=None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "hmgd",
        "L": 2,
        "K": tree.K,
        "M": tree.M,
        "A": float(tree.scale),
        "root": dgd_to_dict(tree.root),
        "nodes": [{"gate": dgd_to_dict(g), "experts": [dgd_to_dict(e) for e in row]}
                  for g, row in zip(tree.inner, tree.experts)],
    }
    if class_names is not None:
        doc["class_names"] = [str(c) for c in class_names]
    return doc


def hmgd_from_dict(doc) -> HMGDTree:
    _check_version(doc, "hmgd")
    try:
        root = dgd_from_dict(doc["root"])
        inner = [dgd_from_dict(n["gate"]) for n in doc["nodes"]]
        experts = [[dgd_from_dict(e) for e in n["experts"]] for n in doc["nodes"]]
        tree = HMGDTree(root, inner, experts, doc["A"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed hmgd document: {exc}") from None
    if tree.K != doc["K"] or tree.M != list(doc["M"]):
        raise SchemaError("hmgd document structure disagrees with its nodes")
    return tree


def to_dict(model, class_names=None) -> dict:
    if isinstance(model, HMGDTree):
        return hmgd_to_dict(model, class_names)
    return dgd_to_dict(model, class_names)


def from_dict(doc):
    if not isinstance(doc, dict):
        raise SchemaError("model document must be a JSON object")
    kind = doc.get("kind")
    if kind == "hmgd":
        return hmgd_from_dict(doc)
    if kind == "dgd":
        return dgd_from_dict(doc)
    raise SchemaError(f"unknown model kind {kind!r}")


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def save(model, path, class_names=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(to_dict(model, class_names)))


def load_document(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not a JSON document ({exc})") from None


def load(path):
    """Load a model; returns ``(model, class_names or None)``."""
    doc = load_document(path)
    return from_dict(doc), doc.get("class_names")
