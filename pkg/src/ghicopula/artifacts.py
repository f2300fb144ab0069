"""Versioned JSON artifacts for fitted models."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .bounds import BoundsModel
from .copulas import CopulaSpec
from .errors import ArtifactVersionMismatch
from .marginals import MarginalModel

SCHEMA_VERSION = 1


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=1, default=_default)


def content_hash(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_default)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_artifact(path, kind: str, payload: dict, config_hash: str | None = None) -> str:
    """Write ``payload`` with a header; returns the payload hash."""
    digest = content_hash(payload)
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind, "config_hash": config_hash,
           "content_hash": digest, "payload": payload}
    Path(path).write_text(canonical_json(doc) + "\n")
    return digest


def read_artifact(path, kind: str | None = None) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ArtifactVersionMismatch(
            f"{path}: schema_version {doc.get('schema_version')!r}, this build reads {SCHEMA_VERSION}")
    if kind is not None and doc.get("kind") != kind:
        raise ArtifactVersionMismatch(f"{path}: expected a {kind!r} artifact, found {doc.get('kind')!r}")
    return doc


def copulas_payload(intraday: dict[str, dict[int, CopulaSpec]], noon: dict[str, CopulaSpec]) -> dict:
    return {
        "intraday": {fam: {str(j): s.to_dict() for j, s in sorted(specs.items())} for fam, specs in intraday.items()},
        "noon": {fam: s.to_dict() for fam, s in noon.items()},
    }


def copulas_from_payload(payload: dict):
    intraday = {fam: {int(j): CopulaSpec.from_dict(s) for j, s in specs.items()}
                for fam, specs in payload["intraday"].items()}
    noon = {fam: CopulaSpec.from_dict(s) for fam, s in payload["noon"].items()}
    return intraday, noon


def load_bounds(path) -> BoundsModel:
    return BoundsModel.from_dict(read_artifact(path, "bounds")["payload"])


def load_marginals(path) -> MarginalModel:
    return MarginalModel.from_dict(read_artifact(path, "marginals")["payload"])
