"""Canonical JSON helpers: stable key order, lossless floats, digests.

All on-disk artifacts go through these functions so that identical inputs
produce byte-identical files. Floats are emitted with Python's shortest
round-trip repr, which preserves the exact binary value.
"""

import hashlib
import json
from pathlib import Path

SCHEMA_VERSION = 1


def dumps(obj, pretty=True):
    if pretty:
        return json.dumps(obj, indent=2, sort_keys=False)
    return json.dumps(obj, separators=(",", ":"), sort_keys=False)


def dumps_line(obj):
    """Compact single-line encoding for JSONL records."""
    return json.dumps(obj, separators=(",", ":"), sort_keys=False)


def loads(text, path="<string>"):
    from .errors import SchemaError

    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"cannot parse JSON from {path}: {exc}") from exc


def dump_file(path, obj, pretty=True):
    Path(path).write_text(dumps(obj, pretty=pretty) + "\n")


def load_file(path):
    from .errors import SchemaError

    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read JSON from {path}: {exc}") from exc


def digest(obj):
    """Hex sha256 of the canonical (sorted-key, compact) encoding."""
    blob = json.dumps(obj, separators=(",", ":"), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def check_schema_version(doc, path, kind=None):
    from .errors import SchemaError

    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: missing/unsupported schema_version")
    if kind is not None and doc.get("kind") != kind:
        raise SchemaError(f"{path}: expected kind={kind!r}, got {doc.get('kind')!r}")
    return doc
