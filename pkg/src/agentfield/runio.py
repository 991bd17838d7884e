"""Deterministic run-directory output.

Every artifact is reproducible byte for byte from the configuration and the
seed: floats are written with ``repr`` (shortest round-trip form), JSON keys
are sorted, and no timestamps or environment data enter any file.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path


def _cell(value) -> str:
    """Canonical text for one CSV cell; bool checked before int."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    """Write dict rows under a fixed column order with canonical float text."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_cell(row[c]) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: Path, payload: dict) -> None:
    """Sorted-key, indented JSON with a trailing newline."""
    text = json.dumps(payload, sort_keys=True, indent=2, default=_coerce)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _coerce(obj):
    import numpy as np

    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def config_digest(canonical_text: str) -> str:
    """Hash of the canonical configuration text; names run directories."""
    return hashlib.sha256(canonical_text.encode("utf-8")).hexdigest()


def run_metadata(command: str, seed: int, digest: str, extra: dict | None = None) -> dict:
    """Identity block stored with every run; contains nothing time-dependent."""
    payload = {"command": command, "seed": seed, "config_sha256": digest}
    if extra:
        payload.update(extra)
    return payload


def write_schema(path: Path, files: dict[str, dict]) -> None:
    """Document every artifact in the run directory.

    ``files`` maps file name to a description block; CSV entries carry a
    ``columns`` mapping from column name to meaning.
    """
    write_json(path, {"files": files})


def csv_schema(description: str, columns: dict[str, str]) -> dict:
    return {"format": "csv", "description": description, "columns": columns}


def json_schema(description: str) -> dict:
    return {"format": "json", "description": description}
