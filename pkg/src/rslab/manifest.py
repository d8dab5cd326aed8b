"""Run manifest: config digest, output hashes, atomic write protocol.

Outputs are written to a temp file in the target directory and moved into
place with os.replace, so a crash never leaves a partial CSV visible.
The manifest is always written last.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from datetime import datetime, timezone

from . import __version__


def config_digest(canonical_text: str) -> str:
    return hashlib.sha256(canonical_text.encode("utf-8")).hexdigest()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write_text(path, text):
    """Write text atomically: temp file in the same directory + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(x) -> str:
    """17 significant digits: round-trips any double, locale-free."""
    return format(float(x), ".17g")


def write_csv(path, columns, rows):
    """Fixed column order, '.' decimal, 17 significant digits."""
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            val = row[col]
            if isinstance(val, str):
                cells.append(val)
            elif isinstance(val, bool):
                cells.append("true" if val else "false")
            elif isinstance(val, (int,)) and not isinstance(val, bool):
                cells.append(str(val))
            else:
                cells.append(format_float(val))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if v == v and abs(v) != float("inf") else repr(v)
    return obj


def write_json(path, doc):
    atomic_write_text(path, json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n")


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(out_dir, command, canonical_config, seed, workers,
                   output_files, started, warnings=(), status="ok"):
    """Hash every output file and persist the manifest (written last)."""
    records = []
    for name in output_files:
        full = os.path.join(out_dir, name)
        records.append({
            "file": name,
            "sha256": file_sha256(full),
            "bytes": os.path.getsize(full),
        })
    doc = {
        "command": command,
        "config_digest": config_digest(canonical_config),
        "seed": int(seed),
        "version": __version__,
        "workers": int(workers),
        "started": started,
        "finished": utc_now(),
        "outputs": records,
        "warnings": list(warnings),
        "status": status,
    }
    path = os.path.join(out_dir, "manifest.json")
    write_json(path, doc)
    return doc
