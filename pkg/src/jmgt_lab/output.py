"""CSV and manifest writers.

Floats are printed with 17 significant digits, lines end in LF, and rows
keep the order the experiment produced them in, so identical runs give
byte-identical CSV files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, format_config

MANIFEST_NAME = "manifest.json"


def format_number(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def render_csv(header, rows) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def _write(path: Path, data: bytes):
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_outputs(out_dir, config: RunConfig, results, timings=None) -> dict:
    """Write one CSV per table plus the manifest; returns the manifest dict.

    With several results (a sweep) file stems get a ``runNNN_`` prefix.
    """
    out = Path(out_dir)
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    files = {}
    runs = []
    multi = len(results) > 1
    for idx, result in enumerate(results):
        prefix = f"run{idx:03d}_" if multi else ""
        names = []
        for stem, table in result.tables.items():
            name = f"{prefix}{stem}.csv"
            data = render_csv(table.header, table.rows)
            _write(out / name, data)
            files[name] = {"sha256": hashlib.sha256(data).hexdigest(), "rows": len(table.rows)}
            names.append(name)
        runs.append(
            {
                "index": idx,
                "kind": result.kind,
                "failed": result.failed,
                "message": result.message,
                "metrics": result.metrics,
                "timings": result.timings,
                "files": names,
            }
        )
    manifest = {
        "software": {"name": "jmgt_lab", "version": __version__},
        "config": config.values,
        "config_text": format_config(config),
        "seed": config.seed,
        "runs": runs,
        "files": files,
        "timings": timings or {},
    }
    manifest = _jsonable(manifest)
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    _write(out / MANIFEST_NAME, text.encode("utf-8"))
    return manifest
