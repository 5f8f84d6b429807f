"""CSV/JSON interchange with atomic writes and versioned records."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .model_core import InputError

FORMAT_VERSION = "1.0"


def atomic_write_text(path, text: str):
    """Write-temp-then-rename so interrupted runs never leave partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload: dict):
    payload = {"format_version": FORMAT_VERSION, **payload}
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    payload = json.loads(Path(path).read_text())
    version = payload.get("format_version", "")
    major = version.split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise InputError(f"{path}: unsupported format_version {version!r}")
    return payload


def read_matrix_csv(path) -> np.ndarray:
    """Comma-separated matrix; optional header row; errors carry 1-based lines."""
    rows = []
    width = None
    start = 1
    with open(path) as fh:
        lines = fh.readlines()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        cells = [c.strip() for c in line.split(",")]
        if lineno == 1:
            try:
                [float(c) for c in cells]
            except ValueError:
                start = 2
                continue  # header row
        try:
            vals = [float(c) for c in cells]
        except ValueError as exc:
            raise InputError(f"{path}: line {lineno}: {exc}") from None
        if any(not np.isfinite(v) for v in vals):
            raise InputError(f"{path}: line {lineno}: non-finite value")
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise InputError(
                f"{path}: line {lineno}: expected {width} columns, got {len(vals)}"
            )
        rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows)


def read_modules_csv(path, p: int):
    """Two-column (node_label, module_id) CSV -> ordered module labels."""
    from .netmetrics import ModuleAssignment

    labels = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != 2:
                raise InputError(f"{path}: line {lineno}: expected 2 columns")
            if lineno == 1 and not cells[0].lstrip("-").isdigit():
                continue  # header
            try:
                node = int(cells[0])
                module = int(cells[1])
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from None
            labels[node] = module
    missing = [i for i in range(p) if i not in labels]
    if missing:
        raise InputError(f"{path}: missing module labels for nodes {missing[:10]}")
    return ModuleAssignment(labels=[labels[i] for i in range(p)])
