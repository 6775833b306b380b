"""Delimited text formats shared by the library and the CLI.

Every emitted file starts with '#' metadata lines: the artifact version and
a JSON snapshot of the resolved configuration. Floats are written with
repr(), which round-trips IEEE doubles exactly, so a simulate/identify
cycle through files loses no precision.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ._version import __version__
from .errors import DataError

__all__ = [
    "format_float",
    "write_timeseries",
    "read_timeseries",
    "write_matrices",
    "read_matrices",
    "write_run_records",
    "write_summary",
]


def format_float(value: float) -> str:
    return repr(float(value))


def _header_lines(config: dict | None) -> list[str]:
    lines = [f"# sidshrink {__version__}"]
    if config is not None:
        lines.append("# config: " + json.dumps(_sanitize(config), sort_keys=True))
    return lines


def _sanitize(obj):
    """JSON-compatible copy: non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _read_lines(path):
    """Strip '#' prefix lines; return (meta dict, [(line_no, text), ...])."""
    meta = {}
    body = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                text = line[1:].strip()
                if text.startswith("config:"):
                    payload = text[len("config:"):].strip()
                    try:
                        meta = json.loads(payload)
                    except json.JSONDecodeError as exc:
                        raise DataError(
                            f"{path}:{line_no}: bad config header: {exc}") from exc
                continue
            if line.strip():
                body.append((line_no, line))
    return meta, body


def write_timeseries(path, u: np.ndarray, y: np.ndarray, config: dict | None = None) -> None:
    u = np.atleast_2d(np.asarray(u, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if u.shape[0] != y.shape[0]:
        raise ValueError(f"u has {u.shape[0]} rows, y has {y.shape[0]}")
    cols = [f"u_{k + 1}" for k in range(u.shape[1])] + \
           [f"y_{k + 1}" for k in range(y.shape[1])]
    with open(path, "w", encoding="utf-8") as fh:
        for line in _header_lines(config):
            fh.write(line + "\n")
        fh.write(",".join(cols) + "\n")
        for row in np.hstack([u, y]):
            fh.write(",".join(format_float(v) for v in row) + "\n")


def read_timeseries(path) -> tuple[np.ndarray, np.ndarray, dict]:
    """Returns (u, y, metadata). Column header u_1..u_k,y_1..y_m required."""
    meta, body = _read_lines(path)
    if not body:
        raise DataError(f"{path}: empty data file")
    header_no, header = body[0]
    names = [c.strip() for c in header.split(",")]
    n_u = sum(1 for c in names if c.startswith("u_"))
    n_y = sum(1 for c in names if c.startswith("y_"))
    expected = [f"u_{k + 1}" for k in range(n_u)] + [f"y_{k + 1}" for k in range(n_y)]
    if n_u == 0 or n_y == 0 or names != expected:
        raise DataError(
            f"{path}:{header_no}: expected column header u_1..u_{max(n_u, 1)},"
            f"y_1..y_{max(n_y, 1)}, got {header!r}")
    rows = []
    for line_no, line in body[1:]:
        parts = line.split(",")
        if len(parts) != n_u + n_y:
            raise DataError(
                f"{path}:{line_no}: expected {n_u + n_y} values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.asarray(rows)
    return table[:, :n_u], table[:, n_u:], meta


def write_matrices(path, matrices: dict, config: dict | None = None) -> None:
    """Sections of the form 'matrix,<name>,<rows>,<cols>' followed by rows.

    Scalars are stored as 1x1 matrices.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for line in _header_lines(config):
            fh.write(line + "\n")
        for name, value in matrices.items():
            m = np.atleast_2d(np.asarray(value, dtype=float))
            fh.write(f"matrix,{name},{m.shape[0]},{m.shape[1]}\n")
            for row in m:
                fh.write(",".join(format_float(v) for v in row) + "\n")


def read_matrices(path) -> tuple[dict, dict]:
    meta, body = _read_lines(path)
    matrices = {}
    idx = 0
    while idx < len(body):
        line_no, line = body[idx]
        parts = line.split(",")
        if len(parts) != 4 or parts[0] != "matrix":
            raise DataError(f"{path}:{line_no}: expected 'matrix,<name>,<rows>,<cols>'")
        name = parts[1]
        try:
            rows, cols = int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: bad shape: {exc}") from exc
        if rows < 1 or cols < 1:
            raise DataError(f"{path}:{line_no}: bad shape {rows}x{cols}")
        if idx + rows >= len(body):
            raise DataError(f"{path}:{line_no}: section {name!r} truncated")
        block = []
        for r in range(rows):
            row_no, row_line = body[idx + 1 + r]
            vals = row_line.split(",")
            if len(vals) != cols:
                raise DataError(
                    f"{path}:{row_no}: expected {cols} values, got {len(vals)}")
            try:
                block.append([float(v) for v in vals])
            except ValueError as exc:
                raise DataError(f"{path}:{row_no}: {exc}") from exc
        matrices[name] = np.asarray(block)
        idx += 1 + rows
    return matrices, meta


def write_run_records(path, records, scheme: str, config: dict | None = None) -> None:
    """Per-run benchmark table: run_id,nx,snr,scheme,method,risk,risk_ref."""
    from .bench import REFERENCE_METHOD   # local import: bench pulls in heavy deps

    with open(path, "w", encoding="utf-8") as fh:
        for line in _header_lines(config):
            fh.write(line + "\n")
        fh.write("run_id,nx,snr,scheme,method,risk,risk_ref\n")
        for rec in records:
            ref = rec.risks[REFERENCE_METHOD]
            for method, risk in rec.risks.items():
                fh.write(f"{rec.run_id},{rec.n_x},{format_float(rec.snr)},{scheme},"
                         f"{method},{format_float(risk)},{format_float(ref)}\n")


def write_summary(path, summary: dict, config: dict | None = None) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for line in _header_lines(config):
            fh.write(line + "\n")
        fh.write(json.dumps(_sanitize(summary), indent=2, sort_keys=True) + "\n")
