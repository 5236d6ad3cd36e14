"""Report serialisation: delimited tables, JSON and metadata sidecars.

Floats are written with 17 significant digits and ``\\n`` line endings so a
report is a pure function of its inputs.  Every file of a report is first
written under a temporary name in the target directory and renamed only
after all of them have been produced.
"""
from __future__ import annotations

import json
import math
import os
import subprocess
import tempfile
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .linalg import format_float


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def to_csv(columns: dict) -> str:
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel() if not isinstance(columns[k], list) else columns[k]
            for k in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    rows = [",".join(names)]
    for i in range(lengths.pop() if lengths else 0):
        rows.append(",".join(_cell(c[i]) for c in cols))
    return "\n".join(rows) + "\n"


def _json_value(v, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v) if math.isfinite(v) else "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{_json_value(str(k), indent, level + 1)}: {_json_value(x, indent, level + 1)}"
                 for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in v):
            return "[" + ", ".join(_json_value(x, indent, level + 1) for x in v) + "]"
        items = [pad + _json_value(x, indent, level + 1) for x in v]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(v, "value"):
        return _json_value(v.value, indent, level)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def to_json(obj) -> str:
    """JSON with 17-significant-digit floats and non-finite values as null."""
    return _json_value(obj, 2, 0) + "\n"


@lru_cache(maxsize=1)
def git_describe() -> str:
    """``git describe`` of the source tree, or ``"unknown"`` outside a checkout."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10, check=True)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def build_info() -> dict:
    return {"package": "hwlab", "version": __version__, "git_describe": git_describe()}


def write_atomic(files: dict[Path, str]) -> list[Path]:
    """Write every ``path -> text`` pair; nothing appears under a final name
    unless all temporaries were written."""
    staged: list[tuple[str, Path]] = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
            with os.fdopen(fd, "w", newline="\n") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)
    return [p for _, p in staged]


def write_report(output_dir, name: str, columns: dict, metadata: dict, fmt: str = "csv") -> list[Path]:
    """``<name>.csv`` (or ``<name>.json``) plus ``<name>.meta.json``."""
    out = Path(output_dir)
    meta = {"build": build_info(), **metadata}
    if fmt == "csv":
        body = {out / f"{name}.csv": to_csv(columns)}
    elif fmt == "json":
        body = {out / f"{name}.json": to_json({"columns": columns})}
    else:
        raise ValueError(f"unknown format {fmt!r}")
    body[out / f"{name}.meta.json"] = to_json(meta)
    return write_atomic(body)
