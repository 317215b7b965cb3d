"""Artifact I/O: versioned CSV tables, JSON documents and run manifests.

CSV files start with a ``# nsadf-schema: <kind>/<version>`` line and are
written with round-trip float formatting, so identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import platform
from pathlib import Path

import numpy as np
import scipy

from .errors import ConfigError

SCHEMAS = {
    "series": (1, ["t", "day", "x", "y"]),
    "exp_series": (1, ["t", "day", "x", "y"]),
    "curve": (1, ["w", "x", "y", "flag"]),
    "mise": (1, ["copula", "time", "qr", "bp"]),
    "envelope": (1, ["axis", "lower", "median", "upper"]),
    "eta": (1, ["t", "eta", "lower", "upper", "model_eta", "flag"]),
}
HEADER_PREFIX = "# nsadf-schema: "


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return ""
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    if v is None:
        return ""
    return str(v)


def write_csv(path, kind: str, columns: dict) -> Path:
    """Write equal-length ``columns`` under schema ``kind``."""
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown CSV schema {kind!r}")
    version, names = SCHEMAS[kind]
    names = [c for c in names if c in columns] + [c for c in columns if c not in names]
    data = [np.asarray(columns[c]) if not isinstance(columns[c], list) else columns[c]
            for c in names]
    lengths = {len(d) for d in data}
    if len(lengths) > 1:
        raise ValueError("CSV columns differ in length")
    buf = _io.StringIO()
    buf.write(f"{HEADER_PREFIX}{kind}/{version}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*data):
        w.writerow([_fmt(v) for v in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def read_csv(path, kind: str, required=None) -> dict:
    """Read a CSV of schema ``kind``; returns ``{column: float array}``.

    A missing or different schema line raises :class:`ConfigError`. Empty
    cells become NaN.
    """
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown CSV schema {kind!r}")
    version, names = SCHEMAS[kind]
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        if not first.startswith(HEADER_PREFIX):
            raise ConfigError(f"{path}: missing schema line, expected {kind}/{version}")
        found = first[len(HEADER_PREFIX):].strip()
        if found != f"{kind}/{version}":
            raise ConfigError(f"{path}: schema {found!r} does not match {kind}/{version}")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{path}: no header row")
        rows = list(reader)
    required = names if required is None else required
    missing = [c for c in required if c not in header]
    if missing:
        raise ConfigError(f"{path}: missing columns {missing}")
    out = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in rows]
        try:
            out[name] = np.array([float(v) if v != "" else np.nan for v in vals])
        except ValueError:
            out[name] = np.array(vals)
    return out


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_default) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    from . import __version__

    return {"nsadf": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def write_manifest(out_dir, subcommand: str, config: dict, artifacts) -> Path:
    """Config echo, artifact hashes and library versions next to the outputs."""
    out_dir = Path(out_dir)
    files = {}
    for p in sorted({Path(a) for a in artifacts}):
        files[str(p.relative_to(out_dir) if p.is_relative_to(out_dir) else p)] = sha256(p)
    manifest = {"subcommand": subcommand, "config": config, "seed": config.get("seed"),
                "artifacts": files, "versions": versions()}
    return write_json(out_dir / "manifest.json", manifest)
