"""File plumbing shared by the CLI and the experiment scripts."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
import tempfile
from pathlib import Path

import numpy as np

from .errors import ValidationError


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        # mkstemp creates 0600; give the result ordinary file permissions
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def format_float(v) -> str:
    # repr round-trips exactly
    return repr(float(v))


def csv_text(columns: dict) -> str:
    """Render equal-length columns as CSV with lossless float formatting."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*cols):
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def write_csv(path, columns: dict) -> None:
    atomic_write_text(path, csv_text(columns))


def read_csv(path) -> dict:
    """Numeric CSV back into float arrays keyed by header."""
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    if not rows:
        raise ValidationError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    data = np.empty((len(body), len(header)))
    for line, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ValidationError(f"{path}: row {line}: expected {len(header)} fields, got {len(r)}")
        try:
            data[line - 2] = [float(c) for c in r]
        except ValueError:
            raise ValidationError(f"{path}: row {line}: non-numeric value in {r}") from None
    return {name: data[:, k] for k, name in enumerate(header)}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, params: dict, inputs: dict, seed, outputs) -> dict:
    """Record what produced ``outputs``.

    No timestamps: rerunning with the same manifest content must reproduce
    the same files, manifest included.
    """
    import numba
    import numpy
    import scipy

    from . import __version__

    manifest = {
        "command": command,
        "params": params,
        "seed": seed,
        "inputs": {k: {"path": str(v), "sha256": sha256_file(v)} for k, v in sorted(inputs.items()) if v},
        "outputs": sorted(str(Path(o).name) for o in outputs),
        "versions": {
            "gripmap": __version__,
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "python": platform.python_version(),
        },
    }
    write_json(Path(out_dir) / "manifest.json", manifest)
    return manifest
