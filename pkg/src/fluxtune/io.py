"""File formats: trace CSV, sweep manifests, row tables and JSON reports.

Floats are written with ``repr`` so every value survives a write/read cycle
bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError, PreconditionError
from .s21 import ComplexTrace

__all__ = [
    "SCHEMA_VERSION",
    "fmt_float",
    "to_jsonable",
    "write_report",
    "read_report",
    "write_rows",
    "read_rows",
    "write_trace_csv",
    "read_trace_csv",
    "write_manifest",
    "read_manifest",
    "load_sweep",
]

SCHEMA_VERSION = "1.0"


def fmt_float(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and complex numbers."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_report(path, report: dict) -> Path:
    """JSON report with a leading ``schema_version``."""
    body = {"schema_version": SCHEMA_VERSION}
    body.update(to_jsonable(report))
    path = Path(path)
    path.write_text(json.dumps(body, indent=2, sort_keys=False) + "\n")
    return path


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(v) for v in row])
    return path


def read_rows(path):
    """Return ``(header, float array)`` from a numeric CSV table."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PreconditionError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise PreconditionError(f"{path}: non-numeric entry ({exc})") from exc
    return header, data.reshape(-1, len(header))


def write_trace_csv(path, trace: ComplexTrace, fmt="reim") -> Path:
    """``freq_hz,s21_re,s21_im`` or, with ``fmt="magphase"``,
    ``freq_hz,mag_db,phase_rad``."""
    s = trace.s21
    if fmt == "reim":
        return write_rows(path, ["freq_hz", "s21_re", "s21_im"], zip(trace.freqs, s.real, s.imag))
    if fmt == "magphase":
        return write_rows(path, ["freq_hz", "mag_db", "phase_rad"],
                          zip(trace.freqs, 20 * np.log10(np.abs(s)), np.angle(s)))
    raise PreconditionError(f"unknown trace format {fmt!r}")


def read_trace_csv(path, power_at_device=None, metadata=None) -> ComplexTrace:
    header, data = read_rows(path)
    cols = {h: i for i, h in enumerate(header)}
    if "freq_hz" not in cols:
        raise PreconditionError(f"{path}: missing freq_hz column")
    f = data[:, cols["freq_hz"]]
    if {"s21_re", "s21_im"} <= cols.keys():
        s = data[:, cols["s21_re"]] + 1j * data[:, cols["s21_im"]]
    elif {"mag_db", "phase_rad"} <= cols.keys():
        s = 10 ** (data[:, cols["mag_db"]] / 20) * np.exp(1j * data[:, cols["phase_rad"]])
    else:
        raise PreconditionError(f"{path}: need s21_re/s21_im or mag_db/phase_rad columns")
    return ComplexTrace(f, s, power_at_device, dict(metadata or {}))


_MANIFEST_KEYS = ("file", "power_dbm", "attenuation_db", "bias_current_a")


def write_manifest(path, entries) -> Path:
    """Sweep manifest listing trace files with drive and bias metadata."""
    clean = []
    for e in entries:
        if "file" not in e:
            raise PreconditionError("manifest entries need a 'file'")
        clean.append({k: e.get(k) for k in _MANIFEST_KEYS})
    return write_report(path, {"files": clean})


def read_manifest(path) -> list:
    data = read_report(path)
    files = data.get("files")
    if not isinstance(files, list):
        raise ConfigError(f"{path}: manifest needs a 'files' list", "files")
    for i, e in enumerate(files):
        if "file" not in e:
            raise ConfigError(f"{path}: entry {i} lacks 'file'", f"files[{i}].file")
        unknown = set(e) - set(_MANIFEST_KEYS)
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}", f"files[{i}]")
    return files


def load_sweep(manifest_path) -> list:
    """Traces named in a manifest, with ``power_at_device`` in watts when the
    power and attenuation are both present; sorted by power."""
    manifest_path = Path(manifest_path)
    out = []
    for e in read_manifest(manifest_path):
        p = e.get("power_dbm")
        att = e.get("attenuation_db")
        pw = 1e-3 * 10 ** ((p - att) / 10) if p is not None and att is not None else None
        meta = {k: e.get(k) for k in _MANIFEST_KEYS if k != "file"}
        out.append(read_trace_csv(manifest_path.parent / e["file"], pw, meta))
    out.sort(key=lambda t: -math.inf if t.power_at_device is None else t.power_at_device)
    return out
