"""Value/policy table files.

Two on-disk forms carry the same records, one per (time index, node):

* compact binary: magic ``LSWPOL1\\n``, a little-endian uint32 header
  length, a UTF-8 JSON header (version, grid spec, run metadata, config
  hash, record dtype), then the records as a packed little-endian
  structured array in time-major order;
* CSV: ``# key=value`` comment lines carrying the same header, a column
  header row, then the records.

Record fields, in order: k, node, v0, va, vb, wait0, u0a, u0b, ha, hb,
uaa, uab, uba, ubb.  Files are byte-reproducible: no timestamps, sorted
JSON keys, fixed float formatting.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import GridSpec, build_grid
from .solver import SolveResult

__all__ = ["load_policy", "save_policy", "RECORD_DTYPE"]

_MAGIC = b"LSWPOL1\n"
_FORMAT_VERSION = 1

RECORD_DTYPE = np.dtype([
    ("k", "<i4"), ("node", "<i8"),
    ("v0", "<f8"), ("va", "<f8"), ("vb", "<f8"),
    ("wait0", "u1"),
    ("u0a", "<f4"), ("u0b", "<f4"),
    ("ha", "u1"), ("hb", "u1"),
    ("uaa", "<f4"), ("uab", "<f4"),
    ("uba", "<f4"), ("ubb", "<f4"),
])

_FIELD_FMT = {"k": "%d", "node": "%d", "v0": "%.17g", "va": "%.17g",
              "vb": "%.17g", "wait0": "%d", "u0a": "%.9g", "u0b": "%.9g",
              "ha": "%d", "hb": "%d", "uaa": "%.9g", "uab": "%.9g",
              "uba": "%.9g", "ubb": "%.9g"}


def _records(result: SolveResult) -> np.ndarray:
    n_layers, n_nodes = result.v0.shape
    rec = np.empty(n_layers * n_nodes, dtype=RECORD_DTYPE)
    rec["k"] = np.repeat(np.arange(n_layers, dtype=np.int32), n_nodes)
    rec["node"] = np.tile(np.arange(n_nodes, dtype=np.int64), n_layers)
    for name in ("v0", "va", "vb", "wait0", "u0a", "u0b", "ha", "hb",
                 "uaa", "uab", "uba", "ubb"):
        rec[name] = getattr(result, name).reshape(-1)
    return rec


def _header(result: SolveResult, config_hash: Optional[str]) -> dict:
    return {
        "format_version": _FORMAT_VERSION,
        "grid": dataclasses.asdict(result.grid.spec),
        "model": result.model,
        "trader": result.trader,
        "epsilon": result.epsilon,
        "meta": result.meta,
        "config_hash": config_hash or "",
        "n_layers": int(result.v0.shape[0]),
        "n_nodes": int(result.v0.shape[1]),
    }


def save_policy(result: SolveResult, path: str | Path, fmt: str = "bin",
                config_hash: Optional[str] = None) -> None:
    """Write the table in the requested format ("bin" or "csv")."""
    path = Path(path)
    header = _header(result, config_hash)
    rec = _records(result)
    if fmt == "bin":
        blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(np.array([len(blob)], dtype="<u4").tobytes())
            fh.write(blob)
            fh.write(rec.tobytes())
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for key in sorted(header):
                fh.write(f"# {key}={json.dumps(header[key], sort_keys=True)}\n")
            names = RECORD_DTYPE.names
            fh.write(",".join(names) + "\n")
            fmts = [_FIELD_FMT[n] for n in names]
            for row in rec:
                fh.write(",".join(f % row[n] for f, n in zip(fmts, names)) + "\n")
    else:
        raise ValueError(f"unknown policy format {fmt!r}")


def load_policy(path: str | Path) -> SolveResult:
    """Read a policy file of either format back into a SolveResult."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic == _MAGIC:
            (hlen,) = np.frombuffer(fh.read(4), dtype="<u4")
            header = json.loads(fh.read(int(hlen)).decode())
            rec = np.frombuffer(fh.read(), dtype=RECORD_DTYPE)
            return _from_records(header, rec)
    text = path.read_text(encoding="utf-8").splitlines()
    header = {}
    idx = 0
    for idx, line in enumerate(text):
        if not line.startswith("# "):
            break
        key, _, val = line[2:].partition("=")
        header[key] = json.loads(val)
    names = text[idx].split(",")
    if names != list(RECORD_DTYPE.names):
        raise ValueError("unexpected CSV column header")
    rec = np.empty(len(text) - idx - 1, dtype=RECORD_DTYPE)
    for i, line in enumerate(text[idx + 1:]):
        parts = line.split(",")
        for name, part in zip(names, parts):
            rec[i][name] = np.dtype(RECORD_DTYPE[name]).type(part)
    return _from_records(header, rec)


def _from_records(header: dict, rec: np.ndarray) -> SolveResult:
    spec = GridSpec(**header["grid"])
    grid = build_grid(spec)
    n_layers = header["n_layers"]
    n_nodes = header["n_nodes"]
    if grid.n_nodes != n_nodes:
        raise ValueError("grid spec and node count disagree")
    if len(rec) != n_layers * n_nodes:
        raise ValueError("record count does not match header")

    def shaped(name, dtype):
        return np.ascontiguousarray(rec[name].reshape(n_layers, n_nodes)).astype(dtype)

    return SolveResult(
        model=header["model"], trader=header["trader"],
        epsilon=float(header["epsilon"]), grid=grid,
        v0=shaped("v0", np.float64), va=shaped("va", np.float64),
        vb=shaped("vb", np.float64),
        wait0=shaped("wait0", np.uint8),
        u0a=shaped("u0a", np.float32), u0b=shaped("u0b", np.float32),
        ha=shaped("ha", np.uint8), hb=shaped("hb", np.uint8),
        uaa=shaped("uaa", np.float32), uab=shaped("uab", np.float32),
        uba=shaped("uba", np.float32), ubb=shaped("ubb", np.float32),
        meta=header.get("meta", {}),
    )
