"""Binary and CSV import/export of sampled fields.

Binary layout (little-endian)::

    8 bytes   magic b"THWFIELD"
    4 bytes   uint32 header length n
    n bytes   UTF-8 JSON header {"shape": [...], "dtype": "<f8" | "<c16", "Lx": .., "Ly": ..}
    rest      data in C (row-major) order, axes (x, y[, phi])

Spectra are written as a JSON index plus one binary file per vertical mode.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .circle_bundle import VerticalSpectrum

MAGIC = b"THWFIELD"
_DTYPES = {"<f8": np.float64, "<c16": np.complex128}


class FieldFormatError(ValueError):
    pass


def save_field(path: str | Path, data: np.ndarray, Lx: float = 2 * np.pi, Ly: float = 2 * np.pi,
               extra: dict | None = None) -> Path:
    path = Path(path)
    arr = np.ascontiguousarray(data)
    dt = "<c16" if np.iscomplexobj(arr) else "<f8"
    arr = arr.astype(dt)
    header = {"shape": list(arr.shape), "dtype": dt, "Lx": float(Lx), "Ly": float(Ly)}
    if extra:
        header.update(extra)
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        fh.write(arr.tobytes(order="C"))
    return path


def load_field(path: str | Path) -> tuple[np.ndarray, dict]:
    """Return (array, header)."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise FieldFormatError(f"{path}: not a field file (bad magic)")
    if len(blob) < 12:
        raise FieldFormatError(f"{path}: truncated header")
    (n,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + n].decode())
        shape = tuple(int(s) for s in header["shape"])
        dt = _DTYPES[header["dtype"]]
    except (ValueError, KeyError) as exc:
        raise FieldFormatError(f"{path}: malformed header ({exc})") from exc
    body = blob[12 + n:]
    expected = int(np.prod(shape)) * np.dtype(dt).itemsize
    if len(body) != expected:
        raise FieldFormatError(f"{path}: expected {expected} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=dt).reshape(shape).copy(), header


def save_csv(path: str | Path, data: np.ndarray) -> Path:
    """One row per grid point: index columns, then value (real, imag for complex data)."""
    path = Path(path)
    names = ["i", "j", "k"][:data.ndim]
    cplx = np.iscomplexobj(data)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + (["re", "im"] if cplx else ["value"]))
        for idx in np.ndindex(data.shape):
            v = data[idx]
            w.writerow(list(idx) + ([repr(float(v.real)), repr(float(v.imag))] if cplx else [repr(float(v))]))
    return path


def save_spectrum(directory: str | Path, spec: VerticalSpectrum, stem: str = "mode",
                  Lx: float = 2 * np.pi, Ly: float = 2 * np.pi) -> Path:
    """Write each coefficient field to its own binary file and an index ``spectrum.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {"nphi": spec.nphi, "modes": {}}
    for m in sorted(spec.modes):
        name = f"{stem}_{m:+d}.thw"
        save_field(directory / name, spec.modes[m], Lx, Ly, extra={"mode": m})
        index["modes"][str(m)] = name
    out = directory / "spectrum.json"
    out.write_text(json.dumps(index, indent=1, sort_keys=True))
    return out


def load_spectrum(index_path: str | Path) -> VerticalSpectrum:
    index_path = Path(index_path)
    index = json.loads(index_path.read_text())
    modes = {int(m): load_field(index_path.parent / name)[0] for m, name in index["modes"].items()}
    return VerticalSpectrum(modes, int(index["nphi"]))


__all__ = ["save_field", "load_field", "save_csv", "save_spectrum", "load_spectrum", "FieldFormatError",
           "MAGIC"]
