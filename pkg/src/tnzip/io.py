"""Binary tensor files and lattice manifests.

Tensor file layout (little-endian throughout): magic ``KTNS``, format version
as u32, one dtype byte (1 = float64, 2 = float32), one axis-count byte, the
extents as u64 values, then the row-major payload.  A lattice persists as a
JSON manifest next to one tensor file per site.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    ManifestError,
    TruncatedPayload,
    UnknownDtype,
    UnsupportedVersion,
)
from .gridspec import GridSpec
from .lattice import PepsLattice, SiteTensor, validate_lattice
from .tensor_ops import as_tensor

MAGIC = b"KTNS"
FORMAT_VERSION = 1
_DTYPE_CODES = {1: np.dtype("<f8"), 2: np.dtype("<f4")}
_CODES_BY_NAME = {"f8": 1, "f4": 2}


def save_tensor(t: np.ndarray, path, dtype: str = "f8") -> None:
    """Write a tensor; float64 payloads round-trip bit-exactly."""
    if dtype not in _CODES_BY_NAME:
        raise UnknownDtype(f"dtype must be one of {sorted(_CODES_BY_NAME)}, got {dtype!r}")
    t = as_tensor(t)
    code = _CODES_BY_NAME[dtype]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(bytes([code, t.ndim]))
        fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
        fh.write(np.ascontiguousarray(t, dtype=_DTYPE_CODES[code]).tobytes())


def load_tensor(path) -> np.ndarray:
    """Read a tensor file back as float64."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < 10:
        raise TruncatedPayload(f"{path}: header incomplete")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: format version {version} not supported")
    code, ndim = raw[8], raw[9]
    if code not in _DTYPE_CODES:
        raise UnknownDtype(f"{path}: unknown dtype code {code}")
    header_end = 10 + 8 * ndim
    if len(raw) < header_end:
        raise TruncatedPayload(f"{path}: extents truncated")
    shape = struct.unpack_from(f"<{ndim}Q", raw, 10)
    dtype = _DTYPE_CODES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
    payload = raw[header_end:]
    if len(payload) != expected:
        raise TruncatedPayload(
            f"{path}: payload holds {len(payload)} bytes, extents require {expected}"
        )
    data = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    return data.reshape(shape) if ndim else data.reshape(())


MANIFEST_NAME = "manifest.json"


def save_lattice(lattice: PepsLattice, dirpath, chi: int | None = None, report: dict | None = None) -> None:
    """Write manifest.json plus one site_<r>_<c>.ktns blob per site."""
    from . import __version__

    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    site_files = []
    for r in range(lattice.rows):
        row = []
        for c in range(lattice.cols):
            name = f"site_{r}_{c}.ktns"
            save_tensor(lattice.site(r, c).data, dirpath / name)
            row.append(name)
        site_files.append(row)
    manifest = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "rows": lattice.rows,
        "cols": lattice.cols,
        "chi": int(chi) if chi is not None else int(lattice.chi_max),
        "grid_spec": lattice.spec.to_dict(),
        "sites": site_files,
        "report": report or {},
    }
    with open(dirpath / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_lattice(dirpath) -> tuple[PepsLattice, dict]:
    """Load and validate a lattice directory; raises ManifestError on mismatch."""
    dirpath = Path(dirpath)
    manifest_path = dirpath / MANIFEST_NAME
    if not manifest_path.exists():
        raise ManifestError(f"{manifest_path} does not exist")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    try:
        spec = GridSpec.from_dict(manifest["grid_spec"])
        rows, cols = int(manifest["rows"]), int(manifest["cols"])
        site_files = manifest["sites"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{manifest_path}: malformed manifest ({exc})") from exc
    if len(site_files) != rows or any(len(row) != cols for row in site_files):
        raise ManifestError(f"{manifest_path}: site table is not {rows}x{cols}")
    sites = []
    for r in range(rows):
        row = []
        for c in range(cols):
            p = dirpath / site_files[r][c]
            if not p.exists():
                raise ManifestError(f"referenced tensor file {p} does not exist")
            row.append(SiteTensor(data=load_tensor(p)))
        sites.append(tuple(row))
    lattice = PepsLattice(rows=rows, cols=cols, sites=tuple(sites), spec=spec)
    check = validate_lattice(lattice)
    if not check.ok:
        msgs = "; ".join(v.message for v in check.violations)
        raise ManifestError(f"{dirpath}: stored lattice violates invariants: {msgs}")
    return lattice, manifest
