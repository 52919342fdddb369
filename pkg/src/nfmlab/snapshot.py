"""NFMF binary container: field snapshots and named-array checkpoints.

Layout (all little-endian):
  magic "NFMF" | u32 version | u8 kind | u8 dim | u8 ncomp | u8 pad
  dim x u32 cells | f64 dx | payload

kind 0 (MAC field): ncomp face-centered components, each row-major float32,
in axis order.  kind 1 (cell scalar): one row-major float32 block of shape
cells.  kind 2 (checkpoint): u32 count, then per array a length-prefixed
name, dtype code, shape, and raw bytes; used for training-buffer state.

Round trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .field_core import CellField, GridDims, MacField

MAGIC = b"NFMF"
VERSION = 1
KIND_MAC = 0
KIND_CELL = 1
KIND_CHECKPOINT = 2

_DTYPES = {0: "<f4", 1: "<f8", 2: "<i4", 3: "<i8", 4: "|u1"}
_DTYPE_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


class SnapshotError(RuntimeError):
    """Malformed or unsupported NFMF content."""


def _write_header(fh, kind: int, dims: GridDims, ncomp: int) -> None:
    fh.write(MAGIC)
    fh.write(struct.pack("<IBBBB", VERSION, kind, dims.dim, ncomp, 0))
    fh.write(struct.pack(f"<{dims.dim}I", *dims.cells))
    fh.write(struct.pack("<d", dims.dx))


def _read_header(fh, path) -> tuple[int, GridDims, int]:
    magic = fh.read(4)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    version, kind, dim, ncomp, _ = struct.unpack("<IBBBB", fh.read(8))
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported version {version}")
    if dim not in (2, 3):
        raise SnapshotError(f"{path}: bad dimension {dim}")
    cells = struct.unpack(f"<{dim}I", fh.read(4 * dim))
    (dx,) = struct.unpack("<d", fh.read(8))
    dims = GridDims(tuple(int(c) for c in cells), float(dx))
    return kind, dims, ncomp


def write_snapshot(field: MacField | CellField, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        if isinstance(field, MacField):
            _write_header(fh, KIND_MAC, field.dims, field.dims.dim)
            for c in field.comps:
                fh.write(np.ascontiguousarray(c, dtype="<f4").tobytes())
        elif isinstance(field, CellField):
            _write_header(fh, KIND_CELL, field.dims, 1)
            fh.write(np.ascontiguousarray(field.data, dtype="<f4").tobytes())
        else:
            raise TypeError(f"cannot snapshot {type(field).__name__}")


def read_snapshot(path: str | Path) -> MacField | CellField:
    path = Path(path)
    with open(path, "rb") as fh:
        kind, dims, ncomp = _read_header(fh, path)
        if kind == KIND_MAC:
            if ncomp != dims.dim:
                raise SnapshotError(f"{path}: MAC field with {ncomp} components")
            comps = []
            for a in range(dims.dim):
                shape = dims.comp_shape(a)
                raw = fh.read(4 * int(np.prod(shape)))
                comps.append(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())
            return MacField(dims, comps)
        if kind == KIND_CELL:
            raw = fh.read(4 * int(np.prod(dims.cells)))
            return CellField(dims, np.frombuffer(raw, dtype="<f4").reshape(dims.cells).copy())
        raise SnapshotError(f"{path}: kind {kind} is not a field snapshot")


# ============================================================
# named-array checkpoints
# ============================================================


def write_checkpoint(arrays: dict[str, np.ndarray], dims: GridDims,
                     path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        _write_header(fh, KIND_CHECKPOINT, dims, 0)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _DTYPE_CODES:
                raise SnapshotError(f"checkpoint array {name!r} has "
                                    f"unsupported dtype {arr.dtype}")
            raw_name = name.encode()
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], GridDims]:
    path = Path(path)
    with open(path, "rb") as fh:
        kind, dims, _ = _read_header(fh, path)
        if kind != KIND_CHECKPOINT:
            raise SnapshotError(f"{path}: kind {kind} is not a checkpoint")
        (count,) = struct.unpack("<I", fh.read(4))
        arrays = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode()
            code, ndim = struct.unpack("<BB", fh.read(2))
            if code not in _DTYPES:
                raise SnapshotError(f"{path}: unknown dtype code {code}")
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            dtype = np.dtype(_DTYPES[code])
            raw = fh.read(dtype.itemsize * int(np.prod(shape)))
            arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        return arrays, dims
