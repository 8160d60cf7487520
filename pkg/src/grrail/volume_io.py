"""Volume containers, readers/writers and isotropic resampling.

Two on-disk containers are understood:

* single-file NIfTI-1 (``.nii``, magic ``n+1``) and header/image pairs
  (``.hdr``/``.img``, magic ``ni1``), either byte order. Only ``dim``,
  ``datatype``, ``pixdim``, ``vox_offset`` and ``scl_slope``/``scl_inter``
  are interpreted; orientation matrices are ignored.
* the package's raw format: a ``key=value`` text header plus a little-endian
  binary array in x-fastest order. See ``docs/formats.md``.

Arrays are held in memory with shape ``(nx, ny, nz)`` and indexed ``[x, y, z]``;
flattening with ``order="F"`` gives the x-fastest on-disk order.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "VolumeError",
    "VoxelGrid",
    "RoiMask",
    "load_volume",
    "load_mask",
    "save_raw",
    "save_nifti",
    "resample_isotropic",
    "validate_pair",
    "volume_hash",
]

RAW_FORMAT = "grrail-raw"
RAW_VERSION = 1

# NIfTI datatype code -> numpy dtype name
_NIFTI_DTYPES = {2: "u1", 4: "i2", 8: "i4", 16: "f4", 64: "f8"}
_NIFTI_CODES = {v: k for k, v in _NIFTI_DTYPES.items()}
_RAW_DTYPES = {"uint8": "u1", "int16": "i2", "int32": "i4", "float32": "f4", "float64": "f8"}


class VolumeError(ValueError):
    """Raised for unreadable, inconsistent or invalid volumes and masks."""


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    values: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 3 or min(vals.shape) < 1:
            raise VolumeError(f"grid must be 3-D with positive dims, got shape {vals.shape}")
        spacing = tuple(float(s) for s in self.spacing_mm)
        if len(spacing) != 3 or not all(s > 0 and math.isfinite(s) for s in spacing):
            raise VolumeError(f"spacing must be three positive reals, got {self.spacing_mm}")
        if not np.all(np.isfinite(vals)):
            raise VolumeError("non-finite values in grid")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "spacing_mm", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.values.shape)


@dataclass(frozen=True, eq=False)
class RoiMask:
    flags: np.ndarray

    def __post_init__(self):
        flags = np.asarray(self.flags)
        if flags.ndim != 3:
            raise VolumeError(f"mask must be 3-D, got shape {flags.shape}")
        flags = flags != 0
        if not flags.any():
            raise VolumeError("empty ROI")
        flags.flags.writeable = False
        object.__setattr__(self, "flags", flags)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.flags.shape)

    @property
    def count(self) -> int:
        return int(self.flags.sum())


def validate_pair(grid: VoxelGrid, mask: RoiMask) -> int:
    """Check that a grid and mask belong together; return the ROI voxel count."""
    if grid.dims != mask.dims:
        raise VolumeError(f"dims mismatch: grid {grid.dims} vs mask {mask.dims}")
    n = int(np.count_nonzero(mask.flags))
    if n == 0:
        raise VolumeError("empty ROI")
    if not np.all(np.isfinite(grid.values)):
        raise VolumeError("non-finite values in grid")
    return n


def volume_hash(grid: VoxelGrid | np.ndarray) -> str:
    arr = grid.values if isinstance(grid, VoxelGrid) else np.asarray(grid)
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


# --------------------------------------------------------------------------- #
# reading


def _read_raw(path: Path) -> tuple[np.ndarray, tuple[float, float, float]]:
    fields: dict[str, str] = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise VolumeError(f"{path}: malformed header line {line!r}")
        key, val = line.split("=", 1)
        fields[key.strip()] = val.strip()
    if fields.get("format") != RAW_FORMAT:
        raise VolumeError(f"{path}: not a {RAW_FORMAT} header")
    try:
        dims = tuple(int(t) for t in fields["dims"].split())
        spacing = tuple(float(t) for t in fields["spacing"].split())
        dtype_name = fields.get("dtype", "float64")
        data_name = fields["data"]
    except (KeyError, ValueError) as exc:
        raise VolumeError(f"{path}: incomplete header ({exc})") from None
    if len(dims) != 3 or min(dims) < 1 or len(spacing) != 3:
        raise VolumeError(f"{path}: dims/spacing must have three positive entries")
    if dtype_name not in _RAW_DTYPES:
        raise VolumeError(f"{path}: unsupported datatype {dtype_name!r}")
    dtype = np.dtype("<" + _RAW_DTYPES[dtype_name])
    data_path = path.parent / data_name
    try:
        buf = data_path.read_bytes()
    except OSError as exc:
        raise VolumeError(f"unreadable data file {data_path}: {exc}") from None
    n = dims[0] * dims[1] * dims[2]
    if len(buf) != n * dtype.itemsize:
        raise VolumeError(
            f"data length mismatch: header declares {n} voxels, file holds "
            f"{len(buf) / dtype.itemsize:g}"
        )
    arr = np.frombuffer(buf, dtype=dtype).reshape(dims, order="F")
    return arr.astype(np.float64), spacing


def _read_nifti(path: Path, raw: bytes) -> tuple[np.ndarray, tuple[float, float, float]]:
    if len(raw) < 348:
        raise VolumeError(f"{path}: truncated NIfTI header")
    for endian in "<>":
        if struct.unpack(endian + "i", raw[:4])[0] == 348:
            break
    else:
        raise VolumeError(f"{path}: bad sizeof_hdr")
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise VolumeError(f"{path}: unrecognised NIfTI magic {magic!r}")
    dim = struct.unpack(endian + "8h", raw[40:56])
    datatype = struct.unpack(endian + "h", raw[70:72])[0]
    pixdim = struct.unpack(endian + "8f", raw[76:108])
    vox_offset = struct.unpack(endian + "f", raw[108:112])[0]
    slope, inter = struct.unpack(endian + "2f", raw[112:120])

    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise VolumeError(f"{path}: invalid dim[0]={ndim}")
    shape = [dim[i] if i <= ndim else 1 for i in range(1, 8)]
    if any(s < 1 for s in shape):
        raise VolumeError(f"{path}: non-positive dimension in {dim}")
    if any(s != 1 for s in shape[3:]):
        raise VolumeError(f"{path}: only 3-D volumes are supported, got dim={dim}")
    dims = tuple(shape[:3])
    spacing = tuple(abs(float(pixdim[i])) if i <= ndim else 1.0 for i in range(1, 4))
    spacing = tuple(s if s > 0 else 1.0 for s in spacing)
    if datatype not in _NIFTI_DTYPES:
        raise VolumeError(f"{path}: unsupported datatype code {datatype}")
    dtype = np.dtype(endian + _NIFTI_DTYPES[datatype])

    if magic == b"n+1\x00":
        buf = raw[int(vox_offset):]
    else:
        img = path.with_suffix(".img")
        try:
            buf = img.read_bytes()[int(vox_offset):]
        except OSError as exc:
            raise VolumeError(f"unreadable image file {img}: {exc}") from None
    n = dims[0] * dims[1] * dims[2]
    if len(buf) < n * dtype.itemsize:
        raise VolumeError(
            f"data length mismatch: header declares {n} voxels, file holds "
            f"{len(buf) // dtype.itemsize}"
        )
    arr = np.frombuffer(buf[: n * dtype.itemsize], dtype=dtype).reshape(dims, order="F")
    arr = arr.astype(np.float64)
    if slope != 0 and math.isfinite(slope):
        arr = arr * slope + inter
    return arr, spacing


def _read_any(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise VolumeError(f"unreadable file {path}: {exc}") from None
    if raw[:64].lstrip().startswith((b"#", b"format=")):
        return _read_raw(path)
    return _read_nifti(path, raw)


def load_volume(path) -> VoxelGrid:
    """Read a NIfTI-1 or raw-format volume as a double-precision grid."""
    arr, spacing = _read_any(path)
    if not np.all(np.isfinite(arr)):
        raise VolumeError(f"{path}: non-finite voxel values")
    return VoxelGrid(arr, spacing)


def load_mask(path) -> RoiMask:
    arr, _ = _read_any(path)
    return RoiMask(arr != 0)


# --------------------------------------------------------------------------- #
# writing


def save_raw(path, data: VoxelGrid | RoiMask | np.ndarray, spacing=None, dtype: str | None = None) -> Path:
    """Write ``data`` as a raw-format header at ``path`` plus ``<stem>.bin``.

    Masks default to uint8 storage, grids to float64.
    """
    path = Path(path)
    if isinstance(data, VoxelGrid):
        arr, spacing = data.values, spacing or data.spacing_mm
    elif isinstance(data, RoiMask):
        arr = data.flags.astype(np.uint8)
        dtype = dtype or "uint8"
    else:
        arr = np.asarray(data)
    spacing = tuple(spacing or (1.0, 1.0, 1.0))
    if dtype is None:
        dtype = "uint8" if arr.dtype == bool else "float64"
    if dtype not in _RAW_DTYPES:
        raise VolumeError(f"unsupported datatype {dtype!r}")
    data_path = path.with_suffix(".bin")
    header = "\n".join(
        [
            "# grrail raw volume",
            f"format={RAW_FORMAT}",
            f"version={RAW_VERSION}",
            "dims=" + " ".join(str(int(d)) for d in arr.shape),
            "spacing=" + " ".join(repr(float(s)) for s in spacing),
            f"dtype={dtype}",
            "byteorder=little",
            f"data={data_path.name}",
            "",
        ]
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    data_path.write_bytes(np.asarray(arr, dtype="<" + _RAW_DTYPES[dtype]).tobytes(order="F"))
    path.write_text(header)
    return path


def save_nifti(path, data: VoxelGrid | np.ndarray, spacing=None, dtype: str = "f8", big_endian: bool = False) -> Path:
    """Write a minimal single-file NIfTI-1 volume (identity orientation)."""
    path = Path(path)
    if isinstance(data, VoxelGrid):
        arr, spacing = data.values, spacing or data.spacing_mm
    else:
        arr = np.asarray(data)
    spacing = tuple(spacing or (1.0, 1.0, 1.0))
    e = ">" if big_endian else "<"
    code = _NIFTI_CODES[dtype]
    itemsize = np.dtype(dtype).itemsize
    hdr = bytearray(352)
    struct.pack_into(e + "i", hdr, 0, 348)
    struct.pack_into(e + "8h", hdr, 40, 3, *arr.shape, 1, 1, 1, 1)
    struct.pack_into(e + "hh", hdr, 70, code, itemsize * 8)
    struct.pack_into(e + "8f", hdr, 76, 1.0, *spacing, 0, 0, 0, 0)
    struct.pack_into(e + "f", hdr, 108, 352.0)
    struct.pack_into(e + "2f", hdr, 112, 1.0, 0.0)
    hdr[344:348] = b"n+1\x00"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(hdr) + np.asarray(arr, dtype=e + dtype).tobytes(order="F"))
    return path


# --------------------------------------------------------------------------- #
# resampling


def _axis_coords(n_old: int, old_mm: float, target_mm: float) -> tuple[int, np.ndarray]:
    # guard against 3 * 0.7 / 0.7 landing a hair above an integer
    n_new = max(1, math.ceil(n_old * old_mm / target_mm - 1e-9))
    return n_new, np.arange(n_new) * (target_mm / old_mm)


def _linear_along(a: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    n = a.shape[axis]
    c = np.clip(coords, 0.0, n - 1)
    i0 = np.floor(c).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = c - i0
    shape = [1, 1, 1]
    shape[axis] = -1
    frac = frac.reshape(shape)
    a0 = np.take(a, i0, axis=axis)
    a1 = np.take(a, i1, axis=axis)
    # a0 + f*(a1 - a0) keeps constant fields bit-exact
    return a0 + frac * (a1 - a0)


def _nearest_along(a: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    idx = np.clip(np.floor(coords + 0.5).astype(np.intp), 0, a.shape[axis] - 1)
    return np.take(a, idx, axis=axis)


def resample_isotropic(grid: VoxelGrid, mask: RoiMask, target_mm: float = 1.0, mode: str = "trilinear"):
    """Resample a grid/mask pair onto an isotropic ``target_mm`` lattice.

    Voxel ``j`` of the output sits at physical offset ``j * target_mm`` from the
    first input voxel centre. Samples beyond the last input voxel clamp to the
    edge. The mask is always resampled nearest-neighbour.
    """
    if not target_mm > 0:
        raise VolumeError(f"target_mm must be positive, got {target_mm}")
    if mode not in ("trilinear", "nearest"):
        raise VolumeError(f"unknown interpolation mode {mode!r}")
    validate_pair(grid, mask)
    if all(s == target_mm for s in grid.spacing_mm):
        return VoxelGrid(grid.values, grid.spacing_mm), RoiMask(mask.flags)

    vals = grid.values
    flags = mask.flags
    for axis in range(3):
        _, coords = _axis_coords(vals.shape[axis], grid.spacing_mm[axis], target_mm)
        if mode == "trilinear":
            vals = _linear_along(vals, coords, axis)
        else:
            vals = _nearest_along(vals, coords, axis)
        flags = _nearest_along(flags, coords, axis)
    if not flags.any():
        raise VolumeError("empty ROI after resampling (ROI vanished)")
    iso = (float(target_mm),) * 3
    return VoxelGrid(vals, iso), RoiMask(flags)
