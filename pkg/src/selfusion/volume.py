"""3D grid containers and bit-exact volume I/O.

Every volume is stored as a numpy array indexed ``[x, y, z]``.  The canonical
linear order is x-fastest (``x + nx * (y + ny * z)``), which is Fortran order
for that array; :attr:`Volume.data` exposes the flat canonical sequence.

Two on-disk formats are supported:

* NIfTI-1 single file (``.nii`` / ``.nii.gz``), datatypes uint8, int16,
  int32 and float32.  Orientation fields of a header that was read are kept
  verbatim when the volume is written back.
* MVOL, a one-line JSON header followed by the raw little-endian payload in
  canonical order.
"""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DTYPES",
    "Volume",
    "BinaryMask",
    "ConfidenceMap",
    "LabelMap",
    "VolumeFormatError",
    "new_volume",
    "read_volume",
    "write_volume",
    "linear_index",
    "voxel_coords",
]

DTYPES = {"uint8": np.dtype(np.uint8), "int32": np.dtype(np.int32), "float32": np.dtype(np.float32)}


class VolumeFormatError(ValueError):
    """Raised when a file cannot be decoded as a volume.

    ``offset`` is the byte offset (in the decompressed stream) where decoding
    failed, or ``None`` when not applicable.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def _check_dims(dims: Sequence[int]) -> tuple[int, int, int]:
    if len(dims) != 3:
        raise ValueError(f"dims must have 3 entries, got {len(dims)}")
    out = tuple(int(d) for d in dims)
    if any(d <= 0 for d in out):
        raise ValueError(f"dims must be positive, got {out}")
    return out  # type: ignore[return-value]


def _check_spacing(spacing: Sequence[float]) -> tuple[float, float, float]:
    if len(spacing) != 3:
        raise ValueError(f"spacing must have 3 entries, got {len(spacing)}")
    # Spacing lives in float32 precision so NIfTI pixdim round-trips exactly.
    out = tuple(float(np.float32(s)) for s in spacing)
    if not all(np.isfinite(s) and s > 0 for s in out):
        raise ValueError(f"spacing must be finite and positive, got {tuple(spacing)}")
    return out  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class Volume:
    """Immutable 3D scalar grid with voxel spacing in mm."""

    array: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    # Raw NIfTI header of the file this volume came from; orientation only.
    nifti_header: bytes | None = field(default=None, repr=False)

    def __post_init__(self):
        arr = np.asarray(self.array)
        if arr.ndim != 3:
            raise ValueError(f"volume array must be 3D, got shape {arr.shape}")
        if arr.dtype not in DTYPES.values():
            raise ValueError(f"unsupported dtype {arr.dtype}; expected one of {sorted(DTYPES)}")
        _check_dims(arr.shape)
        arr = np.array(arr, copy=True)
        arr.flags.writeable = False
        object.__setattr__(self, "array", arr)
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.array.shape)  # type: ignore[return-value]

    @property
    def dtype(self) -> str:
        return self.array.dtype.name

    @property
    def size(self) -> int:
        return int(self.array.size)

    @property
    def data(self) -> np.ndarray:
        """Flat voxel values in canonical (x-fastest) order."""
        return self.array.ravel(order="F")

    def with_array(self, array: np.ndarray) -> "Volume":
        """Plain volume on this grid holding ``array``."""
        return Volume(array, self.spacing, self.nifti_header)

    def same_grid(self, other: "Volume") -> bool:
        return self.dims == other.dims and self.spacing == other.spacing

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and self.dtype == other.dtype
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class BinaryMask(Volume):
    """uint8 volume whose voxels are all 0 or 1."""

    def __post_init__(self):
        arr = np.asarray(self.array)
        if arr.dtype == np.bool_:
            object.__setattr__(self, "array", arr.astype(np.uint8))
        super().__post_init__()
        if self.array.dtype != np.uint8:
            raise ValueError(f"mask dtype must be uint8, got {self.array.dtype}")
        if self.array.size and self.array.max() > 1:
            raise ValueError("mask values must be 0 or 1")

    @classmethod
    def from_volume(cls, vol: Volume, threshold: float = 0.5) -> "BinaryMask":
        """Binarize ``vol``: floats by ``> threshold``, integers by nonzero."""
        a = vol.array
        fg = a > threshold if a.dtype.kind == "f" else a != 0
        return cls(fg.astype(np.uint8), vol.spacing, vol.nifti_header)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.array))


@dataclass(frozen=True, eq=False)
class ConfidenceMap(Volume):
    """int32 vote counts in ``[0, n_views]``."""

    n_views: int = 24

    def __post_init__(self):
        arr = np.asarray(self.array)
        if arr.dtype != np.int32 and arr.dtype.kind in "iub":
            object.__setattr__(self, "array", arr.astype(np.int32))
        super().__post_init__()
        if self.array.dtype != np.int32:
            raise ValueError(f"confidence map dtype must be int32, got {self.array.dtype}")
        if int(self.n_views) <= 0:
            raise ValueError(f"n_views must be positive, got {self.n_views}")
        object.__setattr__(self, "n_views", int(self.n_views))
        if self.array.min() < 0 or self.array.max() > self.n_views:
            raise ValueError(f"confidence values must lie in [0, {self.n_views}]")


@dataclass(frozen=True, eq=False)
class LabelMap(Volume):
    """int32 component labels; 0 is background, labels are 1..n_components."""

    n_components: int = 0

    def __post_init__(self):
        super().__post_init__()
        if self.array.dtype != np.int32:
            raise ValueError(f"label map dtype must be int32, got {self.array.dtype}")
        object.__setattr__(self, "n_components", int(self.n_components))
        if self.array.min() < 0 or self.array.max() > self.n_components:
            raise ValueError(f"labels must lie in [0, {self.n_components}]")


def linear_index(x: int, y: int, z: int, dims: Sequence[int]) -> int:
    nx, ny, _ = dims
    return x + nx * (y + ny * z)


def voxel_coords(index: int, dims: Sequence[int]) -> tuple[int, int, int]:
    nx, ny, _ = dims
    return index % nx, (index // nx) % ny, index // (nx * ny)


def new_volume(dims, spacing=(1.0, 1.0, 1.0), dtype: str = "uint8", fill=0) -> Volume:
    """Volume of shape ``dims`` with every voxel set to ``fill``."""
    dims = _check_dims(dims)
    if dtype not in DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}; expected one of {sorted(DTYPES)}")
    return Volume(np.full(dims, fill, dtype=DTYPES[dtype]), spacing)


# ---------------------------------------------------------------------------
# format dispatch

def _detect_format(path: Path) -> str:
    name = path.name.lower()
    if name.endswith(".nii") or name.endswith(".nii.gz"):
        return "nifti"
    if name.endswith(".mvol"):
        return "mvol"
    raise ValueError(f"cannot infer volume format from file name {path.name!r}; pass format=")


def read_volume(path, format: str | None = None, *, as_mask: bool = False,
                binarize_threshold: float = 0.5) -> Volume:
    """Read a volume from ``path``.

    With ``as_mask=True`` the result is a :class:`BinaryMask`; float data are
    binarized with ``> binarize_threshold`` and integer data by nonzero.
    """
    path = Path(path)
    fmt = format or _detect_format(path)
    raw = path.read_bytes()
    if fmt == "nifti":
        if raw[:2] == b"\x1f\x8b":
            try:
                raw = gzip.decompress(raw)
            except (OSError, EOFError) as exc:
                raise VolumeFormatError(f"corrupt gzip stream: {exc}") from exc
        vol = _decode_nifti(raw)
    elif fmt == "mvol":
        vol = _decode_mvol(raw)
    else:
        raise ValueError(f"unknown volume format {fmt!r}")
    if as_mask:
        return BinaryMask.from_volume(vol, binarize_threshold)
    return vol


def write_volume(volume: Volume, path, format: str | None = None) -> None:
    """Write ``volume`` so that :func:`read_volume` reproduces it bit-exactly."""
    path = Path(path)
    fmt = format or _detect_format(path)
    if fmt == "nifti":
        payload = _encode_nifti(volume)
        if path.name.lower().endswith(".gz"):
            # mtime=0 keeps output bytes reproducible
            payload = gzip.compress(payload, mtime=0)
    elif fmt == "mvol":
        payload = _encode_mvol(volume)
    else:
        raise ValueError(f"unknown volume format {fmt!r}")
    path.write_bytes(payload)


# ---------------------------------------------------------------------------
# MVOL

def _encode_mvol(volume: Volume) -> bytes:
    header = {"dims": list(volume.dims), "spacing": list(volume.spacing), "dtype": volume.dtype}
    line = json.dumps(header, separators=(",", ":")).encode() + b"\n"
    le = volume.array.dtype.newbyteorder("<")
    return line + volume.data.astype(le, copy=False).tobytes()


def _decode_mvol(raw: bytes) -> Volume:
    end = raw.find(b"\n")
    if end < 0:
        raise VolumeFormatError("MVOL header line is not terminated", len(raw))
    try:
        header = json.loads(raw[:end])
        dims = header["dims"]
        spacing = header["spacing"]
        dtype = header["dtype"]
    except (ValueError, KeyError, TypeError) as exc:
        raise VolumeFormatError(f"malformed MVOL header: {exc}", 0) from exc
    if dtype not in DTYPES:
        raise VolumeFormatError(f"unsupported MVOL dtype {dtype!r}", 0)
    try:
        dims = _check_dims(dims)
        spacing = _check_spacing(spacing)
    except (ValueError, TypeError) as exc:
        raise VolumeFormatError(f"malformed MVOL header: {exc}", 0) from exc
    dt = DTYPES[dtype].newbyteorder("<")
    start = end + 1
    expected = int(np.prod(dims)) * dt.itemsize
    if len(raw) - start != expected:
        raise VolumeFormatError(
            f"MVOL payload has {len(raw) - start} bytes, expected {expected}", start)
    flat = np.frombuffer(raw, dtype=dt, offset=start).astype(DTYPES[dtype])
    return Volume(flat.reshape(dims, order="F"), spacing)


# ---------------------------------------------------------------------------
# NIfTI-1

_NIFTI_HDR_SIZE = 348
_NIFTI_VOX_OFFSET = 352
# datatype code -> (numpy dtype, Volume dtype it is widened to)
_NIFTI_CODES = {
    2: (np.dtype(np.uint8), "uint8"),
    4: (np.dtype(np.int16), "int32"),
    8: (np.dtype(np.int32), "int32"),
    16: (np.dtype(np.float32), "float32"),
}
_NIFTI_WRITE_CODES = {"uint8": (2, 8), "int32": (8, 32), "float32": (16, 32)}


def _decode_nifti(raw: bytes) -> Volume:
    if len(raw) < _NIFTI_HDR_SIZE:
        raise VolumeFormatError(f"NIfTI header truncated: {len(raw)} bytes", len(raw))
    if struct.unpack_from("<i", raw, 0)[0] == _NIFTI_HDR_SIZE:
        bo = "<"
    elif struct.unpack_from(">i", raw, 0)[0] == _NIFTI_HDR_SIZE:
        bo = ">"
    else:
        raise VolumeFormatError("sizeof_hdr is not 348", 0)
    magic = raw[344:348]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise VolumeFormatError(f"bad NIfTI magic {magic!r}", 344)
    if magic == b"ni1\x00":
        raise VolumeFormatError("two-file NIfTI (.hdr/.img) is not supported", 344)

    dim = struct.unpack_from(bo + "8h", raw, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise VolumeFormatError(f"dim[0]={ndim} out of range", 40)
    shape = [int(d) for d in dim[1:ndim + 1]]
    if any(d <= 0 for d in shape):
        raise VolumeFormatError(f"non-positive dimension in {shape}", 42)
    if any(d != 1 for d in shape[3:]):
        raise VolumeFormatError(f"only 3D volumes are supported, got dims {shape}", 40)
    shape = (shape + [1, 1, 1])[:3]

    code = struct.unpack_from(bo + "h", raw, 70)[0]
    if code not in _NIFTI_CODES:
        raise VolumeFormatError(f"unsupported NIfTI datatype code {code}", 70)
    disk_dtype, vol_dtype = _NIFTI_CODES[code]
    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    spacing = [abs(p) if p != 0 else 1.0 for p in pixdim[1:4]]
    vox_offset = struct.unpack_from(bo + "f", raw, 108)[0]
    if vox_offset < _NIFTI_VOX_OFFSET or vox_offset != int(vox_offset):
        raise VolumeFormatError(f"invalid vox_offset {vox_offset}", 108)
    start = int(vox_offset)
    slope, inter = struct.unpack_from(bo + "2f", raw, 112)

    n = int(np.prod(shape))
    expected = n * disk_dtype.itemsize
    if len(raw) - start < expected:
        raise VolumeFormatError(
            f"NIfTI payload has {max(len(raw) - start, 0)} bytes, expected {expected}", start)
    flat = np.frombuffer(raw, dtype=disk_dtype.newbyteorder(bo), count=n, offset=start)
    if slope not in (0.0, 1.0) or inter != 0.0:
        flat = flat.astype(np.float32) * np.float32(slope or 1.0) + np.float32(inter)
        vol_dtype = "float32"
    data = flat.astype(DTYPES[vol_dtype]).reshape(shape, order="F")
    try:
        spacing = _check_spacing(spacing)
    except ValueError as exc:
        raise VolumeFormatError(str(exc), 76) from exc
    header = raw[:_NIFTI_HDR_SIZE]
    if bo == ">":
        header = _swap_header(header)
    return Volume(data, spacing, header)


# (offset, struct code) of every numeric header field, for byte swapping
_NIFTI_FIELDS = [
    (0, "i"), (32, "i"), (36, "h"), (40, "8h"), (56, "3f"), (68, "4h"),
    (76, "8f"), (108, "3f"), (120, "h"), (124, "4f"), (140, "2i"),
    (252, "2h"), (256, "6f"), (280, "12f"),
]


def _swap_header(header: bytes) -> bytes:
    buf = bytearray(header)
    for off, code in _NIFTI_FIELDS:
        vals = struct.unpack_from(">" + code, header, off)
        struct.pack_into("<" + code, buf, off, *vals)
    return bytes(buf)


def _encode_nifti(volume: Volume) -> bytes:
    if volume.nifti_header is not None and len(volume.nifti_header) == _NIFTI_HDR_SIZE:
        hdr = bytearray(volume.nifti_header)
    else:
        hdr = bytearray(_NIFTI_HDR_SIZE)
        struct.pack_into("<b", hdr, 38, ord("r"))
        struct.pack_into("<8f", hdr, 76, 1.0, 0, 0, 0, 1.0, 0, 0, 0)
        struct.pack_into("<B", hdr, 123, 2)  # xyzt_units: mm
        hdr[344:348] = b"n+1\x00"
    code, bitpix = _NIFTI_WRITE_CODES[volume.dtype]
    struct.pack_into("<i", hdr, 0, _NIFTI_HDR_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, *volume.dims, 1, 1, 1, 1)
    struct.pack_into("<3h", hdr, 70, code, bitpix, 0)
    pixdim = list(struct.unpack_from("<8f", hdr, 76))
    pixdim[1:4] = volume.spacing
    pixdim[0] = pixdim[0] if pixdim[0] in (-1.0, 1.0) else 1.0
    struct.pack_into("<8f", hdr, 76, *pixdim)
    struct.pack_into("<3f", hdr, 108, float(_NIFTI_VOX_OFFSET), 1.0, 0.0)
    struct.pack_into("<2f", hdr, 124, 0.0, 0.0)  # cal_max / cal_min
    hdr[344:348] = b"n+1\x00"
    le = volume.array.dtype.newbyteorder("<")
    return bytes(hdr) + b"\x00" * 4 + volume.data.astype(le, copy=False).tobytes()
