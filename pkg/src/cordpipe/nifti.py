"""Bit-exact NIfTI-1 reading and writing plus the sparse-annotation sidecar.

Only the single-file layout is produced on write: 348-byte header,
4-byte extension flag, voxel payload at offset 352, always little-endian.
Reads auto-detect gzip compression and byte order. Supported datatypes
are uint8 (2), int16 (4) and float32 (16); anything else is rejected
rather than silently cast.

The sparse-annotation sidecar is a JSON document::

    { "volume_id": str, "z_indices": [int, ...], "planes_nifti": str }

where ``planes_nifti`` names a companion NIfTI of shape (H, W, K) whose
K axial planes are the annotated label planes, in ``z_indices`` order.
"""

from __future__ import annotations

import gzip
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    FormatError,
    LabelRangeError,
    SidecarError,
    TruncatedPayloadError,
    UnsupportedDatatypeError,
    ValidationError,
)
from .volume import (
    LESION_GM,
    MAGNITUDE,
    LabelVolume,
    ScalarVolume,
    Spacing,
)

HEADER_SIZE = 348
SINGLE_FILE_VOX_OFFSET = 352

DT_UINT8 = 2
DT_INT16 = 4
DT_FLOAT32 = 16

_DTYPES = {
    DT_UINT8: (np.dtype(np.uint8), 8),
    DT_INT16: (np.dtype(np.int16), 16),
    DT_FLOAT32: (np.dtype(np.float32), 32),
}
_CODES = {np.dtype(np.uint8): DT_UINT8,
          np.dtype(np.int16): DT_INT16,
          np.dtype(np.float32): DT_FLOAT32}

# (struct format, field name) in on-disk order; formats are prefixed with
# the detected byte order at parse time. Offsets: dim @40, datatype @70,
# bitpix @72, pixdim @76, vox_offset @108, scl @112/116, magic @344.
_FIELDS = [
    ("i", "sizeof_hdr"),
    ("10s", "data_type"),
    ("18s", "db_name"),
    ("i", "extents"),
    ("h", "session_error"),
    ("c", "regular"),
    ("B", "dim_info"),
    ("8h", "dim"),
    ("f", "intent_p1"),
    ("f", "intent_p2"),
    ("f", "intent_p3"),
    ("h", "intent_code"),
    ("h", "datatype"),
    ("h", "bitpix"),
    ("h", "slice_start"),
    ("8f", "pixdim"),
    ("f", "vox_offset"),
    ("f", "scl_slope"),
    ("f", "scl_inter"),
    ("h", "slice_end"),
    ("B", "slice_code"),
    ("B", "xyzt_units"),
    ("f", "cal_max"),
    ("f", "cal_min"),
    ("f", "slice_duration"),
    ("f", "toffset"),
    ("i", "glmax"),
    ("i", "glmin"),
    ("80s", "descrip"),
    ("24s", "aux_file"),
    ("h", "qform_code"),
    ("h", "sform_code"),
    ("f", "quatern_b"),
    ("f", "quatern_c"),
    ("f", "quatern_d"),
    ("f", "qoffset_x"),
    ("f", "qoffset_y"),
    ("f", "qoffset_z"),
    ("4f", "srow_x"),
    ("4f", "srow_y"),
    ("4f", "srow_z"),
    ("16s", "intent_name"),
    ("4s", "magic"),
]


@dataclass
class NiftiHeader:
    """Decoded subset of the 348-byte NIfTI-1 header."""

    dim: tuple[int, ...]
    datatype: int
    bitpix: int
    pixdim: tuple[float, ...]
    vox_offset: int
    scl_slope: float
    scl_inter: float
    magic: bytes
    byte_order: str  # "<" or ">"

    @property
    def shape(self) -> tuple[int, int, int]:
        nd = self.dim[0]
        h, w = self.dim[1], self.dim[2]
        z = self.dim[3] if nd >= 3 else 1
        return (h, w, z)

    @property
    def spacing(self) -> Spacing:
        dx, dy = self.pixdim[1], self.pixdim[2]
        dz = self.pixdim[3] if self.dim[0] >= 3 and self.pixdim[3] > 0 else 1.0
        return Spacing(float(dx), float(dy), float(dz))


def _maybe_gunzip(raw: bytes) -> bytes:
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except OSError as exc:
            raise FormatError(f"gzip stream failed to decode: {exc}") from exc
    return raw


def parse_header(raw: bytes) -> NiftiHeader:
    """Parse and validate the fixed 348-byte header."""
    raw = _maybe_gunzip(raw)
    if len(raw) < HEADER_SIZE:
        raise TruncatedPayloadError(f"stream of {len(raw)} bytes is shorter than a header")

    if struct.unpack_from("<i", raw, 0)[0] == HEADER_SIZE:
        order = "<"
    elif struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
        order = ">"
    else:
        raise FormatError("sizeof_hdr is not 348 in either byte order")

    fields = {}
    off = 0
    for fmt, name in _FIELDS:
        size = struct.calcsize(fmt)
        val = struct.unpack_from(order + fmt, raw, off)
        fields[name] = val if len(val) > 1 else val[0]
        off += size
    assert off == HEADER_SIZE

    magic = fields["magic"]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise BadMagicError(f"unrecognized magic {magic!r}")

    nd = fields["dim"][0]
    if nd not in (2, 3):
        raise FormatError(f"dim[0] must be 2 or 3, got {nd}")

    dt = fields["datatype"]
    if dt not in _DTYPES:
        raise UnsupportedDatatypeError(f"datatype code {dt} not in supported set {sorted(_DTYPES)}")
    if fields["bitpix"] != _DTYPES[dt][1]:
        raise FormatError(f"bitpix {fields['bitpix']} inconsistent with datatype {dt}")

    return NiftiHeader(
        dim=tuple(int(d) for d in fields["dim"]),
        datatype=int(dt),
        bitpix=int(fields["bitpix"]),
        pixdim=tuple(float(p) for p in fields["pixdim"]),
        vox_offset=int(fields["vox_offset"]),
        scl_slope=float(fields["scl_slope"]),
        scl_inter=float(fields["scl_inter"]),
        magic=magic,
        byte_order=order,
    )


def _read_payload(raw: bytes, hdr: NiftiHeader) -> np.ndarray:
    if hdr.magic == b"ni1\x00":
        raise FormatError("two-file (ni1) streams carry no payload; only n+1 is readable")
    h, w, z = hdr.shape
    if min(h, w, z) <= 0:
        raise FormatError(f"non-positive header dims {hdr.shape}")
    dtype = _DTYPES[hdr.datatype][0].newbyteorder(hdr.byte_order)
    count = h * w * z
    start = hdr.vox_offset
    if start < HEADER_SIZE:
        raise FormatError(f"vox_offset {start} overlaps the header")
    end = start + count * dtype.itemsize
    if len(raw) < end:
        raise TruncatedPayloadError(
            f"payload needs {end - start} bytes at offset {start}, stream has {len(raw) - start}"
        )
    flat = np.frombuffer(raw, dtype=dtype, count=count, offset=start)
    # Serialized order is x fastest, matching Fortran order of (H, W, Z).
    return np.asfortranarray(flat.reshape((h, w, z), order="F"))


def read_nifti(raw: bytes, labels: bool = False, channel: str = MAGNITUDE):
    """Decode a NIfTI-1 stream into a ScalarVolume or LabelVolume.

    ``labels=True`` enforces an integer datatype, no intensity scaling
    and class ids within 0..4.
    """
    raw = _maybe_gunzip(raw)
    hdr = parse_header(raw)
    arr = _read_payload(raw, hdr)
    spacing = hdr.spacing

    if labels:
        if hdr.datatype == DT_FLOAT32:
            raise UnsupportedDatatypeError("label volumes require an integer datatype")
        if hdr.scl_slope not in (0.0, 1.0) or hdr.scl_inter != 0.0:
            raise FormatError("label volumes must not carry intensity scaling")
        if arr.size and (arr.min() < 0 or arr.max() > LESION_GM):
            bad = int(arr.min()) if arr.min() < 0 else int(arr.max())
            raise LabelRangeError(f"label id {bad} outside 0..{LESION_GM}")
        return LabelVolume(arr.astype(np.uint8), spacing)

    data = arr.astype(np.float32)
    if hdr.scl_slope != 0.0 and (hdr.scl_slope != 1.0 or hdr.scl_inter != 0.0):
        data = data * np.float32(hdr.scl_slope) + np.float32(hdr.scl_inter)
    if not np.all(np.isfinite(data)):
        raise FormatError("payload contains non-finite values")
    return ScalarVolume(data, spacing, channel)


def _pack_header(shape, spacing: Spacing, datatype: int) -> bytes:
    dtype, bitpix = _DTYPES[datatype]
    buf = bytearray(HEADER_SIZE)
    struct.pack_into("<i", buf, 0, HEADER_SIZE)
    struct.pack_into("<c", buf, 38, b"r")
    struct.pack_into("<8h", buf, 40, 3, shape[0], shape[1], shape[2], 1, 1, 1, 1)
    struct.pack_into("<h", buf, 70, datatype)
    struct.pack_into("<h", buf, 72, bitpix)
    struct.pack_into("<8f", buf, 76, 1.0, spacing.dx, spacing.dy, spacing.dz, 0, 0, 0, 0)
    struct.pack_into("<f", buf, 108, float(SINGLE_FILE_VOX_OFFSET))
    struct.pack_into("<f", buf, 112, 1.0)  # scl_slope
    struct.pack_into("<f", buf, 116, 0.0)  # scl_inter
    struct.pack_into("<B", buf, 123, 2)    # xyzt_units: millimeters
    struct.pack_into("<4s", buf, 344, b"n+1\x00")
    return bytes(buf)


def write_nifti(vol, datatype: int | None = None) -> bytes:
    """Encode a volume as single-file little-endian NIfTI-1 bytes.

    Scalar volumes default to float32; pass ``datatype=DT_INT16`` to
    store integral intensities as int16. Labels are always uint8.
    """
    if isinstance(vol, LabelVolume):
        if datatype not in (None, DT_UINT8):
            raise ValidationError("label volumes are written as uint8")
        payload = vol.data.astype(np.uint8)
        datatype = DT_UINT8
    elif isinstance(vol, ScalarVolume):
        if not np.all(np.isfinite(vol.data)):
            raise ValidationError("cannot write non-finite intensities")
        if datatype is None or datatype == DT_FLOAT32:
            payload = vol.data.astype(np.float32)
            datatype = DT_FLOAT32
        elif datatype == DT_INT16:
            rounded = np.rint(vol.data)
            if not np.array_equal(rounded, vol.data):
                raise ValidationError("int16 output requires integral intensities")
            info = np.iinfo(np.int16)
            if vol.data.min() < info.min or vol.data.max() > info.max:
                raise ValidationError("intensities exceed the int16 range")
            payload = vol.data.astype(np.int16)
        else:
            raise UnsupportedDatatypeError(f"cannot write datatype code {datatype}")
    else:
        raise ValidationError(f"cannot serialize object of type {type(vol).__name__}")

    hdr = _pack_header(vol.dims, vol.spacing, datatype)
    out = io.BytesIO()
    out.write(hdr)
    out.write(b"\x00\x00\x00\x00")  # no extensions
    little = payload.dtype.newbyteorder("<")
    out.write(payload.astype(little, copy=False).flatten(order="F").tobytes())
    return out.getvalue()


def gzip_nifti(raw: bytes) -> bytes:
    """Deterministically gzip an encoded stream (mtime pinned to 0)."""
    buf = io.BytesIO()
    with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as fh:
        fh.write(raw)
    return buf.getvalue()


@dataclass(eq=False)
class SparseAnnotation:
    """Sparsely annotated axial slices: indices plus their label planes."""

    volume_id: str
    z_indices: list[int]
    planes: np.ndarray  # (H, W, K) uint8, plane k annotates z_indices[k]

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.uint8)
        if self.planes.ndim != 3:
            raise SidecarError(f"planes must be (H, W, K), got shape {self.planes.shape}")
        if len(self.z_indices) != self.planes.shape[2]:
            raise SidecarError(
                f"{len(self.z_indices)} indices but {self.planes.shape[2]} planes"
            )
        if any(b <= a for a, b in zip(self.z_indices, self.z_indices[1:])):
            raise SidecarError("z indices must be strictly increasing and unique")
        if any(z < 0 for z in self.z_indices):
            raise SidecarError("negative z index")
        if self.planes.size and self.planes.max() > LESION_GM:
            raise LabelRangeError("annotation plane contains an id outside 0..4")

    def __len__(self) -> int:
        return len(self.z_indices)

    @property
    def plane_dims(self) -> tuple[int, int]:
        return self.planes.shape[:2]

    def plane_for(self, z: int) -> np.ndarray:
        k = self.z_indices.index(z)
        return self.planes[:, :, k]


def write_sparse_annotation(ann: SparseAnnotation, planes_filename: str,
                            spacing: Spacing) -> tuple[bytes, bytes]:
    """Serialize to (sidecar JSON bytes, companion planes NIfTI bytes)."""
    doc = {
        "volume_id": ann.volume_id,
        "z_indices": list(int(z) for z in ann.z_indices),
        "planes_nifti": planes_filename,
    }
    planes_vol = LabelVolume(ann.planes, spacing)
    return (json.dumps(doc, indent=2).encode() + b"\n", write_nifti(planes_vol))


def read_sparse_annotation(json_bytes: bytes, planes_bytes: bytes,
                           ref_dims: tuple[int, int, int]) -> SparseAnnotation:
    """Decode sidecar JSON plus its companion planes file.

    Validated against the reference volume: indices within [0, Z),
    plane shape equal to (H, W).
    """
    try:
        doc = json.loads(json_bytes)
    except json.JSONDecodeError as exc:
        raise SidecarError(f"sidecar is not valid JSON: {exc}") from exc
    for key in ("volume_id", "z_indices", "planes_nifti"):
        if key not in doc:
            raise SidecarError(f"sidecar missing key {key!r}")
    z_indices = [int(z) for z in doc["z_indices"]]
    if len(set(z_indices)) != len(z_indices):
        raise SidecarError("duplicate z index in sidecar")
    h, w, z_extent = ref_dims
    if any(not 0 <= z < z_extent for z in z_indices):
        raise SidecarError(f"z index outside [0, {z_extent})")

    planes_vol = read_nifti(planes_bytes, labels=True)
    if planes_vol.dims[:2] != (h, w):
        raise SidecarError(
            f"annotation planes are {planes_vol.dims[:2]}, volume planes are {(h, w)}"
        )
    if planes_vol.dims[2] != len(z_indices):
        raise SidecarError("plane count does not match the index list")
    return SparseAnnotation(str(doc["volume_id"]), sorted(z_indices),
                            planes_vol.data[:, :, np.argsort(z_indices)])


def densify(ann: SparseAnnotation, z_extent: int,
            spacing: Spacing) -> tuple[LabelVolume, np.ndarray]:
    """Expand sparse planes to a dense volume plus an annotated-z mask.

    Unannotated slices are background; the boolean mask records which
    slices carry real annotations.
    """
    if any(z >= z_extent for z in ann.z_indices):
        raise SidecarError(f"annotation index beyond z extent {z_extent}")
    h, w = ann.plane_dims
    data = np.zeros((h, w, z_extent), dtype=np.uint8)
    mask = np.zeros(z_extent, dtype=bool)
    for k, z in enumerate(ann.z_indices):
        data[:, :, z] = ann.planes[:, :, k]
        mask[z] = True
    return LabelVolume(data, spacing), mask
