"""Volumetric data model: intensity volumes, label volumes, patch geometry.

Conventions used everywhere in this package:

* A volume has dims ``(H, W, Z)``; an axial slice is the 2D plane
  ``(H, W)`` at a fixed ``z``. Coordinates are ``(x, y, z)`` with
  ``x`` indexing the first axis.
* Linearization is x-fastest, then y, then z (axial slices are
  contiguous blocks), which keeps on-disk serialization deterministic.
* Intensities are float32, labels are uint8 class ids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError

# Exclusive class ids.
BACKGROUND = 0
HEALTHY_WM = 1
HEALTHY_GM = 2
LESION_WM = 3
LESION_GM = 4

FOREGROUND_CLASSES = (HEALTHY_WM, HEALTHY_GM, LESION_WM, LESION_GM)
ALL_CLASSES = (BACKGROUND,) + FOREGROUND_CLASSES

CLASS_NAMES = {
    BACKGROUND: "background",
    HEALTHY_WM: "healthy_wm",
    HEALTHY_GM: "healthy_gm",
    LESION_WM: "lesion_wm",
    LESION_GM: "lesion_gm",
}

MAGNITUDE = "magnitude"
PHASE = "phase"

# Native acquisition: 75 um isotropic.
DEFAULT_SPACING_MM = 0.075

# Guard against absurd allocations from corrupt headers.
_MAX_VOXELS = 2**40


@dataclass(frozen=True)
class Spacing:
    """Physical voxel size in millimeters along each axis."""

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        for name, v in (("dx", self.dx), ("dy", self.dy), ("dz", self.dz)):
            if not np.isfinite(v) or v <= 0:
                raise ValidationError(f"spacing {name} must be positive and finite, got {v!r}")

    @classmethod
    def isotropic(cls, s: float = DEFAULT_SPACING_MM) -> "Spacing":
        return cls(s, s, s)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dz)


def _check_dims(dims) -> tuple[int, int, int]:
    if len(dims) != 3:
        raise DimensionError(f"expected 3 dims, got {dims!r}")
    h, w, z = (int(d) for d in dims)
    if h <= 0 or w <= 0 or z <= 0:
        raise DimensionError(f"dims must be positive, got {dims!r}")
    if h * w * z > _MAX_VOXELS:
        raise DimensionError(f"dims {dims!r} overflow the supported volume size")
    return h, w, z


@dataclass(eq=False)
class ScalarVolume:
    """3D grid of float32 intensities for one channel (magnitude or phase)."""

    data: np.ndarray
    spacing: Spacing
    channel: str = MAGNITUDE

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise DimensionError(f"scalar volume must be 3D, got shape {self.data.shape}")
        _check_dims(self.data.shape)
        if not np.all(np.isfinite(self.data)):
            raise ValidationError("scalar volume contains non-finite values")
        if self.channel not in (MAGNITUDE, PHASE):
            raise ValidationError(f"unknown channel {self.channel!r}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(eq=False)
class LabelVolume:
    """3D grid of mutually exclusive class ids in 0..4."""

    data: np.ndarray
    spacing: Spacing

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise DimensionError(f"label volume must be 3D, got shape {arr.shape}")
        _check_dims(arr.shape)
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValidationError(f"label data must be integer, got dtype {arr.dtype}")
            arr = arr.astype(np.uint8, casting="unsafe")
        if arr.size and arr.max() > LESION_GM:
            raise ValidationError(
                f"label volume contains id {int(arr.max())} outside 0..{LESION_GM}"
            )
        self.data = arr

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def class_mask(self, class_id: int) -> np.ndarray:
        return self.data == class_id


@dataclass(eq=False)
class SoftLabelVolume:
    """Per-class probability grids; channel c-1 holds class id c.

    Values are constrained to [0, 1]; voxels outside any boundary margin
    carry exact 0 or 1.
    """

    channels: np.ndarray  # (4, H, W, Z) float32
    spacing: Spacing

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.ndim != 4 or self.channels.shape[0] != len(FOREGROUND_CLASSES):
            raise DimensionError(
                f"soft label volume needs shape (4, H, W, Z), got {self.channels.shape}"
            )
        _check_dims(self.channels.shape[1:])
        if self.channels.size and (self.channels.min() < 0 or self.channels.max() > 1):
            raise ValidationError("soft label values must lie in [0, 1]")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.channels.shape[1:]

    def class_channel(self, class_id: int) -> np.ndarray:
        if class_id not in FOREGROUND_CLASSES:
            raise ValidationError(f"no soft channel for class id {class_id}")
        return self.channels[class_id - 1]


@dataclass(frozen=True)
class PatchSpec:
    """Patch extent in voxels along (x, y, z)."""

    px: int
    py: int
    pz: int
    name: str = ""

    def __post_init__(self):
        if min(self.px, self.py, self.pz) < 1:
            raise DimensionError(f"patch extents must be >= 1, got {self!r}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.px, self.py, self.pz)


# Slab-like profile: full axial field of view, moderate depth.
PATCH5 = PatchSpec(192, 208, 64, name="patch5")


def patch1(px: int, py: int) -> PatchSpec:
    """Pencil-like profile: deepest z extent, in-plane extents user-chosen."""
    return PatchSpec(px, py, 144, name="patch1")


def linear_index(dims: tuple[int, int, int], x: int, y: int, z: int) -> int:
    """Map (x, y, z) to the serialized voxel offset (x fastest)."""
    h, w, _ = dims
    return x + h * (y + w * z)


def decode_index(dims: tuple[int, int, int], idx: int) -> tuple[int, int, int]:
    """Inverse of :func:`linear_index`."""
    h, w, _ = dims
    x = idx % h
    rest = idx // h
    return x, rest % w, rest // w


def new_scalar_volume(dims, spacing: Spacing, fill: float = 0.0,
                      channel: str = MAGNITUDE) -> ScalarVolume:
    """Allocate a constant-filled volume."""
    h, w, z = _check_dims(dims)
    if not np.isfinite(fill):
        raise ValidationError(f"fill value must be finite, got {fill!r}")
    return ScalarVolume(np.full((h, w, z), fill, dtype=np.float32), spacing, channel)


def new_label_volume(dims, spacing: Spacing) -> LabelVolume:
    h, w, z = _check_dims(dims)
    return LabelVolume(np.zeros((h, w, z), dtype=np.uint8), spacing)


def extract_patch(vol, origin, spec: PatchSpec, pad_value=None):
    """Copy a patch of exactly ``spec`` voxels starting at ``origin``.

    Out-of-bounds regions are filled with ``pad_value`` (0 for images,
    background for labels). The origin may be negative or beyond the
    volume; padding covers any overhang.
    """
    is_labels = isinstance(vol, LabelVolume)
    if pad_value is None:
        pad_value = BACKGROUND if is_labels else 0.0
    ox, oy, oz = (int(v) for v in origin)
    h, w, z = vol.dims
    px, py, pz = spec.as_tuple()

    if is_labels:
        out = np.full((px, py, pz), int(pad_value), dtype=np.uint8)
    else:
        out = np.full((px, py, pz), float(pad_value), dtype=np.float32)

    # Overlap between the requested box and the volume, in both frames.
    sx0, sx1 = max(ox, 0), min(ox + px, h)
    sy0, sy1 = max(oy, 0), min(oy + py, w)
    sz0, sz1 = max(oz, 0), min(oz + pz, z)
    if sx0 < sx1 and sy0 < sy1 and sz0 < sz1:
        out[sx0 - ox:sx1 - ox, sy0 - oy:sy1 - oy, sz0 - oz:sz1 - oz] = \
            vol.data[sx0:sx1, sy0:sy1, sz0:sz1]

    if is_labels:
        return LabelVolume(out, vol.spacing)
    return ScalarVolume(out, vol.spacing, vol.channel)


def axial_slice(vol, z: int) -> np.ndarray:
    """Return a copy of the (H, W) plane at slice index ``z``."""
    _check_z(vol, z)
    return vol.data[:, :, z].copy()


def set_axial_slice(vol, z: int, plane: np.ndarray) -> None:
    """Overwrite the plane at ``z``; the set-then-get round-trip is exact."""
    _check_z(vol, z)
    plane = np.asarray(plane)
    if plane.shape != vol.dims[:2]:
        raise DimensionError(
            f"plane shape {plane.shape} does not match volume plane {vol.dims[:2]}"
        )
    if isinstance(vol, LabelVolume):
        if plane.size and plane.max() > LESION_GM:
            raise ValidationError("plane contains a label id outside 0..4")
        vol.data[:, :, z] = plane.astype(np.uint8)
    else:
        if not np.all(np.isfinite(plane)):
            raise ValidationError("plane contains non-finite values")
        vol.data[:, :, z] = plane.astype(np.float32)


def _check_z(vol, z: int) -> None:
    if not 0 <= z < vol.dims[2]:
        raise IndexError(f"slice index {z} outside [0, {vol.dims[2]})")
