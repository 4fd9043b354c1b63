"""Boundary-uncertainty soft targets from hard labels.

Boundary margins come from morphological gradients (dilation minus
erosion) with per-class square kernels, computed per axial slice.
Inside a class's margin the target drops from 1 to the class weight
alpha; outside any margin the targets stay exactly 0 or 1.

The margin is symmetric around the boundary. On the outer side, alpha
is written only onto background voxels: uncertainty may spread into
unclaimed space but never onto voxels committed to another class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ValidationError
from .volume import (
    BACKGROUND,
    FOREGROUND_CLASSES,
    HEALTHY_GM,
    HEALTHY_WM,
    LESION_GM,
    LESION_WM,
    LabelVolume,
    SoftLabelVolume,
    Spacing,
)


@dataclass(frozen=True)
class SoftProfile:
    """Per-class weight alpha in (0, 1] and odd kernel size >= 3."""

    weights: dict
    kernels: dict
    name: str = ""

    def __post_init__(self):
        for cid in FOREGROUND_CLASSES:
            if cid not in self.weights or cid not in self.kernels:
                raise ConfigError(f"profile missing class id {cid}")
            a = self.weights[cid]
            k = self.kernels[cid]
            if not 0 < a <= 1:
                raise ConfigError(f"weight for class {cid} must be in (0, 1], got {a}")
            _check_kernel(k)


def _check_kernel(k: int) -> None:
    if k % 2 == 0 or k < 3:
        raise ConfigError(f"kernel size must be odd and >= 3, got {k}")


SOFT1 = SoftProfile(
    weights={HEALTHY_WM: 0.9, HEALTHY_GM: 0.9, LESION_WM: 0.6, LESION_GM: 0.4},
    kernels={HEALTHY_WM: 7, HEALTHY_GM: 3, LESION_WM: 5, LESION_GM: 7},
    name="soft1",
)
SOFT2 = SoftProfile(
    weights={HEALTHY_WM: 0.9, HEALTHY_GM: 0.9, LESION_WM: 0.6, LESION_GM: 0.4},
    kernels={HEALTHY_WM: 7, HEALTHY_GM: 3, LESION_WM: 3, LESION_GM: 3},
    name="soft2",
)
SOFT3 = SoftProfile(
    weights={HEALTHY_WM: 0.7, HEALTHY_GM: 0.6, LESION_WM: 0.2, LESION_GM: 0.2},
    kernels={HEALTHY_WM: 5, HEALTHY_GM: 3, LESION_WM: 3, LESION_GM: 3},
    name="soft3",
)

PROFILES = {p.name: p for p in (SOFT1, SOFT2, SOFT3)}

# Rarest class wins hardening ties.
_HARDEN_PRIORITY = (LESION_GM, LESION_WM, HEALTHY_GM, HEALTHY_WM)


def boundary_margin(mask: np.ndarray, k: int) -> np.ndarray:
    """Morphological gradient of a binary plane: dilation minus erosion.

    Uses a k x k square structuring element with a zero-padded exterior,
    so erosion shrinks at the plane border.
    """
    _check_kernel(k)
    mask = np.asarray(mask).astype(bool)
    if mask.ndim != 2:
        raise ValidationError(f"margin expects a 2D plane, got shape {mask.shape}")
    se = np.ones((k, k), dtype=bool)
    dil = ndimage.binary_dilation(mask, structure=se, border_value=0)
    ero = ndimage.binary_erosion(mask, structure=se, border_value=0)
    return (dil & ~ero).astype(np.uint8)


def soften_plane(labels: np.ndarray, profile: SoftProfile) -> np.ndarray:
    """Soft targets for one label plane; returns (4, H, W) float32."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValidationError(f"expected a 2D label plane, got shape {labels.shape}")
    bg = labels == BACKGROUND
    out = np.zeros((len(FOREGROUND_CLASSES),) + labels.shape, dtype=np.float32)
    for cid in FOREGROUND_CLASSES:
        mask = labels == cid
        if not mask.any():
            continue
        alpha = np.float32(profile.weights[cid])
        margin = boundary_margin(mask, profile.kernels[cid]).astype(bool)
        ch = out[cid - 1]
        ch[mask & ~margin] = 1.0
        ch[margin & mask] = alpha
        ch[margin & ~mask & bg] = alpha
    return out


def soften(labels: LabelVolume, profile: SoftProfile) -> SoftLabelVolume:
    """Soft targets for a volume, computed slice by slice."""
    h, w, z = labels.dims
    channels = np.zeros((len(FOREGROUND_CLASSES), h, w, z), dtype=np.float32)
    for zi in range(z):
        channels[:, :, :, zi] = soften_plane(labels.data[:, :, zi], profile)
    return SoftLabelVolume(channels, labels.spacing)


def harden(soft: SoftLabelVolume, threshold: float = 0.5) -> LabelVolume:
    """Collapse soft targets to exclusive labels.

    Per voxel: argmax over class channels restricted to values >=
    threshold, background if none qualifies. Ties go to the rarest
    class (Lesion GM > Lesion WM > Healthy GM > Healthy WM).

    Lossy by design when a class weight sits below the threshold: its
    margin voxels fall back to background.
    """
    ordered = np.stack([soft.channels[cid - 1] for cid in _HARDEN_PRIORITY])
    best = np.argmax(ordered, axis=0)  # first (highest-priority) maximum wins
    best_val = np.take_along_axis(ordered, best[None], axis=0)[0]
    ids = np.asarray(_HARDEN_PRIORITY, dtype=np.uint8)[best]
    ids[best_val < threshold] = BACKGROUND
    return LabelVolume(ids, soft.spacing)


def soften_array(labels: np.ndarray, spacing: Spacing,
                 profile: SoftProfile) -> SoftLabelVolume:
    """Convenience wrapper accepting a raw (H, W, Z) label array."""
    return soften(LabelVolume(labels, spacing), profile)
