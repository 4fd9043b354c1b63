"""Conversion between exclusive class labels and overlapping training
regions (white matter, gray matter, all lesions), and the merge that
resolves regional predictions back into exclusive labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .volume import (
    HEALTHY_GM,
    HEALTHY_WM,
    LESION_GM,
    LESION_WM,
    LabelVolume,
    Spacing,
)


@dataclass(eq=False)
class RegionStack:
    """Three probability grids of equal shape: wm, gm and all-lesions.

    Shape may be 2D (one axial plane) or 3D (a volume); values in [0, 1],
    binary when derived from hard labels.
    """

    wm: np.ndarray
    gm: np.ndarray
    lesion: np.ndarray

    def __post_init__(self):
        self.wm = np.asarray(self.wm, dtype=np.float32)
        self.gm = np.asarray(self.gm, dtype=np.float32)
        self.lesion = np.asarray(self.lesion, dtype=np.float32)
        if not (self.wm.shape == self.gm.shape == self.lesion.shape):
            raise DimensionError("region channels must share one shape")
        if self.wm.ndim not in (2, 3):
            raise DimensionError(f"region stack must be 2D or 3D, got {self.wm.ndim}D")
        for name, ch in (("wm", self.wm), ("gm", self.gm), ("lesion", self.lesion)):
            if ch.size and (ch.min() < 0 or ch.max() > 1):
                raise ValidationError(f"region channel {name} outside [0, 1]")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.wm.shape

    def channels(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.wm, self.gm, self.lesion)


def to_regions(labels: LabelVolume | np.ndarray) -> RegionStack:
    """Expand exclusive labels into the overlapping region channels.

    wm covers healthy and lesioned white matter, gm likewise for gray
    matter, and lesion covers lesions of either tissue, so Lesion WM is
    recoverable as the intersection of wm and lesion.
    """
    data = labels.data if isinstance(labels, LabelVolume) else np.asarray(labels)
    wm = np.isin(data, (HEALTHY_WM, LESION_WM)).astype(np.float32)
    gm = np.isin(data, (HEALTHY_GM, LESION_GM)).astype(np.float32)
    lesion = np.isin(data, (LESION_WM, LESION_GM)).astype(np.float32)
    return RegionStack(wm, gm, lesion)


def merge_region_arrays(wm: np.ndarray, gm: np.ndarray, lesion: np.ndarray,
                        tissue_thresh: float = 0.5,
                        lesion_thresh: float = 0.5) -> np.ndarray:
    """Resolve region probabilities into exclusive class ids.

    A voxel is background when neither tissue channel reaches
    ``tissue_thresh``; otherwise the stronger tissue wins (ties go to
    gray matter). The lesion flag upgrades tissue voxels only; lesion
    signal over background is dropped.
    """
    tissue_max = np.maximum(wm, gm)
    tissue = np.where(tissue_max < tissue_thresh, 0,
                      np.where(gm >= wm, HEALTHY_GM, HEALTHY_WM))
    lesioned = (lesion >= lesion_thresh) & (tissue > 0)
    return (tissue + 2 * lesioned).astype(np.uint8)


def merge_regions(stack: RegionStack, spacing: Spacing,
                  tissue_thresh: float = 0.5,
                  lesion_thresh: float = 0.5) -> LabelVolume:
    """3D variant of :func:`merge_region_arrays` returning a LabelVolume."""
    if stack.wm.ndim != 3:
        raise DimensionError("merge_regions needs a 3D stack; use merge_region_arrays for planes")
    data = merge_region_arrays(stack.wm, stack.gm, stack.lesion,
                               tissue_thresh, lesion_thresh)
    return LabelVolume(data, spacing)
