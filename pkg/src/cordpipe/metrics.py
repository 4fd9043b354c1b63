"""Evaluation metrics: Dice overlap, 95th-percentile symmetric surface
distance (HD95) in millimeters, inter-slice Dice (DSC_z) for longitudinal
smoothness, per-volume reports and fold aggregation.

Conventions frozen here because they change the numbers: surfaces are
foreground voxels with at least one background 6-neighbor under a
zero-padded exterior (so volume-border voxels count as surface);
distances run between voxel centers; percentiles interpolate linearly
between order statistics. Undefined values are carried as ``None`` and
excluded from means rather than imputed.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ValidationError
from .nifti import SparseAnnotation
from .volume import CLASS_NAMES, FOREGROUND_CLASSES, LabelVolume, Spacing


def dice(g: np.ndarray, p: np.ndarray) -> float | None:
    """Dice overlap 2|G∩P| / (|G| + |P|); None when both sets are empty."""
    g = np.asarray(g, dtype=bool)
    p = np.asarray(p, dtype=bool)
    if g.shape != p.shape:
        raise DimensionError(f"shape mismatch {g.shape} vs {p.shape}")
    denom = int(g.sum()) + int(p.sum())
    if denom == 0:
        return None
    return 2.0 * int(np.logical_and(g, p).sum()) / denom


def surface_mask(mask: np.ndarray) -> np.ndarray:
    """Boundary voxels: foreground with a background 6-neighbor.

    The exterior is zero-padded, so foreground touching the volume border
    is surface. Works for 2D planes too (4-neighborhood).
    """
    mask = np.asarray(mask, dtype=bool)
    interior = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(mask.ndim, 1),
                                      border_value=0)
    return mask & ~interior


def _directed_distances(src_surface: np.ndarray, dst_surface: np.ndarray,
                        sampling) -> np.ndarray:
    """Distance in mm from each src surface voxel to the nearest dst one."""
    dist_to_dst = ndimage.distance_transform_edt(~dst_surface, sampling=sampling)
    return dist_to_dst[src_surface]


def hd95(g: np.ndarray, p: np.ndarray, spacing: Spacing) -> float | None:
    """Symmetric 95th-percentile surface distance in millimeters.

    Returns 0.0 when the masks are identical (including both empty) and
    None when exactly one is empty, which has no meaningful distance.
    """
    g = np.asarray(g, dtype=bool)
    p = np.asarray(p, dtype=bool)
    if g.shape != p.shape:
        raise DimensionError(f"shape mismatch {g.shape} vs {p.shape}")
    g_empty, p_empty = not g.any(), not p.any()
    if g_empty and p_empty:
        return 0.0
    if g_empty or p_empty:
        return None

    sampling = spacing.as_tuple()[:g.ndim]
    gs, ps = surface_mask(g), surface_mask(p)
    d_gp = _directed_distances(gs, ps, sampling)
    d_pg = _directed_distances(ps, gs, sampling)
    h_gp = float(np.percentile(d_gp, 95))
    h_pg = float(np.percentile(d_pg, 95))
    return max(h_gp, h_pg)


def inter_slice_dice(labels: LabelVolume, class_id: int) -> float | None:
    """Mean Dice between consecutive axial slices of one class.

    Transitions where the class is absent from both slices are excluded;
    with no valid transition the metric is undefined (None).
    """
    if labels.dims[2] < 2:
        raise DimensionError("inter-slice Dice needs at least 2 slices")
    mask = labels.data == class_id
    counts = mask.sum(axis=(0, 1)).astype(np.int64)
    inter = np.logical_and(mask[:, :, :-1], mask[:, :, 1:]).sum(axis=(0, 1)).astype(np.int64)
    denom = counts[:-1] + counts[1:]
    valid = denom > 0
    if not valid.any():
        return None
    return float(np.mean(2.0 * inter[valid] / denom[valid]))


@dataclass
class ClassMetrics:
    """Per-class scores; None marks a metric undefined on this volume."""

    class_id: int
    dice: float | None
    hd95_mm: float | None
    dscz: float | None
    present_in_gt: bool
    present_in_pred: bool


@dataclass
class MetricsReport:
    """Per-class metrics plus foreground means for one evaluated volume."""

    per_class: dict[int, ClassMetrics]
    mean_dice: float | None
    mean_hd95: float | None
    evaluated_slices: int
    sparse_gt: bool
    volume_id: str = ""

    def to_json_dict(self) -> dict:
        out = {
            "volume_id": self.volume_id,
            "scope": {"evaluated_slices": self.evaluated_slices,
                      "sparse_gt": self.sparse_gt},
            "mean_foreground_dice": self.mean_dice,
            "mean_foreground_hd95_mm": self.mean_hd95,
            "classes": {},
        }
        for cid, cm in sorted(self.per_class.items()):
            out["classes"][CLASS_NAMES[cid]] = {
                "dice": cm.dice,
                "hd95_mm": cm.hd95_mm,
                "dscz": cm.dscz,
                "present_in_gt": cm.present_in_gt,
                "present_in_pred": cm.present_in_pred,
            }
        return out


CSV_COLUMNS = ["volume_id", "class", "dice", "hd95_mm", "dscz", "defined_flags"]


def _fmt(v: float | None) -> str:
    return "" if v is None else format(v, ".9g")


def report_to_csv(reports: list[MetricsReport]) -> str:
    """One row per volume and class; undefined cells are left empty and
    recorded in defined_flags."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        for cid, cm in sorted(rep.per_class.items()):
            flags = ";".join(
                f"{name}={int(val is not None)}"
                for name, val in (("dice", cm.dice), ("hd95", cm.hd95_mm), ("dscz", cm.dscz))
            )
            writer.writerow([rep.volume_id, CLASS_NAMES[cid],
                             _fmt(cm.dice), _fmt(cm.hd95_mm), _fmt(cm.dscz), flags])
    return buf.getvalue()


def evaluate(pred: LabelVolume, gt: LabelVolume | SparseAnnotation,
             volume_id: str = "") -> MetricsReport:
    """Score a prediction against dense or sparse ground truth.

    With sparse ground truth, Dice pools voxels over the annotated planes
    and HD95 is the mean of per-plane in-plane surface distances over
    planes where it is defined. DSC_z always runs on the full dense
    prediction, since it measures the prediction's own smoothness.
    """
    sparse = isinstance(gt, SparseAnnotation)
    if sparse:
        if len(gt) == 0:
            raise ValidationError("no annotated slices to evaluate")
        if gt.plane_dims != pred.dims[:2]:
            raise DimensionError(
                f"annotation planes {gt.plane_dims} vs prediction planes {pred.dims[:2]}"
            )
        if gt.z_indices[-1] >= pred.dims[2]:
            raise ValidationError("annotated index beyond the prediction extent")
        gt_planes = gt.planes
        pred_planes = np.stack([pred.data[:, :, z] for z in gt.z_indices], axis=2)
        scope = len(gt)
    else:
        if gt.dims != pred.dims:
            raise DimensionError(f"gt dims {gt.dims} vs pred dims {pred.dims}")
        gt_planes = gt.data
        pred_planes = pred.data
        scope = pred.dims[2]

    per_class: dict[int, ClassMetrics] = {}
    for cid in FOREGROUND_CLASSES:
        g = gt_planes == cid
        p = pred_planes == cid
        d = dice(g, p)
        if sparse:
            h = _mean_plane_hd95(g, p, pred.spacing)
        else:
            h = hd95(g, p, pred.spacing)
        dscz = inter_slice_dice(pred, cid) if pred.dims[2] >= 2 else None
        per_class[cid] = ClassMetrics(
            class_id=cid, dice=d, hd95_mm=h, dscz=dscz,
            present_in_gt=bool(g.any()), present_in_pred=bool(p.any()),
        )

    dices = [cm.dice for cm in per_class.values() if cm.dice is not None]
    hds = [cm.hd95_mm for cm in per_class.values() if cm.hd95_mm is not None]
    return MetricsReport(
        per_class=per_class,
        mean_dice=float(np.mean(dices)) if dices else None,
        mean_hd95=float(np.mean(hds)) if hds else None,
        evaluated_slices=scope,
        sparse_gt=sparse,
        volume_id=volume_id,
    )


def _mean_plane_hd95(g_planes: np.ndarray, p_planes: np.ndarray,
                     spacing: Spacing) -> float | None:
    """Average in-plane HD95 over planes where it is defined.

    Planes where both masks are empty contribute nothing; planes where
    exactly one is empty are undefined and skipped.
    """
    vals = []
    for k in range(g_planes.shape[2]):
        g, p = g_planes[:, :, k], p_planes[:, :, k]
        if not g.any() and not p.any():
            continue
        v = hd95(g, p, spacing)
        if v is not None:
            vals.append(v)
    return float(np.mean(vals)) if vals else None


@dataclass
class AggregateRow:
    """Mean, population std and coefficient of variation for one cell."""

    class_id: int
    metric: str
    mean: float
    std: float
    cov: float | None  # std/mean, None when mean is not positive
    n: int

    @property
    def cov_percent(self) -> float | None:
        return None if self.cov is None else 100.0 * self.cov


@dataclass
class FoldAggregate:
    rows: list[AggregateRow] = field(default_factory=list)

    def row(self, class_id: int, metric: str) -> AggregateRow | None:
        for r in self.rows:
            if r.class_id == class_id and r.metric == metric:
                return r
        return None

    def to_json_dict(self) -> dict:
        out: dict = {}
        for r in self.rows:
            cell = out.setdefault(CLASS_NAMES[r.class_id], {})
            cell[r.metric] = {
                "mean": r.mean,
                "std": r.std,
                "cov": r.cov,
                "cov_percent": r.cov_percent,
                "n": r.n,
            }
        return out


def fold_aggregate(reports: list[MetricsReport]) -> FoldAggregate:
    """Aggregate per-class metrics across folds or volumes.

    Uses population std; CoV = std/mean is reported only for positive
    means. Undefined per-volume values are excluded from their cell.
    """
    if not reports:
        raise ValidationError("cannot aggregate an empty report list")
    agg = FoldAggregate()
    getters = {
        "dice": lambda cm: cm.dice,
        "hd95_mm": lambda cm: cm.hd95_mm,
        "dscz": lambda cm: cm.dscz,
    }
    for cid in FOREGROUND_CLASSES:
        for metric, get in getters.items():
            vals = [get(r.per_class[cid]) for r in reports
                    if cid in r.per_class and get(r.per_class[cid]) is not None]
            if not vals:
                continue
            arr = np.asarray(vals, dtype=np.float64)
            mean = float(arr.mean())
            std = float(arr.std())
            cov = std / mean if mean > 0 else None
            agg.rows.append(AggregateRow(cid, metric, mean, std, cov, len(vals)))
    return agg


def aggregate_to_json(agg: FoldAggregate) -> str:
    return json.dumps(agg.to_json_dict(), indent=2, sort_keys=True) + "\n"
