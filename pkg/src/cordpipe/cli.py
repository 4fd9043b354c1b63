"""Command-line pipeline orchestration.

Subcommands mirror the library stages: ``preprocess``, ``softlabel``,
``regions``, ``stack``, ``evaluate`` and ``phantom``. Every command is a
pure function of (inputs, config, seed); artifacts carry no timestamps,
so identical invocations produce byte-identical outputs.

Exit codes: 0 success, 1 validation error, 2 I/O or format error.
Errors print to stderr as single-line machine-parseable records.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .config import get_typed, load_config
from .errors import ConfigError, FormatError, ValidationError
from .metrics import evaluate, fold_aggregate, report_to_csv
from .nifti import (
    SparseAnnotation,
    gzip_nifti,
    read_nifti,
    read_sparse_annotation,
    write_nifti,
    write_sparse_annotation,
)
from .phantom import PhantomConfig, generate
from .preprocess import (
    ClaheConfig,
    StretchConfig,
    apply_mask,
    clahe_slicewise,
    minmax_rescale,
    otsu_mask,
    percentile_stretch,
    zscore_normalize,
)
from .pseudolabel import (
    MockPredictor,
    SubprocessPredictor,
    TtaConfig,
    ensemble,
    predict_volume,
    stack_slices,
)
from .regions import RegionStack, merge_regions, to_regions
from .softlabel import PROFILES as SOFT_PROFILES
from .softlabel import SoftProfile, soften
from .volume import CLASS_NAMES, FOREGROUND_CLASSES, ScalarVolume


def _read_file(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write_atomic(path: str, data: bytes, dry_run: bool = False) -> None:
    if dry_run:
        return
    dirname = os.path.dirname(os.path.abspath(path))
    os.makedirs(dirname, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=dirname, prefix=".cordpipe-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_volume(path: str, vol, dry_run: bool = False) -> None:
    raw = write_nifti(vol)
    if path.endswith(".gz"):
        raw = gzip_nifti(raw)
    _write_atomic(path, raw, dry_run)


def _load_volume(path: str, labels: bool = False, channel: str = "magnitude"):
    try:
        raw = _read_file(path)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    try:
        return read_nifti(raw, labels=labels, channel=channel)
    except FormatError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def _err_record(exc: Exception, path: str | None = None) -> str:
    kind = type(exc).__name__
    parts = [f"kind={kind}"]
    if path:
        parts.append(f"file={path}")
    msg = str(exc).replace('"', "'").replace("\n", " ")
    parts.append(f'msg="{msg}"')
    return "cordpipe-error " + " ".join(parts)


# ---------------------------------------------------------------------------
# preprocess


def _cmd_preprocess(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    use_otsu = args.otsu if args.otsu is not None else get_typed(cfg, "preprocess.otsu", bool, False)
    p_low = args.stretch_low if args.stretch_low is not None else \
        get_typed(cfg, "preprocess.stretch.p_low", float, None)
    p_high = args.stretch_high if args.stretch_high is not None else \
        get_typed(cfg, "preprocess.stretch.p_high", float, None)
    use_stretch = p_low is not None or p_high is not None or args.stretch
    use_clahe = args.clahe or get_typed(cfg, "preprocess.clahe.enabled", bool, False)
    use_zscore = args.zscore or get_typed(cfg, "preprocess.zscore", bool, False)

    vol = _load_volume(args.input, channel=args.channel)

    mask = None
    if use_otsu:
        mask_src = vol if args.mask_from is None else _load_volume(args.mask_from)
        if mask_src.dims != vol.dims:
            raise ValidationError("mask source dims do not match the input volume")
        mask = otsu_mask(mask_src).mask
        vol = apply_mask(vol, mask, fill=0.0)

    if use_stretch:
        stretch_cfg = StretchConfig(
            p_low=p_low if p_low is not None else 15.0,
            p_high=p_high if p_high is not None else 70.0,
        )
        vol = percentile_stretch(vol, stretch_cfg, mask=mask)

    if use_clahe:
        tiles = args.clahe_tiles or get_typed(cfg, "preprocess.clahe.tiles", tuple, (8, 8))
        clip = args.clahe_clip if args.clahe_clip is not None else \
            get_typed(cfg, "preprocess.clahe.clip", float, 0.01)
        bins = args.clahe_bins if args.clahe_bins is not None else \
            get_typed(cfg, "preprocess.clahe.bins", int, 256)
        if vol.data.min() < 0 or vol.data.max() > 1:
            vol = minmax_rescale(vol)
        vol = clahe_slicewise(vol, ClaheConfig(tuple(int(v) for v in tiles), clip, bins))

    if use_zscore:
        vol = zscore_normalize(vol, mask=mask)

    _write_volume(args.out, vol, args.dry_run)
    print(f"preprocess ok in={args.input} out={args.out} "
          f"otsu={int(use_otsu)} stretch={int(bool(use_stretch))} "
          f"clahe={int(use_clahe)} zscore={int(use_zscore)}")
    return 0


# ---------------------------------------------------------------------------
# softlabel


def _cmd_softlabel(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    name = args.profile or get_typed(cfg, "softlabel.profile", str, "soft2")
    base = SOFT_PROFILES.get(name)
    if base is None:
        raise ValidationError(f"unknown soft profile {name!r}; "
                              f"choose from {sorted(SOFT_PROFILES)}")
    profile = _soft_profile_with_overrides(base, cfg)
    labels = _load_volume(args.input, labels=True)
    soft = soften(labels, profile)
    os.makedirs(args.out_dir, exist_ok=True)
    for cid in FOREGROUND_CLASSES:
        out = ScalarVolume(soft.class_channel(cid), labels.spacing)
        path = os.path.join(args.out_dir, f"soft_{CLASS_NAMES[cid]}.nii.gz")
        _write_volume(path, out, args.dry_run)
    print(f"softlabel ok in={args.input} profile={name} out_dir={args.out_dir}")
    return 0


def _soft_profile_with_overrides(base, cfg):
    """Apply per-class config overrides like softlabel.lesion_gm.weight."""
    weights = dict(base.weights)
    kernels = dict(base.kernels)
    touched = False
    for cid in FOREGROUND_CLASSES:
        wkey = f"softlabel.{CLASS_NAMES[cid]}.weight"
        kkey = f"softlabel.{CLASS_NAMES[cid]}.kernel"
        if wkey in cfg:
            weights[cid] = get_typed(cfg, wkey, float, None)
            touched = True
        if kkey in cfg:
            kernels[cid] = get_typed(cfg, kkey, int, None)
            touched = True
    if not touched:
        return base
    return SoftProfile(weights=weights, kernels=kernels, name=f"{base.name}+custom")


# ---------------------------------------------------------------------------
# regions


def _cmd_regions(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    if args.mode == "split":
        labels = _load_volume(args.input, labels=True)
        stack = to_regions(labels)
        os.makedirs(args.out_dir, exist_ok=True)
        for name, grid in (("wm", stack.wm), ("gm", stack.gm), ("lesion", stack.lesion)):
            _write_volume(os.path.join(args.out_dir, f"region_{name}.nii.gz"),
                          ScalarVolume(grid, labels.spacing), args.dry_run)
        print(f"regions split ok in={args.input} out_dir={args.out_dir}")
        return 0

    tissue_thresh = args.tissue_thresh if args.tissue_thresh is not None else \
        get_typed(cfg, "merge.tissue_thresh", float, 0.5)
    lesion_thresh = args.lesion_thresh if args.lesion_thresh is not None else \
        get_typed(cfg, "merge.lesion_thresh", float, 0.5)
    wm = _load_volume(args.wm)
    gm = _load_volume(args.gm)
    lesion = _load_volume(args.lesion)
    stack = RegionStack(wm.data, gm.data, lesion.data)
    merged = merge_regions(stack, wm.spacing, tissue_thresh, lesion_thresh)
    _write_volume(args.out, merged, args.dry_run)
    print(f"regions merge ok out={args.out} tissue_thresh={tissue_thresh} "
          f"lesion_thresh={lesion_thresh}")
    return 0


# ---------------------------------------------------------------------------
# stack


def _slice_index_from_name(name: str) -> int:
    stem = name
    for suffix in (".nii.gz", ".nii"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
            break
    digits = "".join(ch for ch in stem if ch.isdigit())
    if not digits:
        raise ValidationError(f"cannot parse slice index from file name {name!r}")
    return int(digits)


def _load_slice_dir(path: str) -> dict[int, RegionStack]:
    names = sorted(n for n in os.listdir(path) if n.endswith((".nii", ".nii.gz")))
    if not names:
        raise ValidationError(f"no NIfTI slices found in {path}")
    out: dict[int, RegionStack] = {}
    for name in names:
        z = _slice_index_from_name(name)
        vol = _load_volume(os.path.join(path, name))
        if vol.dims[2] != 3:
            raise ValidationError(
                f"{name}: expected 3 probability planes, got {vol.dims[2]}"
            )
        if z in out:
            raise ValidationError(f"duplicate slice index {z} in {path}")
        probs = np.clip(vol.data, 0.0, 1.0)
        out[z] = RegionStack(probs[:, :, 0], probs[:, :, 1], probs[:, :, 2])
    return out


def _cmd_stack(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    tissue_thresh = get_typed(cfg, "merge.tissue_thresh", float, 0.5)
    lesion_thresh = get_typed(cfg, "merge.lesion_thresh", float, 0.5)

    if args.predictor:
        if not args.input:
            raise ValidationError("--predictor mode needs --input <magnitude.nii>")
        mag = _load_volume(args.input, channel="magnitude")
        phase = _load_volume(args.phase, channel="phase") if args.phase else None
        if args.predictor == "mock":
            if not args.fit_labels:
                raise ValidationError("mock predictor needs --fit-labels <labels.nii>")
            if phase is None:
                raise ValidationError("mock predictor needs --phase")
            predictor = MockPredictor.fit(mag, phase, _load_volume(args.fit_labels, labels=True))
        elif args.predictor.startswith("cmd:"):
            predictor = SubprocessPredictor(args.predictor[4:].split(), spacing=mag.spacing)
        else:
            raise ValidationError(f"unknown predictor {args.predictor!r}")
        tta = None
        if args.tta:
            flips = get_typed(cfg, "tta.flips", tuple, None)
            tta = TtaConfig(tuple(flips)) if flips else TtaConfig()
        volume_stack = predict_volume(predictor, mag, phase, tta=tta, threads=args.threads)
        spacing = mag.spacing
    else:
        if not args.slice_dirs:
            raise ValidationError("stack needs slice directories or --predictor")
        fold_stacks = []
        z_extent = None
        for d in args.slice_dirs:
            per_slice = _load_slice_dir(d)
            if z_extent is None:
                z_extent = max(per_slice) + 1
            fold_stacks.append(stack_slices(per_slice, z_extent))
        volume_stack = ensemble(fold_stacks)
        ref = _load_volume(
            os.path.join(args.slice_dirs[0],
                         sorted(os.listdir(args.slice_dirs[0]))[0]))
        spacing = ref.spacing

    labels = merge_regions(volume_stack, spacing, tissue_thresh, lesion_thresh)
    _write_volume(args.out, labels, args.dry_run)
    print(f"stack ok out={args.out} dims={labels.dims}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def _evaluate_one(pred_path: str, gt_path: str, volume_id: str):
    pred = _load_volume(pred_path, labels=True)
    if gt_path.endswith(".json"):
        sidecar_bytes = _read_file(gt_path)
        doc = json.loads(sidecar_bytes)
        planes_path = doc.get("planes_nifti", "")
        if not os.path.isabs(planes_path):
            planes_path = os.path.join(os.path.dirname(os.path.abspath(gt_path)),
                                       planes_path)
        gt = read_sparse_annotation(sidecar_bytes, _read_file(planes_path), pred.dims)
    else:
        gt = _load_volume(gt_path, labels=True)
    return evaluate(pred, gt, volume_id=volume_id)


def _nifti_stems(path: str) -> dict[str, str]:
    out = {}
    for name in sorted(os.listdir(path)):
        if not name.endswith((".nii", ".nii.gz")):
            continue
        stem = name[:-7] if name.endswith(".nii.gz") else name[:-4]
        out[stem] = os.path.join(path, name)
    return out


def _cmd_evaluate_batch(args) -> int:
    preds = _nifti_stems(args.pred)
    gts = _nifti_stems(args.gt)
    stems = sorted(set(preds) & set(gts))
    if not stems:
        raise ValidationError(
            f"no matching volume names between {args.pred} and {args.gt}"
        )

    from concurrent.futures import ThreadPoolExecutor
    from .pseudolabel import _resolve_threads
    n = _resolve_threads(args.threads)
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            reports = list(pool.map(
                lambda s: _evaluate_one(preds[s], gts[s], s), stems))
    else:
        reports = [_evaluate_one(preds[s], gts[s], s) for s in stems]

    agg = fold_aggregate(reports)
    if args.csv:
        _write_atomic(args.csv, report_to_csv(reports).encode(), args.dry_run)
    if args.json:
        doc = {"volumes": [r.to_json_dict() for r in reports],
               "aggregate": agg.to_json_dict()}
        payload = json.dumps(doc, indent=2, sort_keys=True) + "\n"
        _write_atomic(args.json, payload.encode(), args.dry_run)
    print(f"evaluate ok batch={len(reports)} pred_dir={args.pred}")
    return 0


def _cmd_evaluate(args) -> int:
    if os.path.isdir(args.pred) and os.path.isdir(args.gt):
        return _cmd_evaluate_batch(args)
    volume_id = args.volume_id or os.path.basename(args.pred)
    report = _evaluate_one(args.pred, args.gt, volume_id)
    payload = json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    if args.json:
        _write_atomic(args.json, payload.encode(), args.dry_run)
    if args.csv:
        _write_atomic(args.csv, report_to_csv([report]).encode(), args.dry_run)
    if not args.json and not args.csv:
        sys.stdout.write(payload)
    print(f"evaluate ok pred={args.pred} scope={report.evaluated_slices} "
          f"sparse={int(report.sparse_gt)} "
          f"mean_dice={'' if report.mean_dice is None else format(report.mean_dice, '.6f')}")
    return 0


# ---------------------------------------------------------------------------
# phantom


def _cmd_phantom(args) -> int:
    if args.cord_radius is not None:
        cfg = PhantomConfig(dims=tuple(args.dims), cord_radius=args.cord_radius,
                            seed=args.seed)
    else:
        cfg = PhantomConfig.fitted(args.dims, seed=args.seed)
    mag, phs, labels = generate(cfg)
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    _write_volume(os.path.join(out, "magnitude.nii.gz"), mag, args.dry_run)
    _write_volume(os.path.join(out, "phase.nii.gz"), phs, args.dry_run)
    _write_volume(os.path.join(out, "labels.nii.gz"), labels, args.dry_run)

    step = max(1, args.annotate_every)
    z_idx = list(range(0, labels.dims[2], step))
    planes = np.stack([labels.data[:, :, z] for z in z_idx], axis=2)
    ann = SparseAnnotation(f"phantom-{args.seed}", z_idx, planes)
    sidecar, planes_nii = write_sparse_annotation(ann, "annotation_planes.nii.gz",
                                                  labels.spacing)
    _write_atomic(os.path.join(out, "annotation.json"), sidecar, args.dry_run)
    _write_atomic(os.path.join(out, "annotation_planes.nii.gz"),
                  gzip_nifti(planes_nii), args.dry_run)
    print(f"phantom ok seed={args.seed} dims={labels.dims} out_dir={out} "
          f"annotated={len(z_idx)}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cordpipe",
        description="Sparse-to-dense spinal cord segmentation pipeline tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="mask, stretch, CLAHE and normalize a volume")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--channel", choices=["magnitude", "phase"], default="magnitude")
    p.add_argument("--otsu", action="store_true", default=None)
    p.add_argument("--mask-from", help="compute the Otsu mask from this magnitude volume")
    p.add_argument("--stretch", action="store_true")
    p.add_argument("--stretch-low", type=float)
    p.add_argument("--stretch-high", type=float)
    p.add_argument("--clahe", action="store_true")
    p.add_argument("--clahe-tiles", type=int, nargs=2, metavar=("TX", "TY"))
    p.add_argument("--clahe-clip", type=float)
    p.add_argument("--clahe-bins", type=int)
    p.add_argument("--zscore", action="store_true")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("softlabel", help="generate boundary-uncertainty soft targets")
    p.add_argument("input")
    p.add_argument("--profile", help="soft1|soft2|soft3 (default from config or soft2)")
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=_cmd_softlabel)

    p = sub.add_parser("regions", help="split labels into regions or merge regions back")
    p.add_argument("mode", choices=["split", "merge"])
    p.add_argument("input", nargs="?")
    p.add_argument("--out-dir")
    p.add_argument("--wm")
    p.add_argument("--gm")
    p.add_argument("--lesion")
    p.add_argument("--out")
    p.add_argument("--tissue-thresh", type=float)
    p.add_argument("--lesion-thresh", type=float)
    p.add_argument("--config")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=_cmd_regions)

    p = sub.add_parser("stack", help="assemble per-slice predictions into dense labels")
    p.add_argument("slice_dirs", nargs="*",
                   help="directories of per-slice 3-channel NIfTIs; several = ensemble")
    p.add_argument("--predictor", help="'mock' or 'cmd:<command...>'")
    p.add_argument("--input", help="magnitude volume for --predictor mode")
    p.add_argument("--phase")
    p.add_argument("--fit-labels", help="labels used to calibrate the mock predictor")
    p.add_argument("--tta", action="store_true")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=_cmd_stack)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("pred", help="labels NIfTI, or a directory for batch mode")
    p.add_argument("gt", help="dense labels NIfTI, sparse sidecar JSON, or a "
                               "directory matching pred by file name")
    p.add_argument("--volume-id")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("phantom", help="generate a synthetic cord phantom triplet")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=int, nargs=3, default=[64, 64, 64])
    p.add_argument("--cord-radius", type=float,
                   help="override the cord radius scaled from the plane extent")
    p.add_argument("--annotate-every", type=int, default=8)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dry-run", action="store_true")
    p.set_defaults(func=_cmd_phantom)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, OSError) as exc:
        path = getattr(args, "input", None) or getattr(args, "pred", None)
        print(_err_record(exc, path), file=sys.stderr)
        return 2
    except (ValidationError, ConfigError) as exc:
        print(_err_record(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
