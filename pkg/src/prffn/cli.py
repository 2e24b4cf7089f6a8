"""Command-line entry point chaining the pipeline stages.

Subcommands: phantom gen, mueller reconstruct, pbp decode,
register fit|warp, features build, train, cv run, sweep run, map render,
report. Every data-producing command writes into a run directory together
with a manifest (resolved config, seeds, versions) sufficient to reproduce
the outputs byte-for-byte. Logs go to stderr, data to files only.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, load_config
from .dataset import (
    CSV_COLUMNS,
    FEATURE_COLUMNS,
    FeatureTable,
    FoldPlan,
    build_feature_table,
    fit_normalizer,
    apply_normalizer,
    NormStats,
)
from .errors import ConfigError, DataError, PrffnError
from .evaluation import (
    cv_results_to_csv,
    render_map,
    resolution_sweep,
    run_cv,
    summary_markdown,
)
from .model import (
    TrainConfig,
    load_checkpoint,
    model_params,
    predict_map,
    rebuild_model,
    save_checkpoint,
    train_model,
)
from .mueller import (
    DEFAULT_PSG_ANGLES,
    InstrumentMatrix,
    PsgSequence,
    identity_instrument,
    load_plane_image,
    normalize_by_m11,
    reconstruct_image,
    save_mueller_image,
)
from .pbp import load_pbp_image, pbp_stack, save_pbp_image
from .phantom import generate_dataset, load_dataset, save_dataset
from .rasters import load_mask_png, load_rgb_png, save_mask_png, save_rgb_png
from .registration import Affine2D, ControlPoints, fit_affine, transfer_mask, warp_image


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _default_jobs() -> int:
    env = os.environ.get("PRFFN_JOBS")
    if env is None:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError(f"PRFFN_JOBS must be an integer, got {env!r}")


def _resolve_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        cfg.jobs = args.jobs
    cfg.validate()
    return cfg


def _run_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(run_dir: Path, cfg: RunConfig | None, args, **extra) -> None:
    manifest = {
        "argv": sys.argv[1:],
        "command": args.cmd_name,
        "versions": {
            "prffn": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        **extra,
    }
    if cfg is not None:
        manifest["config"] = cfg.to_dict()
        manifest["seed"] = cfg.seed
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def cmd_phantom_gen(args) -> int:
    cfg = _resolve_config(args)
    out = _run_dir(args)
    rois, plan = generate_dataset(
        cfg.phantom.spec,
        cfg.phantom.n_patients_per_class,
        cfg.phantom.rois_per_patient,
        cfg.seed,
    )
    save_dataset(rois, plan, cfg.phantom.spec, out / "dataset")
    _write_manifest(out, cfg, args, n_rois=len(rois))
    _log(f"generated {len(rois)} ROIs under {out / 'dataset'}")
    return 0


def cmd_mueller_reconstruct(args) -> int:
    out = _run_dir(args)
    planes, header = load_plane_image(args.intensities)
    frames = np.moveaxis(planes, 0, -1).reshape(
        planes.shape[1], planes.shape[2], 4, 4
    )
    angles = (
        tuple(np.deg2rad([float(a) for a in args.psg_angles.split(",")]))
        if args.psg_angles
        else DEFAULT_PSG_ANGLES
    )
    psg = PsgSequence.from_retarder_angles(angles)
    instrument = (
        InstrumentMatrix(a=np.loadtxt(args.instrument))
        if args.instrument
        else identity_instrument()
    )
    img = reconstruct_image(frames, psg, instrument)
    save_mueller_image(img, out / "mueller")
    _write_manifest(out, None, args, psg_angles_deg=[float(np.rad2deg(a)) for a in angles])
    _log(f"reconstructed {img.width}x{img.height} Mueller image")
    return 0


def cmd_pbp_decode(args) -> int:
    out = _run_dir(args)
    from .mueller import load_mueller_image

    img = load_mueller_image(args.mueller)
    if not args.skip_normalize:
        norm = normalize_by_m11(img)
        img = norm.image
        if norm.flagged:
            _log(f"flagged {norm.flagged} pixels with invalid m11")
    decoded = pbp_stack(img)
    save_pbp_image(decoded, out / "pbp")
    _write_manifest(out, None, args)
    _log(f"decoded 23 parameter planes for {decoded.width}x{decoded.height} pixels")
    return 0


def cmd_register_fit(args) -> int:
    out = _run_dir(args)
    result = fit_affine(ControlPoints.from_csv(args.points))
    np.savetxt(out / "transform.txt", result.transform.matrix)
    (out / "fit.json").write_text(
        json.dumps({"rms_residual": result.rms_residual}, indent=2) + "\n"
    )
    _write_manifest(out, None, args, rms_residual=result.rms_residual)
    _log(f"fit affine transform, RMS residual {result.rms_residual:.3e}")
    return 0


def cmd_register_warp(args) -> int:
    out = _run_dir(args)
    transform = Affine2D(np.loadtxt(args.transform))
    size = (args.height, args.width)
    if args.mask:
        warped = transfer_mask(load_mask_png(args.image), transform, size)
        save_mask_png(warped, out / "warped.png")
    else:
        warped = warp_image(load_rgb_png(args.image), transform, size)
        save_rgb_png(warped, out / "warped.png")
    _write_manifest(out, None, args)
    _log(f"warped {args.image} onto a {args.height}x{args.width} grid")
    return 0


def cmd_features_build(args) -> int:
    cfg = _resolve_config(args)
    out = _run_dir(args)
    rois, plan, _ = load_dataset(Path(args.dataset))
    table = build_feature_table(
        rois,
        n_per_class=cfg.features.n_per_class,
        patch_size=cfg.features.patch_size,
        seed=cfg.seed,
        radiomics_cfg=cfg.features.radiomics(),
        jobs=cfg.jobs,
    )
    table.to_csv(out / "features.csv")
    plan.to_json(out / "fold_plan.json")
    _write_manifest(
        out, cfg, args, rows=len(table), skipped=table.skipped_out_of_bounds
    )
    _log(
        f"built {len(table)} rows ({table.skipped_out_of_bounds} out-of-bounds "
        f"candidates skipped)"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    out = _run_dir(args)
    table = FeatureTable.from_csv(args.features)
    stats = fit_normalizer(table.features)
    x = apply_normalizer(table.features, stats)
    model, history = train_model(args.kind, x, table.labels, cfg.train, cfg.seed)
    save_checkpoint(
        out / "model.ckpt",
        args.kind,
        model_params(model),
        cfg.train,
        cfg.seed,
        FEATURE_COLUMNS,
        extra_header={
            "norm_mean": [float(v) for v in stats.mean],
            "norm_std": [float(v) for v in stats.std],
        },
    )
    with open(out / "history.csv", "w") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for epoch, tr, val in history:
            fh.write(f"{epoch},{tr!r},{val!r}\n")
    _write_manifest(out, cfg, args, kind=args.kind, epochs_run=len(history))
    _log(f"trained {args.kind} for {len(history)} epochs")
    return 0


def cmd_cv_run(args) -> int:
    cfg = _resolve_config(args)
    out = _run_dir(args)
    table = FeatureTable.from_csv(args.features)
    plan = FoldPlan.from_json(args.plan)
    results = run_cv(table, plan, cfg.cv.kinds, cfg.train, cfg.seed)
    cv_results_to_csv(results, out / "folds.csv")
    (out / "summary.md").write_text(summary_markdown(results))
    _write_manifest(out, cfg, args, kinds=cfg.cv.kinds, folds=len(plan.groups))
    _log(summary_markdown(results))
    return 0


def cmd_sweep_run(args) -> int:
    cfg = _resolve_config(args)
    out = _run_dir(args)
    rois, plan, _ = load_dataset(Path(args.dataset))
    if cfg.sweep.patients:
        subset = set(cfg.sweep.patients)
        rois = [r for r in rois if r.patient_id in subset]
        plan = FoldPlan(
            groups={
                g: ps
                for g, ps in plan.groups.items()
                if all(p in subset for p in ps)
            }
        )
        if not rois or not plan.groups:
            raise ConfigError("sweep patient subset matches no complete group")
    result = resolution_sweep(
        rois,
        cfg.sweep.windows,
        cfg.sweep.kinds,
        plan,
        cfg.train,
        n_per_class=cfg.features.n_per_class,
        seed=cfg.seed,
        patch_size=cfg.features.patch_size,
        radiomics_cfg=cfg.features.radiomics(),
        jobs=cfg.jobs,
    )
    result.to_csv(out / "sweep.csv")
    _write_manifest(out, cfg, args, windows=cfg.sweep.windows, kinds=cfg.sweep.kinds)
    for kind, accs in result.accuracy.items():
        _log(f"{kind}: " + " ".join(f"{a:.3f}" for a in accs))
    return 0


def cmd_map_render(args) -> int:
    out = _run_dir(args)
    if args.checkpoint:
        if not args.dataset or not args.roi:
            raise ConfigError("--checkpoint requires --dataset and --roi")
        rois, _, _ = load_dataset(Path(args.dataset))
        matches = [r for r in rois if r.roi_id == args.roi]
        if not matches:
            raise DataError(f"ROI {args.roi!r} not found in {args.dataset}")
        kind, params, header = load_checkpoint(args.checkpoint, FEATURE_COLUMNS)
        hp = dict(header["hyperparameters"])
        hp["hidden_sizes"] = tuple(hp["hidden_sizes"])
        train_cfg = TrainConfig(**hp)
        model = rebuild_model(kind, params, train_cfg)
        stats = NormStats(
            mean=np.array(header["norm_mean"]), std=np.array(header["norm_std"])
        )
        mask = predict_map(model, matches[0], stats, patch_size=args.patch_size)
        save_mask_png(mask, out / "predicted_mask.png")
    elif args.mask:
        mask = load_mask_png(args.mask)
    else:
        raise ConfigError("provide either --mask or --checkpoint")
    save_rgb_png(render_map(mask), out / "map.png")
    _write_manifest(out, None, args)
    _log(f"rendered pseudo-color map to {out / 'map.png'}")
    return 0


def cmd_report(args) -> int:
    out = _run_dir(args)
    folds_csv = Path(args.cv) / "folds.csv"
    if not folds_csv.exists():
        raise DataError(f"no folds.csv under {args.cv}")
    import csv as _csv

    lines = [
        "| Model | Accuracy | Precision | Recall | F1-score |",
        "|---|---|---|---|---|",
    ]
    with open(folds_csv, newline="") as fh:
        for row in _csv.DictReader(fh):
            if row["fold"] == "mean":
                lines.append(
                    "| {model} | {a:.3f} | {p:.3f} | {r:.3f} | {f:.3f} |".format(
                        model=row["model"],
                        a=float(row["accuracy"]),
                        p=float(row["precision"]),
                        r=float(row["recall"]),
                        f=float(row["f1"]),
                    )
                )
    (out / "report.md").write_text("\n".join(lines) + "\n")
    _write_manifest(out, None, args)
    _log(f"wrote {out / 'report.md'}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(p, config=True, seed=True, jobs=False):
    if config:
        p.add_argument("--config", help="JSON run configuration", default=None)
    if seed:
        p.add_argument("--seed", type=int, default=None, help="override config seed")
    if jobs:
        p.add_argument(
            "--jobs", type=int, default=_default_jobs(),
            help="worker processes (env PRFFN_JOBS)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prffn",
        description="Polarization + radiomics fusion pipeline",
    )
    top = parser.add_subparsers(dest="command", required=True)

    phantom = top.add_parser("phantom", help="synthetic dataset generation")
    psub = phantom.add_subparsers(dest="subcommand", required=True)
    p = psub.add_parser("gen", help="generate a phantom dataset")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom_gen, cmd_name="phantom gen")

    mueller = top.add_parser("mueller", help="Mueller matrix operations")
    msub = mueller.add_subparsers(dest="subcommand", required=True)
    p = msub.add_parser("reconstruct", help="reconstruct from intensity frames")
    p.add_argument("--intensities", required=True, help="plane-format directory")
    p.add_argument("--psg-angles", default=None, help="degrees, e.g. '-45,0,30,60'")
    p.add_argument("--instrument", default=None, help="4x4 matrix text file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mueller_reconstruct, cmd_name="mueller reconstruct")

    pbp = top.add_parser("pbp", help="polarimetry parameter decoding")
    bsub = pbp.add_subparsers(dest="subcommand", required=True)
    p = bsub.add_parser("decode", help="decode 23 parameters per pixel")
    p.add_argument("--mueller", required=True, help="Mueller image directory")
    p.add_argument("--skip-normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pbp_decode, cmd_name="pbp decode")

    register = top.add_parser("register", help="affine registration")
    rsub = register.add_subparsers(dest="subcommand", required=True)
    p = rsub.add_parser("fit", help="fit affine from control points CSV")
    p.add_argument("--points", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_register_fit, cmd_name="register fit")
    p = rsub.add_parser("warp", help="warp an image or mask")
    p.add_argument("--image", required=True)
    p.add_argument("--transform", required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--mask", action="store_true", help="nearest-neighbor labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_register_warp, cmd_name="register warp")

    features = top.add_parser("features", help="feature table construction")
    fsub = features.add_subparsers(dest="subcommand", required=True)
    p = fsub.add_parser("build", help="sample pixels and extract features")
    _add_common(p, jobs=True)
    p.add_argument("--dataset", required=True, help="phantom dataset directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features_build, cmd_name="features build")

    p = top.add_parser("train", help="train one model on a feature table")
    _add_common(p)
    p.add_argument("--features", required=True, help="features.csv path")
    p.add_argument("--kind", default="prffn")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train, cmd_name="train")

    cv = top.add_parser("cv", help="cross-validation")
    csub = cv.add_subparsers(dest="subcommand", required=True)
    p = csub.add_parser("run", help="leave-one-patient-group-out CV")
    _add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--plan", required=True, help="fold plan JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv_run, cmd_name="cv run")

    sweep = top.add_parser("sweep", help="resolution degradation sweep")
    ssub = sweep.add_subparsers(dest="subcommand", required=True)
    p = ssub.add_parser("run", help="run the average-filter sweep")
    _add_common(p, jobs=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_run, cmd_name="sweep run")

    mp = top.add_parser("map", help="pseudo-color maps")
    mpsub = mp.add_subparsers(dest="subcommand", required=True)
    p = mpsub.add_parser("render", help="render a mask or a model prediction")
    p.add_argument("--mask", default=None, help="label mask PNG")
    p.add_argument("--dataset", default=None)
    p.add_argument("--roi", default=None)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--patch-size", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map_render, cmd_name="map render")

    p = top.add_parser("report", help="summarize a CV run as Markdown")
    p.add_argument("--cv", required=True, help="cv run output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report, cmd_name="report")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PrffnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
