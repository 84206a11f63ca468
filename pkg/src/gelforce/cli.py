"""Command-line interface tying the pipeline together.

Subcommands: calibrate, reconstruct, synth, train, eval, baseline, predict,
experiment. Run `gelforce <subcommand> --help` for flags.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import calibration, datasets, depth, experiment, force, metrics, nn, simulate
from .image import load_image, save_image


def _res(text: str) -> tuple[int, int]:
    w, h = text.lower().split("x")
    return int(w), int(h)


def cmd_calibrate(args) -> int:
    presses = calibration.load_presses(args.presses, args.frames_dir)
    reference = load_image(args.reference) if args.reference else None
    mlp, history, max_depth = depth.calibrate_sensor(
        presses, reference, seed=args.seed, epochs=args.epochs, lr=args.lr)
    nn.save_weights(mlp, args.out_weights)
    rec = depth.ScaleRecord(max_depth=max_depth,
                            calibrated_at=depth.timestamp_now(),
                            mlp_weights=str(args.out_weights))
    depth.save_scale_record(rec, args.out_scale)
    if args.history:
        nn.write_history(args.history, history)
    print(f"calibrated on {len(presses)} presses: max_depth={max_depth:.4f} px, "
          f"final val loss={history[-1]['val_loss']:.3e}")
    return 0


def cmd_reconstruct(args) -> int:
    mlp = nn.load_weights(args.weights)
    scale = depth.load_scale_record(args.scale)
    reference = load_image(args.reference)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for fp in args.frames:
        frame = load_image(fp)
        di = depth.reconstruct_depth_image(mlp, frame, reference, scale,
                                           mask_threshold=args.mask_threshold)
        out = outdir / (Path(fp).stem + "_depth.png")
        save_image(di, out)
        print(f"{fp} -> {out}")
    return 0


def cmd_synth(args) -> int:
    grid = _res(args.resolution)
    indenters = simulate.default_indenters()[: args.indenters]
    spec = simulate.DatasetSpec(
        indenters=indenters, grid=grid,
        locations_per_indenter=args.locations,
        samples_per_location=args.samples_per_location,
        force_min=args.force_min, force_max=args.force_max,
        noise_sigma=args.noise,
        curvature_radius=args.curvature if args.curvature > 0 else None)
    root = Path(args.out)
    root.mkdir(parents=True, exist_ok=True)
    reference = simulate.reference_frame(spec)
    save_image(reference, root / "reference.png")

    encoder = None
    if args.depth == "true":
        scale = depth.load_scale_record(args.scale)

        def encoder(sample):
            di = depth.depth_to_image(sample.depth, scale)
            mask = depth.contact_mask_from_diff(sample.frame, reference,
                                                args.mask_threshold)
            return depth.apply_contact_mask(di, mask)
    elif args.depth == "recon":
        scale = depth.load_scale_record(args.scale)
        mlp = nn.load_weights(args.weights)

        def encoder(sample):
            return depth.reconstruct_depth_image(mlp, sample.frame, reference,
                                                 scale, args.mask_threshold)

    writer = datasets.SessionWriter(root / "sessions", depth_encoder=encoder)
    n = 0

    def sink(sample):
        nonlocal n
        writer(sample)
        n += 1

    simulate.generate_dataset(spec, seed=args.seed, sink=sink)
    writer.close()
    print(f"wrote {n} samples for {len(indenters)} indenters under {root}")
    return 0


def cmd_train(args) -> int:
    ingest = datasets.ingest_dataset(Path(args.dataset) / "sessions",
                                     force_range=(args.force_min, args.force_max))
    folds = datasets.split_by_indenter(ingest.samples, args.seed)
    split = folds[args.fold]
    model = force.build_model(args.kind, _res(args.resolution), seed=args.seed)
    ref_path = Path(args.dataset) / "reference.png"
    if model.wants_rgb and ref_path.exists():
        model.set_rgb_reference(load_image(ref_path))
    cfg = force.TrainConfig(batch_size=args.batch_size, lr=args.lr,
                            epochs=args.epochs, seed=args.seed)
    model, history = force.train(model, split.train, split.val, cfg)
    force.save_force_model(model, args.out_model)
    if args.history:
        nn.write_history(args.history, history)
    print(f"trained {args.kind} on {len(split.train)} samples "
          f"(best val MSE {min(h['val_loss'] for h in history):.4f}) -> {args.out_model}")
    return 0


def cmd_eval(args) -> int:
    model = force.load_force_model(args.model)
    ingest = datasets.ingest_dataset(Path(args.dataset) / "sessions",
                                     force_range=(args.force_min, args.force_max))
    samples = ingest.samples
    preds = force.predict_samples(model, samples)
    gts = np.array([s.force_n for s in samples])
    rep = metrics.report(preds, gts)
    print(f"n={rep.n}  RE {rep.re_mean:.3f} +- {rep.re_std:.3f}  "
          f"MAE {rep.mae_mean:.3f} +- {rep.mae_std:.3f} N")
    if args.out:
        with open(args.out, "w") as f:
            f.write("path,gt_n,pred_n\n")
            for s, p in zip(samples, preds):
                f.write(f"{s.frame_path},{s.force_n!r},{float(p)!r}\n")
    return 0


def cmd_baseline(args) -> int:
    ingest = datasets.ingest_dataset(Path(args.dataset) / "sessions",
                                     force_range=(args.force_min, args.force_max))
    samples = [s for s in ingest.samples if s.depth_path is not None]
    if not samples:
        print("dataset has no depth images; run synth with --depth", file=sys.stderr)
        return 1
    pairs = [(force.max_deformation_byte(load_image(s.depth_path)), s.force_n)
             for s in samples]
    poly = force.fit_poly_baseline(pairs)
    preds = np.array([force.poly_predict(poly, load_image(s.depth_path))
                      for s in samples])
    gts = np.array([s.force_n for s in samples])
    rep = metrics.report(preds, gts)
    print(f"cubic c0..c3 = {poly.coefficients}  fit residual {poly.residual:.3f} N")
    print(f"n={rep.n}  RE {rep.re_mean:.3f} +- {rep.re_std:.3f}  "
          f"MAE {rep.mae_mean:.3f} +- {rep.mae_std:.3f} N")
    if args.out_model:
        force.save_poly_model(poly, args.out_model)
    return 0


def cmd_predict(args) -> int:
    model = force.load_force_model(args.model)
    depths = args.depths or [None] * len(args.frames)
    if len(depths) != len(args.frames):
        print("--depths must match --frames in length", file=sys.stderr)
        return 1
    rows = []
    for fp, dp in zip(args.frames, depths):
        frame = load_image(fp)
        dimg = load_image(dp) if dp else None
        rows.append((fp, force.predict_force(model, frame, dimg)))
    out = open(args.out, "w") if args.out else sys.stdout
    out.write("path,predicted_n\n")
    for path, pred in rows:
        out.write(f"{path},{pred!r}\n")
    if args.out:
        out.close()
    return 0


def cmd_experiment(args) -> int:
    result = experiment.run_experiment(args.config)
    agg = result["aggregate"]
    print(f"aggregate over {len(result['folds'])} folds: n={agg.n}  "
          f"RE {agg.re_mean:.3f} +- {agg.re_std:.3f}  "
          f"MAE {agg.mae_mean:.3f} +- {agg.mae_std:.3f} N")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gelforce", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="sphere presses -> MLP weights + scale record")
    c.add_argument("--presses", required=True, help="press record file (JSONL)")
    c.add_argument("--frames-dir", default=None)
    c.add_argument("--reference", default=None, help="rest frame for gradient taring")
    c.add_argument("--out-weights", required=True)
    c.add_argument("--out-scale", required=True)
    c.add_argument("--history", default=None)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--epochs", type=int, default=600)
    c.add_argument("--lr", type=float, default=2e-3)
    c.set_defaults(func=cmd_calibrate)

    c = sub.add_parser("reconstruct", help="RGB frames -> filtered depth images")
    c.add_argument("--weights", required=True)
    c.add_argument("--scale", required=True)
    c.add_argument("--reference", required=True)
    c.add_argument("--outdir", required=True)
    c.add_argument("--mask-threshold", type=float, default=depth.DEFAULT_MASK_THRESHOLD)
    c.add_argument("frames", nargs="+")
    c.set_defaults(func=cmd_reconstruct)

    c = sub.add_parser("synth", help="generate a synthetic dataset in session layout")
    c.add_argument("--out", required=True)
    c.add_argument("--indenters", type=int, default=18)
    c.add_argument("--locations", type=int, default=9)
    c.add_argument("--samples-per-location", type=int, default=81)
    c.add_argument("--resolution", default="160x120")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--force-min", type=float, default=1.0)
    c.add_argument("--force-max", type=float, default=15.0)
    c.add_argument("--noise", type=float, default=0.01)
    c.add_argument("--curvature", type=float, default=0.0)
    c.add_argument("--depth", choices=("none", "true", "recon"), default="none")
    c.add_argument("--scale", default=None, help="scale record (for --depth)")
    c.add_argument("--weights", default=None, help="MLP weights (for --depth recon)")
    c.add_argument("--mask-threshold", type=float, default=depth.DEFAULT_MASK_THRESHOLD)
    c.set_defaults(func=cmd_synth)

    c = sub.add_parser("train", help="train a force regressor on one fold")
    c.add_argument("--dataset", required=True)
    c.add_argument("--kind", required=True, choices=force.MODEL_KINDS)
    c.add_argument("--out-model", required=True)
    c.add_argument("--history", default=None)
    c.add_argument("--fold", type=int, default=0)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--resolution", default="160x120")
    c.add_argument("--epochs", type=int, default=25)
    c.add_argument("--batch-size", type=int, default=64)
    c.add_argument("--lr", type=float, default=4e-5)
    c.add_argument("--force-min", type=float, default=1.0)
    c.add_argument("--force-max", type=float, default=15.0)
    c.set_defaults(func=cmd_train)

    c = sub.add_parser("eval", help="evaluate a trained model on a dataset")
    c.add_argument("--model", required=True)
    c.add_argument("--dataset", required=True)
    c.add_argument("--out", default=None)
    c.add_argument("--force-min", type=float, default=1.0)
    c.add_argument("--force-max", type=float, default=15.0)
    c.set_defaults(func=cmd_eval)

    c = sub.add_parser("baseline", help="fit/evaluate the cubic max-deformation baseline")
    c.add_argument("--dataset", required=True)
    c.add_argument("--out-model", default=None)
    c.add_argument("--force-min", type=float, default=1.0)
    c.add_argument("--force-max", type=float, default=15.0)
    c.set_defaults(func=cmd_baseline)

    c = sub.add_parser("predict", help="predict forces for frames, emit CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--frames", nargs="+", required=True)
    c.add_argument("--depths", nargs="*", default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_predict)

    c = sub.add_parser("experiment", help="run a full 3-fold experiment from a config file")
    c.add_argument("--config", required=True)
    c.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
