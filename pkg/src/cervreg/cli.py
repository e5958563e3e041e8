"""Command-line interface: ``cervreg <command> [options]``.

Exit status is 0 when every requested artifact was written, 1 on a pipeline
or input error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import affine, config, imgcore, metrics, pca, pipeline, segmentation, synth, train, unet


def _seg_config(args) -> segmentation.SegConfig:
    return segmentation.SegConfig(g_thresh=args.g_thresh)


def cmd_synth(args):
    ds = synth.generate_dataset(args.subjects, args.per_subject, args.seed)
    path = synth.write_dataset(ds, args.out_dir)
    print(f"wrote {len(ds)} phantoms and {path}")


def cmd_segment(args):
    img = imgcore.read_pgm(args.image)
    seg = segmentation.segment(img, _seg_config(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    labels = segmentation.label_image(seg.components, img.shape)
    levels = np.zeros(labels.max() + 1)
    levels[1:] = np.linspace(0.3, 1.0, labels.max()) if labels.max() else []
    imgcore.write_pgm(out / f"{stem}_labels.pgm", levels[labels])
    rows = [("ijv", seg.ellipse)]
    if seg.cca is not None:
        rows.append(("cca", segmentation.fit_ellipse(seg.cca)))
    affine.write_ellipses(out / f"{stem}_ellipses.csv", rows)
    overlay = img
    for _, e in rows:
        overlay = segmentation.draw_ellipse_outline(overlay, e)
    imgcore.write_pgm(out / f"{stem}_overlay.pgm", overlay)
    e = seg.ellipse
    print(f"ijv: cx={e.cx:.2f} cy={e.cy:.2f} a={e.a:.2f} b={e.b:.2f} phi={math.degrees(e.phi):.2f} deg")


def _pick(rows, label):
    for name, e in rows:
        if name == label:
            return e
    return rows[0][1]


def cmd_affine(args):
    img = imgcore.read_pgm(args.image)
    obj = _pick(affine.read_ellipses(args.object), "ijv")
    ref = _pick(affine.read_ellipses(args.reference), "reference") if args.reference else affine.default_reference()
    p = affine.compute_affine(obj, ref, img.shape)
    imgcore.write_pgm(args.out, affine.apply_affine(img, p))
    print(f"tx={p.tx:.3f} ty={p.ty:.3f} phi={math.degrees(p.phi):.3f} deg s_x={p.s_x:.4f} s_y={p.s_y:.4f}")


def _pgms(directory):
    paths = sorted(Path(directory).glob("*.pgm"))
    if not paths:
        raise pipeline.PipelineError("load", directory, "no PGM images found")
    return [imgcore.read_pgm(p) for p in paths]


def cmd_pca_fit(args):
    model = pca.fit(_pgms(args.data_dir))
    pca.save_model(model, args.out)
    print(f"p={model.p} n={model.n} total variance={model.total_variance:.6g}")


def cmd_pca_apply(args):
    model = pca.load_model(args.model)
    img = imgcore.read_pgm(args.image)
    imgcore.write_pgm(args.out, pca.approximate(model, img, args.q))


def cmd_pca_table(args):
    model = pca.load_model(args.model)
    qs = [q for q in range(1, args.max_q + 1, 2) if q <= model.p]
    rows = [[q, f"{c:.6f}"] for q, c in pca.cevr_table(model, qs)]
    pipeline._write_csv(args.out, ["q", "cevr"], rows)
    for q, c in rows:
        print(f"q={q:>3}  cEVR={c}")


def cmd_net_info(args):
    net = unet.build(unet.preset(args.net), seed=0)
    print(f"{'layer':<8} {'in':>4} {'out':>4} {'stride':>6} {'scale':>6} {'params':>8}")
    for name, cin, cout, stride, div, n in unet.layer_table(net):
        print(f"{name:<8} {cin:>4} {cout:>4} {stride:>6} {'1/' + str(div):>6} {n:>8}")
    print(f"total parameters: {unet.param_count(net)}")


def _variant(images: str) -> str:
    return "pca_q8" if images == "pca" else "original"


def _train_config(args) -> train.TrainConfig:
    return train.TrainConfig(gamma=args.gamma, learning_rate=args.lr, epochs=args.epochs, seed=args.seed,
                             image_variant=_variant(args.images), split=args.split)


def cmd_train(args):
    data = pipeline.load_prepared(args.data_dir)
    cfg = _train_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = pca.fit([data.reference] + data.images) if cfg.image_variant == "pca_q8" else None

    def progress(epoch, t):
        if not args.quiet:
            print(f"epoch {epoch:>4}  J={t.J:.6f}  L_sim={t.L_sim:.6f}  L_smooth={t.L_smooth:.6f}", flush=True)

    net, hist = train.train(data.images, data.reference, unet.preset(args.net), cfg, ids=data.ids,
                            pca_model=model, progress=progress)
    unet.save_checkpoint(net, out / "model.ckpt")
    hist.write_csv(out / "history.csv")
    pipeline.write_metrics(out / "metrics.csv", hist.test, cfg.image_variant, args.net)
    print(f"wrote {out / 'model.ckpt'}, {out / 'history.csv'}, {out / 'metrics.csv'}")


def cmd_register(args):
    net = unet.load_checkpoint(args.model)
    m = imgcore.read_pgm(args.moving)
    f = imgcore.read_pgm(args.fixed)
    u, moved, terms = train.register_pair(net, m, f, args.gamma)
    imgcore.write_pgm(args.out_moved, moved)
    if args.out_field:
        imgcore.write_field_csv(args.out_field, u)
    print(f"J={terms.J:.6f} L_sim={terms.L_sim:.6f} L_smooth={terms.L_smooth:.6f}")


def cmd_evaluate(args):
    net = unet.load_checkpoint(args.model)
    data = pipeline.load_prepared(args.data_dir)
    cfg = train.TrainConfig(seed=args.seed, split=args.split, image_variant=_variant(args.images),
                            half_width=args.half_width)
    model = pca.fit([data.reference] + data.images) if cfg.image_variant == "pca_q8" else None
    recs = pipeline.evaluate_model(net, data, cfg, model, delta_i_source=args.delta_i_source)
    pipeline.write_metrics(args.out, recs, cfg.image_variant, net.cfg.name)
    print(f"{len(recs)} images: mean dI={np.mean([r.delta_i for r in recs]):.5f} "
          f"mean l={np.mean([r.l_bar for r in recs]):.5f}")


def cmd_compare(args):
    a, _, _ = pipeline.read_metrics(args.a)
    b, _, _ = pipeline.read_metrics(args.b)
    if set(a) != set(b):
        raise pipeline.PipelineError("compare", args.b, "image ids differ between the two metric files")
    ids = sorted(a)
    rows = pipeline.compare_values(np.array([a[i] for i in ids]), np.array([b[i] for i in ids]))
    pipeline._write_csv(args.out, pipeline.COMPARE_HEADER, rows)
    for r in rows:
        print(f"{r[0]:<8} t={r[1]} dof={r[2]} alpha={r[3]}")


def cmd_experiment(args):
    cfg = pipeline.load_experiment_config(args.config)
    res = pipeline.run_experiment(cfg, args.out, log=None if args.quiet else print)
    print(pipeline.report(res.out_dir), end="")


def cmd_report(args):
    print(pipeline.report(args.out_dir), end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cervreg", description="Registration of cervical ultrasound images.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate synthetic phantoms")
    s.add_argument("--subjects", type=int, default=14)
    s.add_argument("--per-subject", type=int, default=6)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("segment", help="segment the IJV of one image")
    s.add_argument("image")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--g-thresh", type=float, default=segmentation.SegConfig.g_thresh)
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("affine", help="map an image onto the reference ellipse and crop")
    s.add_argument("image")
    s.add_argument("--object", required=True, help="ellipse CSV of the image (row 'ijv' or first row)")
    s.add_argument("--reference", help="reference ellipse CSV (default: packaged reference)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_affine)

    s = sub.add_parser("pca", help="PCA model commands")
    psub = s.add_subparsers(dest="pca_command", required=True)
    t = psub.add_parser("fit")
    t.add_argument("--data-dir", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_pca_fit)
    t = psub.add_parser("apply")
    t.add_argument("--model", required=True)
    t.add_argument("--image", required=True)
    t.add_argument("--q", type=int, default=8)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_pca_apply)
    t = psub.add_parser("table")
    t.add_argument("--model", required=True)
    t.add_argument("--max-q", type=int, default=19)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_pca_table)

    s = sub.add_parser("net", help="network commands")
    nsub = s.add_subparsers(dest="net_command", required=True)
    t = nsub.add_parser("info")
    t.add_argument("--net", choices=list(unet.PRESETS), default="full")
    t.set_defaults(func=cmd_net_info)

    s = sub.add_parser("train", help="train one network variant on a prepared data directory")
    s.add_argument("--net", choices=list(unet.PRESETS), default="full")
    s.add_argument("--images", choices=["original", "pca"], default="original")
    s.add_argument("--gamma", type=float, default=train.TrainConfig.gamma)
    s.add_argument("--lr", type=float, default=train.TrainConfig.learning_rate)
    s.add_argument("--epochs", type=int, default=train.TrainConfig.epochs)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--split", type=float, default=train.TrainConfig.split)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("register", help="register one image pair with a trained network")
    s.add_argument("--model", required=True)
    s.add_argument("--moving", required=True)
    s.add_argument("--fixed", required=True)
    s.add_argument("--gamma", type=float, default=train.TrainConfig.gamma)
    s.add_argument("--out-moved", required=True)
    s.add_argument("--out-field")
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("evaluate", help="belt metrics of a checkpoint on the held-out split")
    s.add_argument("--model", required=True)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--images", choices=["original", "pca"], default="original")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--split", type=float, default=train.TrainConfig.split)
    s.add_argument("--half-width", type=float, default=metrics.DEFAULT_HALF_WIDTH)
    s.add_argument("--delta-i-source", choices=["moving", "original"], default="moving")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("compare", help="paired t-tests between two metric CSVs")
    s.add_argument("a")
    s.add_argument("b")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("experiment", help="run the full 3 nets x 2 image types study")
    s.add_argument("--config", help="experiment config file (default: packaged default)")
    s.add_argument("--out", help="output directory (overrides the config)")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_experiment)

    s = sub.add_parser("report", help="summarise a finished experiment")
    s.add_argument("out_dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (pipeline.PipelineError, config.ConfigError, segmentation.SegmentationError,
            affine.AffineError, pca.PcaError, imgcore.ShapeError, train.TrainingDivergence,
            metrics.MetricError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
