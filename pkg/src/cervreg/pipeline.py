"""End-to-end experiment: phantoms, pre-registration, PCA, training, statistics.

Output layout of :func:`run_experiment` (``out`` is the output directory)::

    out/raw/            generated phantoms (PGM) and truth.csv
    out/data/           208x128 pre-registered crops (PGM) and index.csv
    out/pca_model.bin   PCA model of the pre-registered set
    out/seed_<s>/       <net>_<variant>.ckpt / .history.csv / .metrics.csv
    out/manifest.csv    one row per trained variant
    out/comparison.csv  pooled paired t-tests between variants
    out/summary.csv     box-plot statistics per variant and metric
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import metrics, pca, synth, train, unet
from .affine import apply_affine, compute_affine, reference_in_crop
from .imgcore import read_pgm, write_pgm
from .segmentation import EllipseParams, SegConfig, SegmentationError, segment_ijv

NETS = ("full", "reduced", "filters16")
INDEX_HEADER = ["image_id", "subject_id", "file", "role", "ijv_cx", "ijv_cy", "ijv_a", "ijv_b",
                "ijv_phi_deg", "status"]
METRIC_HEADER = ["image_id", "variant", "net", "delta_i", "l_bar"]
COMPARE_HEADER = ["metric", "t", "dof", "alpha", "mean_a", "mean_b"]


class PipelineError(RuntimeError):
    def __init__(self, stage: str, path, message: str):
        super().__init__(f"[{stage}] {path}: {message}")
        self.stage = stage
        self.path = path


fmt = train.fmt


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def _read_csv(path, stage="read"):
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise PipelineError(stage, path, exc.strerror or str(exc)) from None


def worker_count(env=None) -> int:
    """Worker cap from ``CERVREG_THREADS`` (default 1)."""
    raw = (os.environ if env is None else env).get("CERVREG_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"CERVREG_THREADS must be a positive integer, got '{raw}'") from None
    if n < 1:
        raise ValueError(f"CERVREG_THREADS must be a positive integer, got '{raw}'")
    return n


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    subjects: int = 14
    per_subject: int = 6
    data_seed: int = 0
    phantom: synth.PhantomSpec = synth.PhantomSpec()
    seg: SegConfig = SegConfig()
    reference: EllipseParams = EllipseParams(103.5, 63.5, 22.0, 13.0, 0.0)
    reference_id: int = 0
    train_cfg: train.TrainConfig = train.TrainConfig()
    overrides: dict = field(default_factory=dict)  # "net.variant" -> {field: value}
    seeds: tuple = (0,)
    nets: tuple = NETS
    variants: tuple = train.VARIANTS
    half_width: float = metrics.DEFAULT_HALF_WIDTH
    pca_q: int = 8
    delta_i_source: str = "moving"
    out_dir: str = "experiment_out"

    def train_config(self, net: str, variant: str, seed: int) -> train.TrainConfig:
        base = replace(self.train_cfg, seed=seed, image_variant=variant, pca_q=self.pca_q,
                       half_width=self.half_width)
        return replace(base, **self.overrides.get(f"{net}.{variant}", {}))


_TRAIN_KEYS = {"gamma": float, "learning_rate": float, "epochs": int, "beta1": float, "beta2": float,
               "eps": float, "split": float}


def experiment_config(conf: cfgmod.Config) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from a parsed file."""
    d = ExperimentConfig()
    seg_d = d.seg
    seg = SegConfig(
        g_thresh=conf.get_float("segmentation", "g_thresh", seg_d.g_thresh),
        n=conf.get_int("segmentation", "n", seg_d.n),
        y_band=conf.get_pair("segmentation", "y_band", float, seg_d.y_band),
        d_max=conf.get_float("segmentation", "d_max", seg_d.d_max),
        area_range=conf.get_pair("segmentation", "area_range", float, seg_d.area_range),
        r_min=conf.get_float("segmentation", "r_min", seg_d.r_min),
        h_min=conf.get_float("segmentation", "h_min", seg_d.h_min),
    )
    r = d.reference
    reference = EllipseParams(conf.get_float("reference", "cx", r.cx), conf.get_float("reference", "cy", r.cy),
                              conf.get_float("reference", "a", r.a), conf.get_float("reference", "b", r.b),
                              math.radians(conf.get_float("reference", "phi_deg", math.degrees(r.phi))))
    phantom = replace(d.phantom,
                      speckle_sigma=conf.get_float("data", "speckle_sigma", d.phantom.speckle_sigma),
                      reverberation_prob=conf.get_float("data", "reverberation_prob",
                                                        d.phantom.reverberation_prob))
    tkw = {}
    for key, kind in _TRAIN_KEYS.items():
        if conf.has("train", key):
            tkw[key] = conf.get_float("train", key) if kind is float else conf.get_int("train", key)
    for key in conf.keys("train"):
        if key not in _TRAIN_KEYS:
            raise conf.error("train", key, f"unknown training key '{key}'")
    try:
        tcfg = replace(d.train_cfg, **tkw)
    except ValueError as exc:
        raise cfgmod.ConfigError(str(exc), source=conf.source) from None
    overrides = {}
    for section in conf.sections:
        if not section.startswith("train."):
            continue
        parts = section.split(".")
        if len(parts) != 3 or parts[1] not in NETS or parts[2] not in train.VARIANTS:
            raise cfgmod.ConfigError(f"section [{section}] must be [train.<net>.<variant>]",
                                     source=conf.source)
        ov = {}
        for key in conf.keys(section):
            if key not in _TRAIN_KEYS:
                raise conf.error(section, key, f"unknown training key '{key}'")
            kind = _TRAIN_KEYS[key]
            ov[key] = conf.get_float(section, key) if kind is float else conf.get_int(section, key)
        overrides[f"{parts[1]}.{parts[2]}"] = ov
    nets = tuple(conf.get_list("experiment", "nets", str, d.nets))
    for n in nets:
        if n not in NETS:
            raise conf.error("experiment", "nets", f"unknown net '{n}'")
    variants = tuple(conf.get_list("experiment", "variants", str, d.variants))
    for v in variants:
        if v not in train.VARIANTS:
            raise conf.error("experiment", "variants", f"unknown variant '{v}'")
    source = conf.get_str("experiment", "delta_i_source", d.delta_i_source)
    if source not in ("moving", "original"):
        raise conf.error("experiment", "delta_i_source", "must be 'moving' or 'original'")
    out = ExperimentConfig(
        subjects=conf.get_int("data", "subjects", d.subjects),
        per_subject=conf.get_int("data", "per_subject", d.per_subject),
        data_seed=conf.get_int("data", "seed", d.data_seed),
        phantom=phantom, seg=seg, reference=reference,
        reference_id=conf.get_int("experiment", "reference_id", d.reference_id),
        train_cfg=tcfg, overrides=overrides,
        seeds=tuple(conf.get_list("experiment", "seeds", int, d.seeds)),
        nets=nets, variants=variants,
        half_width=conf.get_float("experiment", "half_width", d.half_width),
        pca_q=conf.get_int("experiment", "pca_q", d.pca_q),
        delta_i_source=source,
        out_dir=conf.get_str("experiment", "out_dir", d.out_dir),
    )
    if not out.seeds:
        raise cfgmod.ConfigError("at least one seed is required", source=conf.source)
    for key in ("subjects", "per_subject"):
        if getattr(out, key) < 1:
            raise conf.error("data", key, f"{key} must be >= 1")
    return out


def default_config_text() -> str:
    return resources.files("cervreg").joinpath("data/default.ini").read_text()


def load_experiment_config(path=None) -> ExperimentConfig:
    if path is None:
        return experiment_config(cfgmod.parse(default_config_text(), "default.ini"))
    return experiment_config(cfgmod.load(path))


# --- data preparation --------------------------------------------------------


@dataclass
class PreparedSet:
    reference: np.ndarray
    reference_id: int
    images: list  # moving images, 208x128 float32
    ids: list
    subjects: list
    excluded: list = field(default_factory=list)  # (image_id, reason)


def prepare_dataset(dataset, seg_cfg: SegConfig, ref: EllipseParams, reference_id: int = 0):
    """Segment every phantom and map its IJV onto the reference ellipse.

    Images whose segmentation fails are excluded (and reported); the
    reference image itself must succeed.  Returns ``(PreparedSet, rows)``
    where ``rows`` are index records ``(image_id, subject_id, ellipse or None,
    crop or None, reason)``.
    """
    rows = []
    for img, truth in dataset:
        try:
            e = segment_ijv(img, seg_cfg)
            crop = apply_affine(img, compute_affine(e, ref, img.shape))
            rows.append((truth.image_id, truth.subject_id, e, crop, ""))
        except (SegmentationError, ValueError) as exc:
            rows.append((truth.image_id, truth.subject_id, None, None, str(exc)))
    return _assemble(rows, reference_id), rows


def _assemble(rows, reference_id):
    ref_rows = [r for r in rows if r[0] == reference_id]
    if not ref_rows or ref_rows[0][3] is None:
        reason = ref_rows[0][4] if ref_rows else "not in dataset"
        raise PipelineError("prepare", f"image {reference_id}", f"reference image unusable: {reason}")
    out = PreparedSet(ref_rows[0][3], reference_id, [], [], [])
    for image_id, subject, e, crop, reason in rows:
        if image_id == reference_id:
            continue
        if crop is None:
            out.excluded.append((image_id, reason))
            continue
        out.images.append(crop)
        out.ids.append(image_id)
        out.subjects.append(subject)
    return out


def write_prepared(out_dir, rows, reference_id: int) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recs = []
    for image_id, subject, e, crop, reason in rows:
        if crop is None:
            recs.append([image_id, subject, "", "excluded", "", "", "", "", "", reason])
            continue
        name = f"img_{image_id:03d}.pgm"
        write_pgm(out_dir / name, crop)
        role = "reference" if image_id == reference_id else "moving"
        recs.append([image_id, subject, name, role, f"{e.cx:.4f}", f"{e.cy:.4f}", f"{e.a:.4f}",
                     f"{e.b:.4f}", f"{math.degrees(e.phi):.4f}", "ok"])
    path = out_dir / "index.csv"
    _write_csv(path, INDEX_HEADER, recs)
    return path


def load_prepared(data_dir) -> PreparedSet:
    """Read a directory written by :func:`write_prepared`."""
    data_dir = Path(data_dir)
    rows = _read_csv(data_dir / "index.csv", "load-data")
    ref = None
    out = PreparedSet(None, -1, [], [], [])
    for r in rows:
        image_id = int(r["image_id"])
        if r["role"] == "excluded":
            out.excluded.append((image_id, r["status"]))
            continue
        path = data_dir / r["file"]
        try:
            img = read_pgm(path)
        except (OSError, ValueError) as exc:
            raise PipelineError("load-data", path, str(exc)) from None
        if r["role"] == "reference":
            ref = img
            out.reference_id = image_id
        else:
            out.images.append(img)
            out.ids.append(image_id)
            out.subjects.append(int(r["subject_id"]))
    if ref is None:
        raise PipelineError("load-data", data_dir / "index.csv", "no reference image listed")
    out.reference = ref
    return out


# --- training and evaluation ---------------------------------------------------


def write_metrics(path, records, variant: str, net: str) -> None:
    _write_csv(path, METRIC_HEADER,
               [[r.image_id, variant, net, fmt(r.delta_i), fmt(r.l_bar)] for r in records])


def read_metrics(path):
    """``{image_id: (delta_i, l_bar)}`` plus the variant and net names."""
    rows = _read_csv(path, "read-metrics")
    if rows and set(METRIC_HEADER) - set(rows[0]):
        raise PipelineError("read-metrics", path, "unexpected header")
    vals = {int(r["image_id"]): (float(r["delta_i"]), float(r["l_bar"])) for r in rows}
    variant = rows[0]["variant"] if rows else ""
    net = rows[0]["net"] if rows else ""
    return vals, variant, net


def evaluate_model(net, prepared: PreparedSet, tcfg: train.TrainConfig, pca_model=None,
                   ids=None, delta_i_source: str = "moving"):
    """Belt metrics of ``net`` on the held-out split (or on ``ids``)."""
    idx = list(range(len(prepared.images)))
    if ids is None:
        _, test = train.split_dataset(idx, tcfg.split, tcfg.seed)
    else:
        lookup = {i: k for k, i in enumerate(prepared.ids)}
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise PipelineError("evaluate", "image ids", f"unknown ids {missing}")
        test = [lookup[i] for i in ids]
    originals = [prepared.images[k] for k in test]
    moving = train.variant_images(originals, tcfg, prepared.reference, pca_model)
    belt = train.default_belt(prepared.reference.shape, tcfg.half_width)
    src = originals if delta_i_source == "original" else None
    return train.evaluate(net, moving, prepared.reference, belt, [prepared.ids[k] for k in test], src)


def _train_job(job):
    prepared, net_name, variant, seed, tcfg, pca_model, out_dir, source = job
    seed_dir = Path(out_dir) / f"seed_{seed}"
    stem = seed_dir / f"{net_name}_{variant}"
    try:
        net, hist = train.train(prepared.images, prepared.reference, unet.preset(net_name), tcfg,
                                ids=prepared.ids, pca_model=pca_model)
        records = hist.test
        if source == "original":
            records = evaluate_model(net, prepared, tcfg, pca_model, delta_i_source="original")
        unet.save_checkpoint(net, f"{stem}.ckpt")
        hist.write_csv(f"{stem}.history.csv")
        write_metrics(f"{stem}.metrics.csv", records, variant, net_name)
    except Exception as exc:
        raise PipelineError("train", f"{stem}.ckpt", f"{type(exc).__name__}: {exc}") from exc
    return seed, net_name, variant


@dataclass
class ExperimentResult:
    out_dir: Path
    checkpoints: list
    metric_files: list
    comparison: Path
    summary: Path
    manifest: Path


def run_experiment(cfg: ExperimentConfig, out_dir=None, workers: int | None = None, log=None):
    """Train and evaluate every (seed, net, variant) combination of ``cfg``."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    say = log or (lambda msg: None)
    workers = worker_count() if workers is None else workers

    say("generating phantoms")
    try:
        dataset = synth.generate_dataset(cfg.subjects, cfg.per_subject, cfg.data_seed, cfg.phantom)
        synth.write_dataset(dataset, out / "raw")
    except Exception as exc:
        raise PipelineError("synth", out / "raw", str(exc)) from exc

    say("segmenting and pre-registering")
    ref_crop = reference_in_crop(cfg.reference)
    _, rows = prepare_dataset(dataset, cfg.seg, ref_crop, cfg.reference_id)
    write_prepared(out / "data", rows, cfg.reference_id)
    prepared = load_prepared(out / "data")  # train on the 8-bit images as stored
    if len(prepared.images) < 4:
        raise PipelineError("prepare", out / "data", "fewer than 4 usable moving images")

    pca_model = None
    if "pca_q8" in cfg.variants:
        say("fitting PCA")
        pca_model = pca.fit([prepared.reference] + prepared.images)
        pca.save_model(pca_model, out / "pca_model.bin")

    jobs = []
    for seed in cfg.seeds:
        (out / f"seed_{seed}").mkdir(exist_ok=True)
        for net_name in cfg.nets:
            for variant in cfg.variants:
                tcfg = cfg.train_config(net_name, variant, seed)
                jobs.append((prepared, net_name, variant, seed, tcfg,
                             pca_model if variant == "pca_q8" else None, str(out), cfg.delta_i_source))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            for seed, net_name, variant in ex.map(_train_job, jobs):
                say(f"trained seed {seed} {net_name} {variant}")
    else:
        for job in jobs:
            seed, net_name, variant = _train_job(job)
            say(f"trained seed {seed} {net_name} {variant}")

    manifest_rows = []
    for seed in cfg.seeds:
        for net_name in cfg.nets:
            for variant in cfg.variants:
                stem = f"seed_{seed}/{net_name}_{variant}"
                manifest_rows.append([seed, net_name, variant, f"{stem}.ckpt", f"{stem}.metrics.csv",
                                      f"{stem}.history.csv"])
    manifest = out / "manifest.csv"
    _write_csv(manifest, ["seed", "net", "variant", "checkpoint", "metrics", "history"], manifest_rows)
    results = load_results(out)
    comparison = out / "comparison.csv"
    write_comparison(comparison, results)
    summary = out / "summary.csv"
    write_summary(summary, results)
    return ExperimentResult(out, [out / r[3] for r in manifest_rows], [out / r[4] for r in manifest_rows],
                            comparison, summary, manifest)


# --- statistics and reporting ------------------------------------------------


def load_results(out_dir):
    """``{(seed, net, variant): {image_id: (delta_i, l_bar)}}`` from a finished run."""
    out_dir = Path(out_dir)
    rows = _read_csv(out_dir / "manifest.csv", "report")
    res = {}
    for r in rows:
        label = f"{r['net']}_{r['variant']} (seed {r['seed']})"
        for key in ("checkpoint", "metrics"):
            if not (out_dir / r[key]).is_file():
                raise PipelineError("report", out_dir / r[key], f"missing {key} for variant {label}")
        res[(int(r["seed"]), r["net"], r["variant"])] = read_metrics(out_dir / r["metrics"])[0]
    return res


def pooled_pairs(results, a, b):
    """Per-image values of variants ``a`` and ``b`` (``(net, variant)``) paired by seed and image."""
    seeds = sorted({k[0] for k in results})
    va, vb = [], []
    for s in seeds:
        ra, rb = results.get((s,) + a), results.get((s,) + b)
        if ra is None or rb is None:
            continue
        for image_id in sorted(set(ra) & set(rb)):
            va.append(ra[image_id])
            vb.append(rb[image_id])
    return np.array(va).reshape(-1, 2), np.array(vb).reshape(-1, 2)


def contrasts(results):
    """``(a, b)`` variant pairs compared in the experiment."""
    present = {(k[1], k[2]) for k in results}
    out = []
    for v in train.VARIANTS:
        for n in ("reduced", "filters16"):
            if (n, v) in present and ("full", v) in present:
                out.append(((n, v), ("full", v)))
    for n in NETS:
        if (n, "pca_q8") in present and (n, "original") in present:
            out.append(((n, "pca_q8"), (n, "original")))
    return out


def compare_values(a, b):
    """t-test rows for paired metric arrays of shape ``(n, 2)`` (delta_i, l_bar)."""
    rows = []
    for k, metric in enumerate(("delta_i", "l_bar")):
        r = metrics.paired_t_test(a[:, k], b[:, k])
        rows.append([metric, fmt(r.t), r.dof, fmt(r.alpha), fmt(r.mean_a), fmt(r.mean_b)])
    return rows


def write_comparison(path, results) -> None:
    rows = []
    for a, b in contrasts(results):
        va, vb = pooled_pairs(results, a, b)
        if len(va) < 2:
            continue
        for row in compare_values(va, vb):
            rows.append(["_".join(a), "_".join(b)] + row)
    _write_csv(path, ["a", "b"] + COMPARE_HEADER, rows)


def write_summary(path, results) -> None:
    rows = []
    for net_name in NETS:
        for variant in train.VARIANTS:
            vals = [v for k, r in sorted(results.items()) if k[1:] == (net_name, variant) for v in r.values()]
            if not vals:
                continue
            arr = np.array(vals)
            for k, metric in enumerate(("delta_i", "l_bar")):
                x = arr[:, k]
                q = np.percentile(x, [0, 25, 50, 75, 100])
                rows.append([net_name, variant, metric, len(x), fmt(x.mean())] + [fmt(v) for v in q])
    _write_csv(path, ["net", "variant", "metric", "n", "mean", "min", "q1", "median", "q3", "max"], rows)


@dataclass(frozen=True)
class TrendChecks:
    l_bar_lower_majority: dict  # net -> bool
    l_bar_alpha: dict  # net -> pooled alpha of pca_q8 vs original
    l_bar_significant: bool
    delta_i_ratio: float  # pooled mean delta_i, reduced pca_q8 / reduced original
    delta_i_within_15pct: bool

    @property
    def passed(self) -> bool:
        return all(self.l_bar_lower_majority.values()) and self.l_bar_significant and self.delta_i_within_15pct


def trend_checks(results, alpha_level: float = 0.1, tolerance: float = 0.15) -> TrendChecks:
    """Directional checks: PCA variants deform less, image similarity holds.

    * per net, the pca_q8 mean test ``l_bar`` is below the original one in a
      strict majority of seeds;
    * for at least one net the pooled paired t-test on ``l_bar`` has
      ``alpha < alpha_level`` with the pca_q8 mean lower;
    * the reduced net's pooled mean ``delta_i`` of pca_q8 is within
      ``tolerance`` (relative) of its original-image value.
    """
    seeds = sorted({k[0] for k in results})
    majority, alphas = {}, {}
    significant = False
    for net_name in NETS:
        if (seeds[0], net_name, "pca_q8") not in results:
            continue
        wins = 0
        for s in seeds:
            lp = np.mean([v[1] for v in results[(s, net_name, "pca_q8")].values()])
            lo = np.mean([v[1] for v in results[(s, net_name, "original")].values()])
            wins += lp < lo
        majority[net_name] = wins > len(seeds) / 2
        va, vb = pooled_pairs(results, (net_name, "pca_q8"), (net_name, "original"))
        r = metrics.paired_t_test(va[:, 1], vb[:, 1])
        alphas[net_name] = r.alpha
        significant |= r.alpha < alpha_level and r.mean_a < r.mean_b
    va, vb = pooled_pairs(results, ("reduced", "pca_q8"), ("reduced", "original"))
    ratio = float(va[:, 0].mean() / vb[:, 0].mean()) if len(va) else float("nan")
    return TrendChecks(majority, alphas, bool(significant), ratio, bool(abs(ratio - 1.0) <= tolerance))


def report(out_dir) -> str:
    """Human-readable table of mean metrics per variant with trend flags."""
    results = load_results(out_dir)
    seeds = sorted({k[0] for k in results})
    lines = [f"experiment: {out_dir}  seeds: {', '.join(map(str, seeds))}", "",
             f"{'net':<10} {'images':<9} {'mean dI':>9} {'mean l':>9} {'alpha dI':>10} {'alpha l':>10}"]
    for net_name in NETS:
        for variant in train.VARIANTS:
            vals = [v for k, r in sorted(results.items()) if k[1:] == (net_name, variant) for v in r.values()]
            if not vals:
                continue
            arr = np.array(vals)
            a_di = a_l = ""
            if variant == "pca_q8" and any(k[1:] == (net_name, "original") for k in results):
                va, vb = pooled_pairs(results, (net_name, "pca_q8"), (net_name, "original"))
                if len(va) >= 2:
                    a_di = f"{metrics.paired_t_test(va[:, 0], vb[:, 0]).alpha:.4f}"
                    a_l = f"{metrics.paired_t_test(va[:, 1], vb[:, 1]).alpha:.4f}"
            lines.append(f"{net_name:<10} {variant:<9} {arr[:, 0].mean():>9.4f} {arr[:, 1].mean():>9.4f} "
                         f"{a_di:>10} {a_l:>10}")
    nets_present = {k[1] for k in results}
    if {"original", "pca_q8"} <= {k[2] for k in results} and "reduced" in nets_present:
        tc = trend_checks(results)
        lines.append("")
        for net_name, ok in tc.l_bar_lower_majority.items():
            lines.append(f"[{'PASS' if ok else 'FAIL'}] {net_name}: pca_q8 lowers mean l in a majority of seeds")
        lines.append(f"[{'PASS' if tc.l_bar_significant else 'FAIL'}] pooled l t-test alpha < 0.1 for at least "
                     f"one net ({', '.join(f'{n}={a:.3g}' for n, a in tc.l_bar_alpha.items())})")
        lines.append(f"[{'PASS' if tc.delta_i_within_15pct else 'FAIL'}] reduced net: pca_q8 mean dI within 15% "
                     f"of original (ratio {tc.delta_i_ratio:.3f})")
    return "\n".join(lines) + "\n"
