"""Command-line entry point: ``fullset <command> ... --out DIR``.

Every command writes its outputs plus ``manifest.json`` into one output
directory. Reports are JSON, plot data is CSV with a header row. The
manifest records argv, the resolved configuration, seeds and SHA-256 digests
of inputs and outputs, so ``fullset rerun --manifest ...`` repeats the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import analysis as A
from . import dataio
from . import mps as mpslib
from .classify import UNCLASSIFIABLE, ClassifierEnsemble, best_threshold, calibrate_threshold, classify
from .errors import FullSetError, InputError, ParseError
from .estimators import MPSClassifier
from .sampling import SampleRequest, sample_batch
from .training import DEFAULT_ETA, TrainConfig, train

log = logging.getLogger("fullset")

DATA_ENV = "FULLSET_DATA_DIR"
MANIFEST = "manifest.json"
IDX_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
# argument names holding input paths; their digests go into the manifest
INPUT_KEYS = ("images", "labels", "data", "val", "model", "pos", "neg", "clamp", "ensemble")


# ---------------------------------------------------------------- helpers


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _dumps(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return "\n".join(lines) + "\n"


class Outputs:
    """Resolves ``--out`` and tracks the files a command writes.

    ``--out`` naming a file with a suffix (``model.mpsw``) makes its parent
    the output directory and the name the primary output; anything else is
    taken as the directory itself.
    """

    def __init__(self, out, default_name):
        p = Path(out)
        if p.suffix and not p.is_dir():
            self.dir, self.primary = p.parent, p.name
        else:
            self.dir, self.primary = p, default_name
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written = []

    def path(self, name=None):
        return self.dir / (name or self.primary)

    def write_text(self, text, name=None):
        p = self.path(name)
        p.write_text(text)
        self.written.append(p)
        return p

    def write_bytes(self, data, name=None):
        p = self.path(name)
        p.write_bytes(data)
        self.written.append(p)
        return p

    def add(self, path):
        self.written.append(Path(path))


def _need_file(path, what):
    if path is None:
        raise InputError(f"{what} is required")
    p = Path(path)
    if not p.exists():
        raise InputError(f"{what} not found: {p}")
    return p


def _load_data(path, what="--data"):
    return dataio.load_dataset(_need_file(path, what))


def _load_model(path):
    return mpslib.load(_need_file(path, "--model"))


def _data_dir(args):
    return Path(getattr(args, "data_dir", None) or os.environ.get(DATA_ENV) or ".")


def _int_list(text):
    try:
        return [int(v) for v in str(text).replace(" ", "").split(",") if v != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _batch_size(text):
    return "full" if str(text) == "full" else int(text)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _per_digit(ds, digits, per_digit):
    """First ``per_digit`` images of each requested digit, in file order."""
    if ds.labels is None:
        raise InputError("dataset has no labels")
    idx = []
    for d in digits:
        hits = np.flatnonzero(ds.labels == d)
        if per_digit:
            hits = hits[:per_digit]
        idx.append(hits)
    return ds.subset(np.sort(np.concatenate(idx)) if idx else np.zeros(0, int))


def _config_from(args):
    cfg = TrainConfig(
        bond_cap=args.bond_dim,
        eta=args.eta,
        max_epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        early_stop=args.early_stop,
        patience=args.patience,
        plateau=tuple(args.plateau),
    )
    cfg.validate()
    return cfg


# ---------------------------------------------------------------- commands


def cmd_ingest(args, out):
    if args.images is None:
        imgs, labs = IDX_FILES[args.set]
        base = _data_dir(args)
        images = base / imgs if (base / imgs).exists() else base / (imgs + ".gz")
        labels = base / labs if (base / labs).exists() else base / (labs + ".gz")
    else:
        images, labels = Path(args.images), (Path(args.labels) if args.labels else None)
    _need_file(images, "image file")
    if labels is not None:
        _need_file(labels, "label file")
    args.images, args.labels = str(images), (str(labels) if labels else None)
    ds = dataio.load_idx_dataset(images, labels, args.threshold, "test" if args.set == "test" else "train")
    if args.digits:
        ds = _per_digit(ds, args.digits, args.per_digit)
    elif args.per_digit:
        ds = _per_digit(ds, range(10), args.per_digit)
    if args.limit:
        ds = ds.subset(np.arange(min(args.limit, len(ds))))
    parts = {}
    if args.split_fraction is not None:
        parts["train"], parts["validation"] = dataio.split(ds, args.split_fraction, args.seed)
    else:
        parts[args.set if out.primary == "data.bin" else Path(out.primary).stem] = ds
    summary = {"threshold": args.threshold, "seed": args.seed, "sets": {}}
    for name, part in parts.items():
        out.write_bytes(dataio.dataset_to_bytes(part), f"{name}.bin")
        counts = {} if part.labels is None else {int(k): int(v) for k, v in zip(*np.unique(part.labels, return_counts=True))}
        summary["sets"][name] = {"count": len(part), "height": part.height, "width": part.width, "label_counts": counts}
    out.write_text(_dumps(summary), "ingest.json")
    return {"seed": args.seed}


def cmd_train(args, out):
    ds = _load_data(args.data)
    cfg = _config_from(args)
    val = _load_data(args.val, "--val") if args.val else None
    if args.digit == "all":
        if ds.labels is None:
            raise InputError("training an ensemble needs a labeled dataset")
        clf = MPSClassifier(
            bond_dim=cfg.bond_cap, eta=cfg.eta, max_epochs=cfg.max_epochs, batch_size=cfg.batch_size,
            random_state=cfg.seed, early_stop=cfg.early_stop, patience=cfg.patience, plateau=cfg.plateau,
            validation_fraction=0.0 if val is None else 0.1, verbose=args.verbose,
        )
        clf.fit(ds.bits, ds.labels, None if val is None else val.bits, None if val is None else val.labels)
        clf.ensemble_.save(out.dir)
        for k in clf.ensemble_.labels:
            out.add(out.dir / f"model_{k}.mpsw")
        out.add(out.dir / "thresholds.json")
        out.write_text(clf.trace_.to_csv(), "trace.csv")
        return {"seed": cfg.seed, "class_seeds": {int(c): cfg.seed * 1000 + int(c) for c in clf.classes_}}
    digit = int(args.digit) if args.digit is not None else None
    bits = ds.with_label(digit).bits if digit is not None else ds.bits
    if len(bits) == 0:
        raise InputError("no training images selected")
    monitor, pos, neg = None, None, None
    if val is not None and digit is not None:
        pos, neg = val.with_label(digit).bits, val.without_label(digit).bits
        if len(pos) and len(neg):
            monitor = lambda m: calibrate_threshold(m, pos, neg).balanced_accuracy  # noqa: E731
    init = mpslib.MPS.random(bits.shape[1], cfg.bond_cap, seed=cfg.seed)
    model, trace = train(init, bits, cfg, monitor=monitor)
    out.write_bytes(mpslib.to_bytes(model))
    out.write_text(trace.to_csv(), "trace.csv")
    if monitor is not None:
        out.write_text(_dumps(calibrate_threshold(model, pos, neg).to_dict()), "discrimination.json")
    return {"seed": cfg.seed}


def _read_clamp(path):
    text = _need_file(path, "--clamp").read_text()
    try:
        raw = json.loads(text)
        return {int(k): int(v) for k, v in raw.items()}
    except (ValueError, AttributeError):
        pass
    clamp = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            site, bit = line.replace(",", " ").split()
            clamp[int(site)] = int(bit)
        except ValueError as exc:
            raise ParseError(f"clamp file line {lineno}: expected 'site bit'") from exc
    return clamp


def cmd_sample(args, out):
    model = _load_model(args.model)
    h, w = _shape(model.n_sites, args.height, args.width)
    req = SampleRequest(
        args.count, seed=args.seed, clamped=_read_clamp(args.clamp) if args.clamp else None,
        energy_window=tuple(args.e_window) if args.e_window else None, probe_budget=args.probe_budget,
    )
    ds = sample_batch(model, req, h, w)
    out.write_bytes(dataio.dataset_to_bytes(ds))
    stem = out.primary.rsplit(".", 1)[0]
    out.write_text("\n\n".join(dataio.text_grid(ds[i]) for i in range(len(ds))) + "\n", f"{stem}.txt")
    out.write_text(_csv(["index", "E"], enumerate(ds.energies.tolist())), f"{stem}_energies.csv")
    return {"seed": args.seed}


def _shape(n, height=None, width=None):
    from .validation import image_shape

    return image_shape(n, None if height is None or width is None else (height, width))


def _density_csv(values, points=256):
    f = A.kde(values)
    lo, hi = float(np.min(f.data)) - 3 * f.bandwidth, float(np.max(f.data)) + 3 * f.bandwidth
    grid = np.linspace(lo, hi, points)
    return _csv(["E", "density"], zip(grid.tolist(), f(grid).tolist())), f


def _sampled_energies(model, count, seed):
    return sample_batch(model, SampleRequest(count, seed=seed)).energies


def analyze_energy(args, out):
    model = _load_model(args.model)
    sets = {}
    if args.data:
        ds = _load_data(args.data)
        if args.digit is not None:
            ds = ds.with_label(args.digit)
        sets[ds.split_tag] = A.energies(model, ds)
    if args.samples:
        sets["sampled"] = _sampled_energies(model, args.samples, args.seed)
    if not sets:
        raise InputError("analyze energy needs --data and/or --samples")
    report = {}
    for tag, e in sets.items():
        report[tag] = A.EnergyStats.from_energies(e, tag).to_dict()
        if np.isfinite(e).sum() >= 2 and np.ptp(e[np.isfinite(e)]) > 0:
            text, _ = _density_csv(e[np.isfinite(e)])
            out.write_text(text, f"energy_density_{tag}.csv")
    out.write_text(_dumps(report))
    return {"seed": args.seed}


def analyze_size(args, out):
    model = _load_model(args.model)
    ds = _load_data(args.data)
    if args.digit is not None:
        ds = ds.with_label(args.digit)
    stats = A.energy_stats(model, ds)
    sampled = _sampled_energies(model, args.samples, args.seed)
    rho = float(A.kde(sampled)(stats.e0)[0])
    if args.epsilon is not None:
        delta_e = args.epsilon - stats.e_ground
    else:
        delta_e = args.delta_e
    size = A.full_set_size(stats.e0, rho, delta_e, args.epsilon)
    report = {"energy": stats.to_dict(), "size": size.to_dict(), "rho_sm_at_e0": rho}
    out.write_text(_dumps(report))
    return {"seed": args.seed}


def analyze_hamming(args, out):
    ds = _load_data(args.data)
    if args.digit is not None:
        ds = ds.with_label(args.digit)
    out.write_text(_dumps(A.hamming_stats(ds, args.pair_budget, args.seed).to_dict()))
    return {"seed": args.seed}


def _fractal_points(args):
    if args.data:
        ds = _load_data(args.data)
        if args.digit is not None:
            ds = ds.with_label(args.digit)
        return ds.bits
    model = _load_model(args.model)
    window = tuple(args.e_window) if args.e_window else None
    req = SampleRequest(args.samples, seed=args.seed, energy_window=window, probe_budget=args.probe_budget)
    return sample_batch(model, req).bits


def analyze_fractal(args, out):
    bits = _fractal_points(args)
    fit = A.fractal_dimension(bits, A.doubling_schedule(len(bits), args.k_start), seed=args.seed)
    out.write_text(_dumps(fit.to_dict()))
    rows = zip(np.log(fit.k_values).tolist(), np.log(np.maximum(fit.d_values, 1e-300)).tolist())
    out.write_text(_csv(["log_K", "log_d"], rows), "fractal.csv")
    return {"seed": args.seed}


def analyze_page(args, out):
    pc = A.page_curve(_load_model(args.model), tuple(args.plateau))
    out.write_text(_dumps(pc.to_dict()))
    out.write_text(pc.to_csv(), "page.csv")
    return {}


def analyze_neat(args, out):
    model = _load_model(args.model)
    ens = ClassifierEnsemble.load(_need_file(args.ensemble, "--ensemble"))
    if args.digit is None or args.digit not in ens.models:
        raise InputError("--digit must name a label of the ensemble")
    if args.data:
        ds = _load_data(args.data)
        if ds.labels is not None:
            ds = ds.with_label(args.digit)
        e0 = A.e0(A.energies(model, ds))
    else:
        e0 = A.e0(_sampled_energies(model, args.samples_per_bin, args.seed))
    grid = e0 + args.e_step * np.arange(args.e_points)
    res = A.neat_threshold(model, A.ensemble_quality_oracle(ens, args.digit), grid, args.samples_per_bin,
                           seed=args.seed, half_width=args.half_width, probe_budget=args.probe_budget)
    report = res.to_dict()
    report["e0"] = e0
    out.write_text(_dumps(report))
    rows = [(b.energy, b.mean, b.std, b.count) for b in res.profile]
    out.write_text(_csv(["E", "quality_mean", "quality_std", "count"], rows), "quality_profile.csv")
    return {"seed": args.seed}


ANALYZERS = {
    "energy": analyze_energy,
    "size": analyze_size,
    "hamming": analyze_hamming,
    "fractal": analyze_fractal,
    "page": analyze_page,
    "neat-threshold": analyze_neat,
}


def cmd_analyze(args, out):
    return ANALYZERS[args.kind](args, out)


def cmd_classify(args, out):
    ens = ClassifierEnsemble.load(_need_file(args.ensemble, "--ensemble"))
    ds = _load_data(args.data)
    pred = classify(ens, ds.bits)
    report = {"count": len(ds), "unclassifiable": int(np.sum(pred == UNCLASSIFIABLE)), "labels": ens.labels}
    if ds.labels is not None:
        labels = ens.labels
        conf = np.zeros((len(labels), len(labels) + 1), dtype=np.int64)
        col = {k: i for i, k in enumerate(labels)}
        for t, p in zip(ds.labels.tolist(), pred.tolist()):
            if t in col:
                conf[col[t], col.get(p, len(labels))] += 1
        report["accuracy"] = float(np.mean(pred == ds.labels))
        report["confusion"] = conf[:, : len(labels)]
    out.write_text(_dumps(report))
    truth = ds.labels.tolist() if ds.labels is not None else [""] * len(ds)
    out.write_text(_csv(["index", "label", "predicted"], zip(range(len(ds)), truth, pred.tolist())),
                   "predictions.csv")
    return {}


def cmd_discriminate(args, out):
    model = _load_model(args.model)
    pos = _load_data(args.pos, "--pos")
    if args.digit is not None and pos.labels is not None:
        pos = pos.with_label(args.digit)
    if args.noise_negatives:
        rng = np.random.default_rng(args.seed)
        neg = rng.integers(0, 2, size=(args.noise_negatives, model.n_sites), dtype=np.uint8)
    else:
        negs = _load_data(args.neg, "--neg")
        if args.digit is not None and negs.labels is not None:
            negs = negs.without_label(args.digit)
        neg = negs.bits
    rep = best_threshold(mpslib.log_prob(model, pos.bits), mpslib.log_prob(model, neg))
    out.write_text(_dumps(rep.to_dict()))
    return {"seed": args.seed}


def _mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0, "runs": int(v.size)}


def cmd_table1(args, out):
    if args.data:
        source = _load_data(args.data)
    else:
        imgs, labs = IDX_FILES["train"]
        base = _data_dir(args)
        source = dataio.load_idx_dataset(_need_file(base / imgs, "MNIST images"), _need_file(base / labs, "labels"),
                                         args.threshold)
    rows = []
    seeds = list(range(args.seeds))
    for digit in args.digits:
        ds = _per_digit(source, [digit], args.per_digit)
        if len(ds) < 2:
            raise InputError(f"digit {digit}: not enough images")
        ham = A.hamming_stats(ds, args.pair_budget, 0)
        for D in args.bond_dims:
            for seed in seeds:
                cfg = TrainConfig(bond_cap=D, eta=args.eta, max_epochs=args.epochs, batch_size=args.batch_size,
                                  seed=seed, early_stop=False, plateau=tuple(args.plateau))
                model, _ = train(mpslib.MPS.random(ds.n_pixels, D, seed=seed), ds.bits, cfg)
                e0 = A.e0(A.energies(model, ds))
                window = (e0 - args.neat_width, e0 + args.neat_width)
                neat = sample_batch(model, SampleRequest(args.neat_samples, seed=seed, energy_window=window,
                                                         probe_budget=args.probe_budget))
                fit = A.fractal_dimension(neat.bits, A.doubling_schedule(len(neat), 8), seed=seed)
                s_bar = A.page_curve(model, tuple(args.plateau)).s_bar
                rows.append({
                    "digit": digit, "bond_dim": D, "seed": seed, "V": e0 / math.log(2),
                    "d_ab": ham.mean_pairwise, "delta": fit.delta, "n": ham.mean_black_pixels, "s_bar": s_bar,
                })
                log.info("table1 digit %d D %d seed %d: V %.2f delta %.1f", digit, D, seed, rows[-1]["V"], fit.delta)
    cols = ["digit", "bond_dim", "seed", "V", "d_ab", "delta", "n", "s_bar"]
    out.write_text(_csv(cols, ([r[c] for c in cols] for r in rows)), "table1_runs.csv")
    summary = {}
    for digit in args.digits:
        mine = [r for r in rows if r["digit"] == digit]
        summary[str(digit)] = {c: _mean_std([r[c] for r in mine]) for c in ("V", "d_ab", "delta", "n", "s_bar")}
    summary["spread_convention"] = "mean and sample std over every (bond_dim, seed) run"
    out.write_text(_dumps(summary))
    return {"seeds": seeds}


# ---------------------------------------------------------------- parser


def _common(p, out_default):
    p.add_argument("--out", default=out_default, help="output directory, or file whose parent becomes it")
    p.add_argument("--config", help="key = value file; flags given on the command line win")
    p.add_argument("--threads", type=int, default=1, help="cap on BLAS worker threads")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verbose", action="store_true")


def _train_flags(p, epochs_default=10):
    p.add_argument("--bond-dim", type=int, default=100)
    p.add_argument("--eta", type=float, default=DEFAULT_ETA, help="TSGO rotation angle in radians")
    p.add_argument("--epochs", type=int, default=epochs_default)
    p.add_argument("--batch-size", type=_batch_size, default="full")
    p.add_argument("--plateau", type=int, nargs=2, default=[200, 600], metavar=("K_LO", "K_HI"))


def build_parser():
    parser = argparse.ArgumentParser(prog="fullset", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"fullset {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="IDX files -> packed binary dataset")
    _common(p, "data")
    p.add_argument("--images")
    p.add_argument("--labels")
    p.add_argument("--set", choices=sorted(IDX_FILES), default="train", help=f"which files to read from ${DATA_ENV}")
    p.add_argument("--data-dir")
    p.add_argument("--threshold", type=int, default=128)
    p.add_argument("--split-fraction", type=float)
    p.add_argument("--digits", type=_int_list)
    p.add_argument("--per-digit", type=int, default=0)
    p.add_argument("--limit", type=int, default=0)
    p.set_defaults(func=cmd_ingest, default_name="data.bin")

    p = sub.add_parser("train", help="train one digit's state, or an ensemble with --digit all")
    _common(p, "model")
    p.add_argument("--data", required=False)
    p.add_argument("--val")
    p.add_argument("--digit")
    _train_flags(p)
    p.add_argument("--early-stop", type=_bool, nargs="?", const=True, default=False)
    p.add_argument("--patience", type=int, default=2)
    p.set_defaults(func=cmd_train, default_name="model.mpsw")

    p = sub.add_parser("sample", help="exact samples from a trained state")
    _common(p, "samples")
    p.add_argument("--model")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--clamp")
    p.add_argument("--e-window", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--probe-budget", type=int, default=100_000)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.set_defaults(func=cmd_sample, default_name="samples.bin")

    p = sub.add_parser("analyze", help="full-set characteristics")
    p.add_argument("kind", choices=sorted(ANALYZERS))
    _common(p, "analysis")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--ensemble")
    p.add_argument("--digit", type=int)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta-e", type=float, default=1.0)
    p.add_argument("--pair-budget", type=int, default=100_000)
    p.add_argument("--k-start", type=int, default=8)
    p.add_argument("--e-window", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--probe-budget", type=int, default=100_000)
    p.add_argument("--plateau", type=int, nargs=2, default=[200, 600], metavar=("K_LO", "K_HI"))
    p.add_argument("--e-step", type=float, default=5.0)
    p.add_argument("--e-points", type=int, default=12)
    p.add_argument("--samples-per-bin", type=int, default=200)
    p.add_argument("--half-width", type=float)
    p.set_defaults(func=cmd_analyze, default_name="report.json")

    p = sub.add_parser("classify", help="argmax classification with an ensemble directory")
    _common(p, "classify")
    p.add_argument("--ensemble")
    p.add_argument("--data")
    p.add_argument("--report", dest="out")
    p.set_defaults(func=cmd_classify, default_name="report.json")

    p = sub.add_parser("discriminate", help="calibrate a full-set threshold for one state")
    _common(p, "discriminate")
    p.add_argument("--model")
    p.add_argument("--pos")
    p.add_argument("--neg")
    p.add_argument("--digit", type=int)
    p.add_argument("--noise-negatives", type=int, default=0, help="use N uniform random images as negatives")
    p.add_argument("--report", dest="out")
    p.set_defaults(func=cmd_discriminate, default_name="report.json")

    p = sub.add_parser("reproduce-table1", help="V, <d_ab>, Delta, n and S-bar per digit over runs")
    _common(p, "table1")
    p.add_argument("--data")
    p.add_argument("--data-dir")
    p.add_argument("--threshold", type=int, default=128)
    p.add_argument("--digits", type=_int_list, default=[3])
    p.add_argument("--bond-dims", type=_int_list, default=[30])
    p.add_argument("--seeds", type=int, default=1, help="number of seeds (0..N-1) per bond dimension")
    p.add_argument("--per-digit", type=int, default=2000)
    _train_flags(p, epochs_default=4)
    p.add_argument("--neat-samples", type=int, default=2048)
    p.add_argument("--neat-width", type=float, default=10.0, help="half-width of the window around E0 (nats)")
    p.add_argument("--probe-budget", type=int, default=1_000_000)
    p.add_argument("--pair-budget", type=int, default=100_000)
    p.set_defaults(func=cmd_table1, default_name="table1.json")

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="new output directory (default: the original)")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=None)
    return parser


# ---------------------------------------------------------------- config


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment; keys use flag spelling."""
    entries = {}
    for lineno, line in enumerate(_need_file(path, "--config").read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key.lstrip("-").replace("-", "_")] = value
    return entries


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise InputError(f"unknown command {command}")


def _convert(action, raw):
    if isinstance(action, argparse._StoreTrueAction):
        return _bool(raw)
    conv = action.type or str
    if action.nargs not in (None, "?"):
        return [conv(v) for v in raw.replace(",", " ").split()]
    return conv(raw)


def parse_args(argv, parser=None):
    parser = parser or build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = _subparser(parser, args.command)
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, raw in read_config(args.config).items():
            if key not in actions or key in ("config", "help"):
                raise InputError(f"config key {key!r} is not a flag of {args.command}")
            try:
                defaults[key] = _convert(actions[key], raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ParseError(f"config key {key!r}: {exc}") from exc
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------- run


def _snapshot(args):
    skip = {"func", "config", "default_name", "verbose", "threads"}
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _input_digests(args):
    digests = {}
    for key in INPUT_KEYS:
        value = getattr(args, key, None)
        if not value:
            continue
        p = Path(value)
        if p.is_dir():
            for f in sorted(p.iterdir()):
                if f.is_file():
                    digests[str(f)] = _sha256(f)
        elif p.is_file():
            digests[str(p)] = _sha256(p)
    return digests


def execute(args, argv):
    out = Outputs(args.out, args.default_name)
    start = time.perf_counter()
    with threadpool_limits(limits=max(1, args.threads)):
        seeds = args.func(args, out) or {}
    elapsed = time.perf_counter() - start
    manifest = {
        "tool": "fullset",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "config": _snapshot(args),
        "seeds": seeds,
        "inputs": _input_digests(args),
        "outputs": {p.name: _sha256(p) for p in out.written},
        "timings": {"wall_seconds": elapsed},
    }
    (out.dir / MANIFEST).write_text(_dumps(manifest))
    return out


def rerun(args, parser):
    man_path = _need_file(args.manifest, "--manifest")
    try:
        manifest = json.loads(man_path.read_text())
        command, config = manifest["command"], manifest["config"]
    except (ValueError, KeyError) as exc:
        raise ParseError(f"malformed manifest {man_path}: {exc}") from exc
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).is_file():
            raise InputError(f"input {path} recorded in the manifest is missing")
        if _sha256(path) != digest:
            raise InputError(f"input {path} changed since the recorded run")
    base = [command] + ([config["kind"]] if command == "analyze" else [])
    ns = parser.parse_args(base)
    for key, value in config.items():
        setattr(ns, key, tuple(value) if key == "plateau" else value)
    if args.out:
        old = Path(config["out"])
        ns.out = str(Path(args.out) / old.name) if old.suffix else args.out
    ns.threads = args.threads
    ns.verbose = False
    return execute(ns, ["rerun", "--manifest", str(man_path)] + (["--out", args.out] if args.out else []))


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parse_args(argv, parser)
        logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "rerun":
            rerun(args, parser)
        else:
            execute(args, argv)
    except FullSetError as exc:
        print(f"fullset: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"fullset: error: {exc}", file=sys.stderr)
        return InputError.exit_code
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
