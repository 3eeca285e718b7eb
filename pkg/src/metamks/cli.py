"""Command-line entry point: ``metamks <subcommand> [options]``.

Every subcommand writes its artifacts atomically and drops a JSON manifest
next to the primary output (``<output>.manifest.json``) recording the
resolved configuration, seeds, input and output hashes, and timings.
"""

import argparse
import configparser
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import active, geometry, gpr, homogenize, io, pipeline, plotting, statistics
from .errors import (
    ArgumentError,
    DependencyError,
    FormatError,
    GenerationStallError,
    MetamksError,
    NumericalError,
    StateError,
)

log = logging.getLogger("metamks")

EXIT_OK, EXIT_ARGUMENT, EXIT_FORMAT, EXIT_NUMERICAL, EXIT_DEPENDENCY = 0, 2, 3, 4, 5

PRODUCER = {
    "cells": "gen (or import)",
    "labels": "label (or import --format csv-labels)",
    "features": "features",
    "pca": "pca",
    "model": "train",
    "input": "the command that produced it",
}


# -- helpers -----------------------------------------------------------------


def _require(path, kind):
    p = Path(path)
    if not p.is_file():
        raise DependencyError(f"missing {kind} artifact {p}; run `metamks {PRODUCER.get(kind, kind)}` first")
    return p


def _manifest_path(output):
    return Path(f"{output}.manifest.json")


def _config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(output, command, config, seed, inputs, outputs, started):
    manifest = {
        "command": command,
        "config": config,
        "config_hash": _config_hash(config),
        "seed": seed,
        "inputs": {str(p): io.sha256_file(p) for p in inputs},
        "outputs": {str(p): io.sha256_file(p) for p in outputs},
        "timings": {"wall_seconds": round(time.perf_counter() - started, 3)},
    }
    io.atomic_write(_manifest_path(output), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _args_config(args):
    skip = {"func", "config", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _stage_seed(args, stage):
    return pipeline.derive_seed(args.seed, stage)


def _load_labels(path):
    table = io.read_labels(_require(path, "labels"))
    order = np.argsort(table["index"], kind="stable")
    if not np.array_equal(table["index"][order], np.arange(len(order))):
        raise FormatError(f"{path}: label indices must cover 0..N-1 exactly once")
    return {k: v[order] for k, v in table.items()}


def _kept_path(labels_path):
    p = Path(labels_path)
    return p.with_name(p.stem + ".kept.csv")


def _kept_indices(labels_path, labels):
    kp = _kept_path(labels_path)
    if kp.is_file():
        return io.read_index_list(kp)
    return np.flatnonzero(np.isfinite(labels["normalized_c11"]))


def _load_scores(path):
    arrays, meta = io.read_mksm(_require(path, "pca"))
    if "scores" not in arrays:
        raise FormatError(f"{path}: no 'scores' array; expected a `metamks pca` output")
    return arrays, meta


def _optimizer(args):
    return gpr.OptimizerConfig(
        n_restarts=args.restarts,
        iterations=args.iters,
        learning_rate=args.learning_rate,
        max_exact_n=args.max_exact_n,
        prefit_subsample=args.prefit_subsample,
    )


# -- subcommands ---------------------------------------------------------------


def cmd_gen(args):
    t0 = time.perf_counter()
    cfg = geometry.GenConfig(tile_size=args.tile_size, correlation_length=args.correlation_length).validate()
    seed = _stage_seed(args, "gen")
    cells = geometry.generate_dataset(args.count, seed, cfg)
    io.write_mksd(args.out, np.asarray(cells))
    write_manifest(args.out, "gen", _args_config(args), seed, [], [args.out], t0)
    print(f"wrote {args.count} cells to {args.out}")


def cmd_label(args):
    t0 = time.perf_counter()
    cells = io.read_mksd(_require(args.cells, "cells"))
    material = homogenize.Material(args.youngs_modulus, args.poissons_ratio)
    res = homogenize.label_dataset(
        list(cells), material, tol=args.tol, filter_threshold=args.filter_threshold, beta=args.beta, jobs=args.jobs
    )
    io.write_labels(args.out, res)
    kept = _kept_path(args.out)
    io.write_index_list(kept, res.kept)
    write_manifest(args.out, "label", _args_config(args), None, [args.cells], [args.out, kept], t0)
    print(f"labeled {len(res.labels)} cells: kept {len(res.kept)}, dropped {len(res.dropped)}, failures {len(res.failures)}")


def cmd_features(args):
    t0 = time.perf_counter()
    cells = io.read_mksd(_require(args.cells, "cells"))
    x, rescale = statistics.featurize(list(cells), args.combination)
    pairs = statistics.combination_pairs(args.combination)
    arrays = {"features": x}
    for p in pairs:
        arrays[f"rescale_mean_{p[0]}{p[1]}"] = np.array([rescale.means[p]])
        arrays[f"rescale_std_{p[0]}{p[1]}"] = np.array([rescale.stds[p]])
    meta = {"combination": statistics.COMBINATION_LABELS[args.combination], "pairs": [list(p) for p in pairs]}
    io.write_mksm(args.out, arrays, meta)
    write_manifest(args.out, "features", _args_config(args), None, [args.cells], [args.out], t0)
    print(f"wrote feature matrix {x.shape[0]}x{x.shape[1]} to {args.out}")


def cmd_pca(args):
    t0 = time.perf_counter()
    arrays, meta = io.read_mksm(_require(args.features, "features"))
    if "features" not in arrays:
        raise FormatError(f"{args.features}: no 'features' array")
    seed = _stage_seed(args, "pca")
    model = statistics.pca_fit(arrays["features"], args.n_components, seed=seed)
    scores = statistics.pca_transform(model, arrays["features"])
    out = {"mean": model.mean, "components": model.components, "explained_variance": model.explained_variance, "scores": scores}
    io.write_mksm(args.out, out, {"combination": meta.get("combination"), "features_sha256": io.sha256_file(args.features)})
    write_manifest(args.out, "pca", _args_config(args), seed, [args.features], [args.out], t0)
    print(f"wrote {args.n_components} components and scores to {args.out}")


def _training_rows(args):
    labels = _load_labels(args.labels)
    arrays, _ = _load_scores(args.pca)
    scores = arrays["scores"]
    if scores.shape[0] != len(labels["normalized_c11"]):
        raise DependencyError(
            f"{args.pca} has {scores.shape[0]} rows but {args.labels} has {len(labels['normalized_c11'])}; "
            "they must come from the same cells"
        )
    kept = _kept_indices(args.labels, labels)
    return scores[kept], labels["normalized_c11"][kept], kept


def cmd_train(args):
    t0 = time.perf_counter()
    scores, y, kept = _training_rows(args)
    seed = _stage_seed(args, "train")
    train_idx, test_idx = pipeline.split_indices(len(y), args.split, pipeline.derive_seed(args.seed, "split"))
    k = args.n_components
    x_train, _, scaler = statistics.standardize_scores(scores[train_idx, :k])
    model, report = gpr.fit(x_train, y[train_idx], seed=seed, config=_optimizer(args))
    arrays = {
        "theta": model.theta,
        "x": model.x,
        "y": y[train_idx],
        "y_shift": np.array([model.y_shift]),
        "jitter": np.array([model.jitter]),
        "scaler_mean": scaler.mean,
        "scaler_std": scaler.std,
        "train_rows": kept[train_idx].astype(np.float64),
        "test_rows": kept[test_idx].astype(np.float64),
    }
    meta = {
        "n_components": k,
        "nlml": report.nlml,
        "best_restart": report.best_restart,
        "upstream": {"pca": io.sha256_file(args.pca), "labels": io.sha256_file(args.labels)},
    }
    io.write_mksm(args.out, arrays, meta)
    write_manifest(args.out, "train", _args_config(args), seed, [args.pca, args.labels], [args.out], t0)
    print(f"trained on {len(train_idx)} rows (NLML {report.nlml:.4f}); held out {len(test_idx)}")


def load_model(path):
    """Rebuild a GprModel from its MKSM container and verify the refactorized Gram matrix."""
    arrays, meta = io.read_mksm(_require(path, "model"))
    need = {"theta", "x", "y", "y_shift", "jitter"}
    if not need <= set(arrays):
        raise FormatError(f"{path}: missing arrays {sorted(need - set(arrays))}")
    model = gpr.build_model(arrays["theta"], arrays["x"], arrays["y"], jitter=float(arrays["jitter"][0]), y_shift=float(arrays["y_shift"][0]))
    k = gpr.gram(model.x, model.theta) + model.jitter * np.eye(len(model.x))
    if np.linalg.norm(model.lower @ model.lower.T - k) > 1e-8 * np.linalg.norm(k):
        raise NumericalError(f"{path}: stored model does not refactorize consistently")
    return model, arrays, meta


def cmd_eval(args):
    t0 = time.perf_counter()
    model, arrays, meta = load_model(args.model)
    upstream = meta.get("upstream", {})
    for kind, path in (("pca", args.pca), ("labels", args.labels)):
        digest = io.sha256_file(_require(path, kind))
        if upstream.get(kind) != digest:
            raise DependencyError(f"{path} does not match the {kind} artifact the model was trained on (sha256 mismatch)")
    labels = _load_labels(args.labels)
    scores = _load_scores(args.pca)[0]["scores"]
    rows = arrays["test_rows" if args.on == "test" else "train_rows"].astype(np.int64)
    k = int(meta["n_components"])
    scaler = statistics.Scaler(arrays["scaler_mean"], arrays["scaler_std"])
    pred, var = gpr.predict(model, scaler.transform(scores[rows, :k]))
    y = labels["normalized_c11"][rows]
    mae, r2, nmae = gpr.metrics(y, pred)
    io.write_csv(args.out, ("index", "y_true", "y_pred", "pred_std"), zip(rows, y, pred, np.sqrt(var)))
    summary = {"n": int(len(rows)), "mae": mae, "r2": r2, "nmae": nmae, "on": args.on}
    io.atomic_write(Path(f"{args.out}.metrics.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(args.out, "eval", _args_config(args), None, [args.model, args.pca, args.labels], [args.out], t0)
    print(f"{args.on}: n={len(rows)} MAE={mae:.5f} R2={r2:.4f} nMAE={nmae:.5f}")


def cmd_sweep(args):
    t0 = time.perf_counter()
    cells = io.read_mksd(_require(args.cells, "cells"))
    labels = _load_labels(args.labels)
    kept = _kept_indices(args.labels, labels)
    combos = [c.strip() for c in args.combinations.split(",") if c.strip()]
    components = _int_list(args.components)
    report = pipeline.sweep(
        [cells[i] for i in kept],
        labels["normalized_c11"][kept],
        combos,
        components,
        train_fraction=args.split,
        seed=args.seed,
        config=_optimizer(args),
    )
    io.write_csv(args.out, ("combination", "n_components", "mae", "r2", "nmae", "error"), [
        (r.combination, r.n_components, r.mae, r.r2, r.nmae, r.error) for r in report.rows
    ])
    write_manifest(args.out, "sweep", _args_config(args), args.seed, [args.cells, args.labels], [args.out], t0)
    for combo in combos:
        maes = [r.mae for r in report.rows if r.combination == statistics.COMBINATION_LABELS[combo.lower().replace("+", "")]]
        trend = all(b <= a for a, b in zip(maes[:6], maes[1:6]))
        print(f"{combo}: MAE by PC count {np.round(maes, 5).tolist()} (non-increasing 1..6: {trend})")


def cmd_al(args):
    t0 = time.perf_counter()
    scores, y, kept = _training_rows(args)
    x, _, _ = statistics.standardize_scores(scores[:, : args.n_components])
    rule = active.StopRule(args.window, args.epsilon, args.budget)
    seed = _stage_seed(args, "al")
    agg = active.repeat_runs(
        args.reps, seed, x, labels=y, rule=rule, gpr_config=_optimizer(args), n_init=args.n_init, jobs=args.jobs
    )
    rows = []
    for c in agg.curves:
        for r in c.rows:
            last = r.iteration == len(c.rows) - 1
            rows.append((c.rep, r.iteration, r.n_labeled, r.pool_mae, r.max_pool_std,
                         -1 if r.chosen_index < 0 else int(kept[r.chosen_index]), int(last and c.stopped)))
    io.write_csv(args.out, io.CURVE_FIELDS, rows)
    mean_path = Path(args.out).with_name(Path(args.out).stem + ".mean.csv")
    io.write_csv(mean_path, ("iter", "n_labeled", "pool_mae_mean", "pool_mae_std", "max_pool_std_mean", "max_pool_std_std", "padded_reps"), zip(
        agg.iteration, agg.n_labeled, agg.mae_mean, agg.mae_std, agg.std_mean, agg.std_std, agg.padded.sum(axis=0)
    ))
    write_manifest(args.out, "al", _args_config(args), seed, [args.pca, args.labels], [args.out, mean_path], t0)
    stopped = sum(c.stopped for c in agg.curves)
    print(f"{stopped}/{args.reps} runs stopped by the window rule; mean final pool MAE {agg.mae_mean[-1]:.5f}")


def cmd_import(args):
    t0 = time.perf_counter()
    src = _require(args.input, "input")
    outputs = []
    if args.format == "npy-cells":
        try:
            arr = np.load(src, allow_pickle=False)
        except ValueError as exc:
            raise FormatError(f"{src}: not a readable NPY array ({exc})") from None
        if arr.dtype != np.uint8:
            raise FormatError(f"{src}: expected uint8 cells, got {arr.dtype}")
        cells = io.validate_cells(arr, (args.size, args.size))
        io.write_mksd(args.out, cells)
        outputs.append(args.out)
        msg = f"imported {len(cells)} cells"
    elif args.format == "mksd":
        cells = io.validate_cells(io.read_mksd(src), (args.size, args.size))
        io.write_mksd(args.out, cells)
        outputs.append(args.out)
        msg = f"imported {len(cells)} cells"
    elif args.format == "csv-labels":
        fields, rows = io.read_csv(src)
        col = args.label_column
        if col not in fields:
            raise FormatError(f"{src}: no column {col!r} (have {fields})", offset=0)
        j = fields.index(col)
        try:
            values = np.array([float(r[j]) for r in rows])
        except ValueError as exc:
            raise FormatError(f"{src}: {exc}") from None
        values = io.validate_labels(values, low=0.0, high=args.max_label)
        n = len(values)
        res = homogenize.LabelResult(values, [True] * n, [0] * n, [0.0] * n, list(range(n)), [], [])
        io.write_labels(args.out, res)
        kept = np.flatnonzero(values >= args.filter_threshold) if args.filter_threshold > 0 else np.arange(n)
        io.write_index_list(_kept_path(args.out), kept)
        outputs += [args.out, _kept_path(args.out)]
        msg = f"imported {n} labels"
    else:  # argparse restricts choices; kept for direct calls
        raise ArgumentError(f"unknown import format {args.format!r}")
    write_manifest(args.out, "import", _args_config(args), None, [src], outputs, t0)
    print(f"{msg} into {args.out}")


def _read_columns(path, columns):
    fields, rows = io.read_csv(_require(path, "input"))
    missing = [c for c in columns if c not in fields]
    if missing:
        raise FormatError(f"{path}: missing columns {missing}", offset=0)
    idx = [fields.index(c) for c in columns]
    try:
        return [np.array([float(r[i]) for r in rows]) for i in idx]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def cmd_plot(args):
    t0 = time.perf_counter()
    out = Path(args.out)
    backing = out.with_name(out.stem + ".data.csv")
    inputs = [args.input]
    if args.kind == "pc-scatter":
        arrays, _ = _load_scores(args.input)
        pc1, pc2 = arrays["scores"][:, 0], arrays["scores"][:, 1]
        if args.color == "volume-fraction":
            cells = io.read_mksd(_require(args.cells, "cells"))
            color = np.array([geometry.volume_fraction(c) for c in cells])
            inputs.append(args.cells)
        elif args.color == "c11":
            color = _load_labels(args.labels)["normalized_c11"]
            inputs.append(args.labels)
        else:
            color = np.zeros(len(pc1))
        if len(color) != len(pc1):
            raise DependencyError("color source and scores have different row counts")
        io.write_csv(backing, ("pc1", "pc2", "color_value"), zip(pc1, pc2, color))
        svg = plotting.scatter_svg(pc1, pc2, color, f"PC scores colored by {args.color}", "PC1 (raw score)", "PC2 (raw score)")
    elif args.kind == "parity":
        y_true, y_pred = _read_columns(args.input, ("y_true", "y_pred"))
        io.write_csv(backing, ("y_true", "y_pred"), zip(y_true, y_pred))
        svg = plotting.scatter_svg(y_true, y_pred, None, "Parity", "actual C11/E", "predicted C11/E", diagonal=True)
    elif args.kind in ("learning-curve", "std-curve"):
        col = "pool_mae" if args.kind == "learning-curve" else "max_pool_std"
        it, nlab, val = _read_columns(args.input, ("iter", "n_labeled", col))
        iters = np.unique(it)
        mean = np.array([val[it == i].mean() for i in iters])
        spread = np.array([val[it == i].std() for i in iters])
        n_mean = np.array([nlab[it == i].mean() for i in iters])
        io.write_csv(backing, ("n_labeled", f"{col}_mean", f"{col}_std"), zip(n_mean, mean, spread))
        ylabel = "pool MAE" if col == "pool_mae" else "max pool std"
        svg = plotting.line_svg(n_mean, mean, spread, ylabel + " vs labeled observations", "labeled observations", ylabel)
    else:
        raise ArgumentError(f"unknown plot kind {args.kind!r}")
    io.atomic_write(out, svg)
    write_manifest(args.out, "plot", _args_config(args), None, inputs, [out, backing], t0)
    print(f"wrote {out} and {backing}")


# -- parser ------------------------------------------------------------------


def _int_list(text):
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ArgumentError("empty integer list")
    return out


def _add_gpr_flags(p):
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--max-exact-n", type=int, default=gpr.DEFAULT_MAX_EXACT_N)
    p.add_argument(
        "--prefit-subsample",
        type=int,
        default=0,
        help="run the restarts on this many seeded rows, then refine on all rows (0 = off)",
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="metamks", description="Metamaterial structure-property pipeline")
    parser.add_argument("--seed", type=int, default=0, help="global seed; stage seeds are derived from it")
    parser.add_argument("--config", help="key=value config file with one section per subcommand")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        p.set_defaults(func=func)
        return p

    p = add("gen", cmd_gen, "generate unit cells (MKSD)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--tile-size", type=int, default=48)
    p.add_argument("--correlation-length", type=float, default=8.0)
    p.add_argument("--out", default="cells.mksd")

    p = add("label", cmd_label, "homogenize cells into normalized C11 labels")
    p.add_argument("--cells", default="cells.mksd")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--beta", type=float, default=1e-2)
    p.add_argument("--filter-threshold", type=float, default=0.01)
    p.add_argument("--youngs-modulus", type=float, default=1.0)
    p.add_argument("--poissons-ratio", type=float, default=0.3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="labels.csv")

    p = add("features", cmd_features, "2-point statistics feature matrix (MKSM)")
    p.add_argument("--cells", default="cells.mksd")
    p.add_argument("--combination", choices=("s", "si", "six"), default="si")
    p.add_argument("--out", default="features.mksm")

    p = add("pca", cmd_pca, "fit PCA and write scores (MKSM)")
    p.add_argument("--features", default="features.mksm")
    p.add_argument("--n-components", type=int, default=8)
    p.add_argument("--out", default="pca.mksm")

    p = add("train", cmd_train, "fit a GP on a seeded train split")
    p.add_argument("--pca", default="pca.mksm")
    p.add_argument("--labels", default="labels.csv")
    p.add_argument("--n-components", type=int, default=6)
    p.add_argument("--split", type=float, default=0.8)
    _add_gpr_flags(p)
    p.add_argument("--out", default="model.mksm")

    p = add("eval", cmd_eval, "evaluate a trained model; writes parity CSV")
    p.add_argument("--model", default="model.mksm")
    p.add_argument("--pca", default="pca.mksm")
    p.add_argument("--labels", default="labels.csv")
    p.add_argument("--on", choices=("test", "train"), default="test")
    p.add_argument("--out", default="parity.csv")

    p = add("sweep", cmd_sweep, "MAE table over combinations and PC counts")
    p.add_argument("--cells", default="cells.mksd")
    p.add_argument("--labels", default="labels.csv")
    p.add_argument("--combinations", default="s,si,six")
    p.add_argument("--components", default="1-8")
    p.add_argument("--split", type=float, default=0.8)
    _add_gpr_flags(p)
    p.add_argument("--out", default="sweep.csv")

    p = add("al", cmd_al, "active-learning repetitions; writes learning curves")
    p.add_argument("--pca", default="pca.mksm")
    p.add_argument("--labels", default="labels.csv")
    p.add_argument("--n-components", type=int, default=6)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--budget", type=int, default=600)
    p.add_argument("--reps", type=int, default=25)
    p.add_argument("--jobs", type=int, default=1)
    _add_gpr_flags(p)
    p.add_argument("--out", default="curves.csv")

    p = add("import", cmd_import, "convert external cells/labels to native artifacts")
    p.add_argument("--format", choices=("npy-cells", "csv-labels", "mksd"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--label-column", default="normalized_c11")
    p.add_argument("--max-label", type=float, default=None)
    p.add_argument("--filter-threshold", type=float, default=0.01)
    p.add_argument("--out", required=True)

    p = add("plot", cmd_plot, "SVG chart plus its backing CSV")
    p.add_argument("--kind", required=True, help="pc-scatter, parity, learning-curve or std-curve")
    p.add_argument("--input", required=True)
    p.add_argument("--color", choices=("volume-fraction", "c11", "none"), default="volume-fraction")
    p.add_argument("--cells", default="cells.mksd")
    p.add_argument("--labels", default="labels.csv")
    p.add_argument("--out", required=True)
    return parser, sub


def _apply_config(parser, sub, argv):
    """Feed config-file values in as defaults so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("--seed")
    pre.add_argument("-v", "--verbose", action="store_true")
    pre.add_argument("command", nargs="?")
    pre, _ = pre.parse_known_args(argv)
    if not pre.config or pre.command not in sub.choices:
        return
    cp = configparser.ConfigParser()
    try:
        if not cp.read(pre.config):
            raise DependencyError(f"config file {pre.config} not found")
    except configparser.Error as exc:
        raise FormatError(f"{pre.config}: {exc}") from None
    subparser = sub.choices[pre.command]
    sub_actions = {a.dest: a for a in subparser._actions}
    top_actions = {a.dest: a for a in parser._actions}
    for section in ("global", pre.command):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section, raw=True):
            dest = key.replace("-", "_")
            # [global] may carry top-level options or shared per-command ones
            if section == "global" and dest in top_actions:
                target, action = parser, top_actions[dest]
            elif dest in sub_actions and dest != "seed":
                target, action = subparser, sub_actions[dest]
            elif section == "global":
                continue  # a shared key that this subcommand does not take
            else:
                raise ArgumentError(f"{pre.config}: unknown key {key!r} in section [{section}]")
            try:
                value = action.type(raw) if action.type else raw
            except (TypeError, ValueError) as exc:
                raise ArgumentError(f"{pre.config}: bad value for {key}: {exc}") from None
            if action.choices and value not in action.choices:
                raise ArgumentError(f"{pre.config}: {key} must be one of {sorted(action.choices)}")
            target.set_defaults(**{dest: value})
    # required flags satisfied by the config
    for action in subparser._actions:
        if action.required and action.dest in subparser._defaults:
            action.required = False


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, sub = build_parser()
    try:
        _apply_config(parser, sub, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors
        return EXIT_ARGUMENT if exc.code else EXIT_OK
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGUMENT
    except MetamksError as exc:
        return _report(exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except MetamksError as exc:
        return _report(exc)
    return EXIT_OK


def _report(exc):
    print(f"error: {exc}", file=sys.stderr)
    if isinstance(exc, ArgumentError):
        return EXIT_ARGUMENT
    if isinstance(exc, FormatError):
        return EXIT_FORMAT
    if isinstance(exc, DependencyError):
        return EXIT_DEPENDENCY
    if isinstance(exc, (NumericalError, GenerationStallError)):
        return EXIT_NUMERICAL
    if isinstance(exc, StateError):
        return EXIT_ARGUMENT
    return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
