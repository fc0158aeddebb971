"""Command-line front end: ``rankad train|score|eval|cv|synth|grid``.

Every numeric option may also come from a JSON file given with
``--config``; options on the command line win.  Failures print the stage
that raised them and exit with status 1.  Usage errors exit with 2.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dataset_io import ANOMALOUS, NOMINAL, Dataset, EmptyFileError, export_grid, load_csv, load_model, save_model, write_csv
from .detector import scores
from .errors import DataError, RankADError
from .knn_stats import NeighborConfig, resampled_nominal_scores
from .model_selection import DEFAULT_C_GRID, CvGrid, cross_validate, default_sigma_grid
from .pipeline import RankADConfig, fit_rankad, stage
from .rank_trainer import decision_values
from .synth_eval import (
    BoxSpec,
    MetricReport,
    NAMED_DENSITIES,
    auc,
    empirical_false_alarm,
    named_density,
    sample_mixture,
    sample_uniform_box,
    time_scoring,
    uniformity_ks,
)

log = logging.getLogger("rankad")

# built-in values for options that can also come from --config
DEFAULTS = {
    "k": 20,
    "levels": 3,
    "rounds": 20,
    "alpha": 0.05,
    "alphas": "0.05,0.1,0.2",
    "cost": None,
    "sigma": None,
    "cap": None,
    "stat_mode": "mean_first_k",
    "eps": None,
    "tol": 1e-4,
    "max_passes": 1000,
    "seed": 42,
    "folds": 4,
    "bounds": "-18,18,-18,18",
    "resolution": 100,
    "has_header": False,
    "label_column": None,
}
_INT = ("k", "levels", "rounds", "cap", "max_passes", "seed", "folds", "resolution", "label_column")
_FLOAT = ("alpha", "cost", "sigma", "eps", "tol")
# cross-validation fits many models, so each gets a smaller solver budget
COMMAND_DEFAULTS = {"cv": {"max_passes": 100}}


class UsageError(Exception):
    pass


def _open_unit(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return value


def _bounds(text: str) -> list[list[float]]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise UsageError(f"--bounds takes xlo,xhi,ylo,yhi, got {text!r}")
    return [parts[:2], parts[2:]]


def _common(p: argparse.ArgumentParser, *names: str) -> None:
    # every option defaults to None so that --config values can fill the gaps
    spec = {
        "k": dict(type=int, help="neighbours in the K-NN statistic (default 20)"),
        "levels": dict(type=int, help="quantisation levels m (default 3)"),
        "rounds": dict(type=int, help="split-half resampling rounds (default 20)"),
        "alpha": dict(type=_open_unit, help="significance level in (0, 1) (default 0.05)"),
        "alphas": dict(help="comma-separated levels for false-alarm rates"),
        "cost": dict(type=float, help="rank-SVM cost C (cross-validated when omitted)"),
        "sigma": dict(type=float, help="RBF bandwidth (cross-validated when omitted)"),
        "cap": dict(type=int, help="maximum number of preference pairs (default 200 n)"),
        "stat_mode": dict(choices=["kth_distance", "mean_first_k", "eps_count"], help="K-NN statistic"),
        "eps": dict(type=float, help="ball radius for --stat-mode eps_count"),
        "tol": dict(type=float, help="KKT tolerance (default 1e-4)"),
        "max_passes": dict(type=int, help="solver sweeps (default 1000)"),
        "seed": dict(type=int, help="random seed (default 42)"),
        "folds": dict(type=int, help="cross-validation folds (default 4)"),
        "bounds": dict(help="grid extent xlo,xhi,ylo,yhi (default -18,18,-18,18)"),
        "resolution": dict(type=int, help="grid points per axis (default 100)"),
        "label_column": dict(type=int, help="0-based label column (negative counts from the end)"),
    }
    for name in names:
        if name == "has_header":
            p.add_argument("--has-header", action="store_true", default=None, help="skip the first row")
        else:
            p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, **spec[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankad", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="JSON file of option values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    train_opts = ("k", "levels", "rounds", "cost", "sigma", "cap", "stat_mode", "eps", "tol", "max_passes", "seed", "folds")
    p = sub.add_parser("train", help="fit a detector on nominal data and save it")
    p.add_argument("data", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True, help="model archive to write")
    _common(p, *train_opts, "has_header", "label_column")

    p = sub.add_parser("score", help="score test points with a saved detector")
    p.add_argument("model", type=Path)
    p.add_argument("data", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    _common(p, "alpha", "has_header", "label_column")

    p = sub.add_parser("eval", help="AUC, false-alarm rates and KS statistic on labelled data")
    p.add_argument("model", type=Path)
    p.add_argument("data", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    _common(p, "alphas", "has_header", "label_column")

    p = sub.add_parser("cv", help="cross-validate C and sigma")
    p.add_argument("data", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    p.add_argument("--c-grid", help="comma-separated costs (default 0.001..1000)")
    p.add_argument("--sigma-grid", help="comma-separated bandwidths (default 2^i times the mean K-NN distance)")
    _common(p, "k", "levels", "rounds", "stat_mode", "eps", "tol", "max_passes", "seed", "folds", "has_header", "label_column")

    p = sub.add_parser("synth", help="draw a synthetic data set")
    p.add_argument("density", choices=sorted(NAMED_DENSITIES))
    p.add_argument("-n", type=int, required=True, help="nominal draws")
    p.add_argument("--anomalies", type=int, default=0, help="uniform box draws appended with label 1")
    p.add_argument("-o", "--out", type=Path, required=True)
    _common(p, "seed", "bounds")

    p = sub.add_parser("grid", help="export decision values and scores on a planar grid")
    p.add_argument("model", type=Path)
    p.add_argument("-o", "--out", type=Path, required=True)
    _common(p, "bounds", "resolution")
    return parser


def _resolve(args: argparse.Namespace) -> argparse.Namespace:
    config = {}
    if args.config is not None:
        try:
            config = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError("config file must hold a JSON object")
        config = {key.replace("-", "_"): value for key, value in config.items()}
        unknown = sorted(set(config) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        try:
            for key, value in config.items():
                if value is not None and key in _INT + _FLOAT:
                    config[key] = int(value) if key in _INT else float(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value in config {args.config}: {exc}") from None
    defaults = dict(DEFAULTS, **COMMAND_DEFAULTS.get(args.command, {}))
    for key, default in defaults.items():
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, config.get(key, default))
    if getattr(args, "alpha", None) is not None and not 0 < float(args.alpha) < 1:
        raise UsageError(f"alpha must lie strictly between 0 and 1, got {args.alpha}")
    return args


def _read(args, path) -> Dataset:
    with stage("load data"):
        return load_csv(path, has_header=bool(args.has_header), label_column=args.label_column)


def cmd_train(args) -> int:
    data = _read(args, args.data)
    S = data.nominal()
    config = RankADConfig(
        k=args.k,
        m=args.levels,
        rounds=args.rounds,
        statistic_mode=args.stat_mode,
        eps=args.eps,
        C=args.cost,
        sigma=args.sigma,
        cap=args.cap,
        tol=args.tol,
        max_passes=args.max_passes,
        seed=args.seed,
        folds=args.folds,
    )
    detector, info = fit_rankad(S, config)
    with stage("save model"):
        save_model(detector, args.out, metadata=info.as_metadata(config))
    status = "converged" if info.converged else f"NOT converged (worst KKT residual {info.max_residual:.3g})"
    print(f"n={info.n} pairs={info.n_pairs} support_pairs={info.n_support} C={info.C:g} sigma={info.sigma:g} {status}")
    return 0


def cmd_score(args) -> int:
    with stage("load model"):
        detector = load_model(args.model)
    try:
        data = _read(args, args.data)
    except EmptyFileError:
        data = None
    rows = []
    if data is not None:
        with stage("score"):
            g = decision_values(detector.model, data.points)
            s = scores(detector, data.points, g=g)
        rows = [(repr(float(a)), repr(float(b)), "anomalous" if b <= args.alpha else "nominal") for a, b in zip(g, s)]
    with Path(args.out).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["g", "score", "verdict"])
        writer.writerows(rows)
    flagged = sum(r[2] == "anomalous" for r in rows)
    print(f"scored {len(rows)} points, {flagged} flagged at alpha={args.alpha:g}")
    return 0


def cmd_eval(args) -> int:
    with stage("load model"):
        detector = load_model(args.model)
    if args.label_column is None:
        args.label_column = -1
    data = _read(args, args.data)
    with stage("evaluate"):
        labels = data.labels
        if not np.any(labels == ANOMALOUS):
            raise DataError("no positive class: the test file has no anomalous rows")
        if not np.any(labels == NOMINAL):
            raise DataError("no negative class: the test file has no nominal rows")
        alphas = [float(a) for a in str(args.alphas).split(",")]
        s = scores(detector, data.points)
        report = MetricReport(
            auc=auc(s[labels == NOMINAL], s[labels == ANOMALOUS]),
            false_alarm=empirical_false_alarm(detector, data.nominal(), alphas),
            ks_statistic=uniformity_ks(s[labels == NOMINAL]),
            time_per_point=time_scoring(detector, data.points[: min(200, data.n)]),
            extra={"n_nominal": int(np.sum(labels == NOMINAL)), "n_anomalous": int(np.sum(labels == ANOMALOUS))},
        )
    Path(args.out).write_text(report.to_text())
    print(report.to_text(), end="")
    return 0


def cmd_cv(args) -> int:
    S = _read(args, args.data).nominal()
    with stage("nominal scores"):
        table = resampled_nominal_scores(
            S, NeighborConfig(k=args.k, statistic_mode=args.stat_mode, eps=args.eps), rounds=args.rounds, seed=args.seed
        )
    with stage("cross-validation"):
        c_grid = DEFAULT_C_GRID if args.c_grid is None else [float(c) for c in args.c_grid.split(",")]
        sigma_grid = (
            default_sigma_grid(S, args.k) if args.sigma_grid is None else [float(s) for s in args.sigma_grid.split(",")]
        )
        report = cross_validate(
            S,
            table,
            CvGrid(c_values=c_grid, sigma_values=sigma_grid, folds=args.folds),
            m=args.levels,
            seed=args.seed,
            tol=args.tol,
            max_passes=args.max_passes,
        )
    Path(args.out).write_text(report.to_text())
    print(f"best C={report.best_c:g} sigma={report.best_sigma:g} WPDL={report.best_loss:.4f}")
    return 0


def cmd_synth(args) -> int:
    with stage("synthesize"):
        spec = named_density(args.density)
        seq = np.random.SeedSequence(args.seed).spawn(2)
        points = sample_mixture(spec, args.n, seed=seq[0]).points
        labels = None
        if args.anomalies > 0:
            (xlo, xhi), (ylo, yhi) = _bounds(args.bounds)
            box = BoxSpec(((xlo, xhi), (ylo, yhi)))
            anomalies = sample_uniform_box(box, args.anomalies, seed=seq[1]).points
            points = np.vstack([points, anomalies])
            labels = np.r_[np.full(args.n, NOMINAL), np.full(args.anomalies, ANOMALOUS)]
        data = Dataset(points, labels)
    with stage("write data"):
        write_csv(data, args.out)
    print(f"wrote {data.n} rows to {args.out}")
    return 0


def cmd_grid(args) -> int:
    with stage("load model"):
        detector = load_model(args.model)
    with stage("grid export"):
        export_grid(detector, _bounds(args.bounds), args.resolution, args.out)
    print(f"wrote {args.resolution ** 2} grid rows to {args.out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "score": cmd_score,
    "eval": cmd_eval,
    "cv": cmd_cv,
    "synth": cmd_synth,
    "grid": cmd_grid,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = _resolve(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except RankADError as exc:
        where = getattr(exc, "stage", args.command)
        print(f"rankad {args.command}: error in {where}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"rankad {args.command}: error writing output: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
