"""Command-line interface: ``credreg {synth,features,experiment,train,predict}``.

Exit status is 0 on success, 2 for bad input or configuration and 3 when a
numerical routine fails. Every output file is written to a temporary sibling
and renamed into place, so a failed run leaves no partial files behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from ._files import atomic_write_text
from .config import ENV_PREFIX, RUN_KEYS, RunConfig, build_run_config, env_values, read_kv
from .errors import ConfigError, CredregError, InputError, RuntimeFailure
from .evaluation import experiment_to_json, predictions_csv, run_experiment
from .features import assemble_matrix, build_vectors, matrix_to_csv
from .ingest import (
    DEFAULT_SNAPSHOT,
    Dataset,
    DatasetView,
    filter_credulous,
    load_botometer,
    load_dataset,
    load_profiles,
    parse_timestamp,
)
from .regress import ModelSpec, fit, load_model, save_model
from .report import comparison_table, render
from .synth import SynthConfig, generate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3

log = logging.getLogger("credreg")

_SYNTH_KEYS = ("n_accounts", "credulous_fraction", "noise_std", "planted_weights", "intercept", "seed",
               "snapshot_time", "out")


def _load_view(cfg: RunConfig, view: DatasetView) -> Dataset:
    cfg.require_inputs()
    d = load_dataset(cfg.ground_truth, cfg.profiles, cfg.botometer, cfg.snapshot_time)
    return filter_credulous(d) if view is DatasetView.CREDULOUS_ONLY else d


def _single(values: tuple, what: str):
    if len(values) != 1:
        raise ConfigError(f"this command takes exactly one {what}")
    return values[0]


def _run_flags(args) -> dict:
    flags = {k: getattr(args, k, None) for k in RUN_KEYS}
    return {k: str(v) for k, v in flags.items() if v is not None}


def _run_config(args) -> RunConfig:
    return build_run_config(args.config, _run_flags(args))


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    values = read_kv(args.config) if args.config else {}
    if "out" in values and not Path(values["out"]).is_absolute():
        values["out"] = str(Path(args.config).resolve().parent / values["out"])
    values.update(env_values(_SYNTH_KEYS))
    values.update({k: str(getattr(args, k)) for k in _SYNTH_KEYS if getattr(args, k, None) is not None})
    out = Path(values.pop("out", "."))
    data = generate(SynthConfig.from_mapping(values))
    for name, text in data.files().items():
        atomic_write_text(out / name, text)
        log.info("wrote %s", out / name)
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = _run_config(args)
    view = _single(cfg.view, "view")
    d = _load_view(cfg, view)
    outputs = {}
    for fs in cfg.feature_sets:
        outputs[fs] = matrix_to_csv(assemble_matrix(d, fs))
    if cfg.out is None:
        for fs in cfg.feature_sets:
            sys.stdout.write(outputs[fs])
    elif len(cfg.feature_sets) == 1:
        atomic_write_text(cfg.out, outputs[cfg.feature_sets[0]])
    else:
        for fs in cfg.feature_sets:
            atomic_write_text(cfg.out / f"features_{fs.value}.csv", outputs[fs])
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _run_config(args)
    specs = cfg.specs()
    files: dict[Path, str] = {}
    shown = []
    for view in cfg.view:
        d = _load_view(cfg, view)
        log.info("%s view: %d accounts, %d-fold x %d repeats, seed %d", view.value, len(d), cfg.k,
                 cfg.repeats, cfg.seed)
        result = run_experiment(d, cfg.feature_sets, specs, k=cfg.k, repeats=cfg.repeats, seed=cfg.seed,
                                threads=cfg.threads, alpha=cfg.alpha, corrected=cfg.corrected,
                                keep_predictions=cfg.predictions, log=log.info)
        files[Path(f"results_{view.value}.json")] = experiment_to_json(result)
        for metric in cfg.metrics:
            table = comparison_table(result, metric)
            shown.append(render(table, "markdown"))
            files[Path(f"table_{view.value}_{metric}.md")] = render(table, "markdown")
            files[Path(f"table_{view.value}_{metric}.csv")] = render(table, "csv")
        if cfg.predictions:
            for (alg, fs), r in result.results.items():
                files[Path("predictions") / f"{view.value}_{alg}_{fs.value}.csv"] = predictions_csv(r)
    if cfg.out is not None:
        for rel, text in files.items():
            atomic_write_text(cfg.out / rel, text)
        log.info("wrote %d files to %s", len(files), cfg.out)
    sys.stdout.write("\n".join(shown))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    view = _single(cfg.view, "view")
    fs = _single(cfg.feature_sets, "feature set")
    alg = _single(cfg.algorithms, "algorithm")
    if cfg.out is None:
        raise ConfigError("train needs --out for the model file")
    spec = ModelSpec(alg, dict(cfg.hyperparameters.get(alg, {})))
    if spec.stochastic:
        spec = spec.with_seed(cfg.seed)
    model = fit(spec, assemble_matrix(_load_view(cfg, view), fs))
    save_model(model, cfg.out)
    log.info("wrote %s model on %s to %s", alg, fs.label, cfg.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    profiles = load_profiles(args.profiles)
    scores = {r.account_id: r for r in load_botometer(args.botometer)} if args.botometer else {}
    ids = [p.account_id for p in profiles]
    snapshot = DEFAULT_SNAPSHOT
    if args.snapshot_time:
        try:
            snapshot = parse_timestamp(args.snapshot_time)
        except ValueError:
            raise ConfigError(f"invalid snapshot time {args.snapshot_time!r}") from None
    X = build_vectors(profiles, [scores.get(i) for i in ids], ids, model.feature_set, snapshot)
    # clamped for display only; evaluation always sees raw model output
    pred = np.clip(model.predict_array(X), 0.0, 100.0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["account_id", "predicted_pct"])
    for i, p in zip(ids, pred):
        w.writerow([i, repr(float(p))])
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--ground-truth", dest="ground_truth", help="ground-truth CSV")
    p.add_argument("--profiles", help="profiles JSON-lines file")
    p.add_argument("--botometer", help="Botometer scores CSV")
    p.add_argument("--snapshot", dest="snapshot_time", help="dataset snapshot time (ISO-8601, UTC)")
    p.add_argument("--view", help="all, credulous, or both comma-separated")
    p.add_argument("--set", dest="feature_sets", help="classa, botometer, all (comma-separated)")
    p.add_argument("--out", help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="credreg",
        description="Predict the share of bot followees of human Twitter accounts.",
        epilog=f"Settings may also come from {ENV_PREFIX}<KEY> environment variables "
               "(file < environment < flags).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset (three input files)")
    p.add_argument("--config", help="flat key=value synth config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-accounts", dest="n_accounts", type=int)
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--credulous-fraction", dest="credulous_fraction", type=float)
    p.add_argument("--snapshot", dest="snapshot_time")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="dump feature matrices as CSV")
    _add_inputs(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("experiment", help="cross-validate algorithms and render comparison tables")
    _add_inputs(p)
    p.add_argument("--algorithms", help="comma-separated algorithm names, or 'all'")
    p.add_argument("--metric", dest="metrics", help="mae, rmse (comma-separated)")
    p.add_argument("--k", type=int, help="folds per repeat")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default: available CPUs)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--naive-ttest", dest="corrected", action="store_const", const="false",
                   help="use the uncorrected paired t-test")
    p.add_argument("--predictions", action="store_const", const="true",
                   help="also write per-fold predictions")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("train", help="fit one algorithm on a full dataset view and save the model")
    _add_inputs(p)
    p.add_argument("--algorithm", dest="algorithms", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict bot-followee percentages with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--botometer")
    p.add_argument("--snapshot", dest="snapshot_time")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except InputError as exc:
        log.error("error: %s", exc)
        return EXIT_INPUT
    except RuntimeFailure as exc:
        log.error("runtime failure: %s", exc)
        return EXIT_RUNTIME
    except OSError as exc:
        log.error("error: %s", exc)
        return EXIT_INPUT
    except CredregError as exc:
        log.error("error: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
