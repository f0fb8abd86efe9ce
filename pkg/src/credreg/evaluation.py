"""Repeated k-fold cross-validation, error metrics and paired significance tests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import ConfigError, CredregError, EmptyInputError, PairingError, annotate
from .features import FeatureMatrix, FeatureSet, assemble_matrix
from .ingest import Dataset, DatasetView
from .numeric import RandomSource
from .regress import ALGORITHMS, ModelSpec, fit

METRICS = ("mae", "rmse")
BASELINE = "ZeroR"
RESULTS_FORMAT = "credreg-experiment"
RESULTS_FORMAT_VERSION = 1


# ---------------------------------------------------------------- metrics

@dataclass(frozen=True, eq=False)
class PredictionSet:
    y_real: np.ndarray
    y_pred: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.y_real, dtype=np.float64).reshape(-1)
        p = np.asarray(self.y_pred, dtype=np.float64).reshape(-1)
        if r.shape != p.shape:
            raise ValueError(f"{len(r)} real values but {len(p)} predictions")
        if len(r) == 0:
            raise EmptyInputError("a prediction set needs at least one pair")
        object.__setattr__(self, "y_real", r)
        object.__setattr__(self, "y_pred", p)

    @property
    def n(self) -> int:
        return len(self.y_real)


def mae(p: PredictionSet) -> float:
    return float(np.mean(np.abs(p.y_real - p.y_pred)))


def rmse(p: PredictionSet) -> float:
    diff = p.y_real - p.y_pred
    return float(np.sqrt(np.mean(diff * diff)))


# ---------------------------------------------------------------- fold plans

@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Test-row indices for every (repeat, fold); training rows are the complement."""

    n: int
    k: int
    repeats: int
    seed: int
    folds: tuple[tuple[np.ndarray, ...], ...]

    def test_indices(self, repeat: int, fold: int) -> np.ndarray:
        return self.folds[repeat][fold]

    def train_indices(self, repeat: int, fold: int) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.folds[repeat][fold]] = False
        return np.flatnonzero(mask)

    def splits(self) -> Iterable[tuple[int, int, np.ndarray, np.ndarray]]:
        for r in range(self.repeats):
            for f in range(self.k):
                yield r, f, self.train_indices(r, f), self.test_indices(r, f)

    @property
    def digest(self) -> str:
        h = hashlib.sha256(f"{self.n}/{self.k}/{self.repeats}".encode())
        for rep in self.folds:
            for fold in rep:
                h.update(np.ascontiguousarray(fold, dtype=np.int64).tobytes())
                h.update(b"|")
        return h.hexdigest()

    def __eq__(self, other):
        return isinstance(other, FoldPlan) and self.digest == other.digest

    def __hash__(self):
        return hash(self.digest)


def make_folds(n: int, k: int = 10, repeats: int = 10, seed: int = 0) -> FoldPlan:
    """Per repeat, shuffle ``range(n)`` and cut it into ``k`` folds whose sizes differ by at most one.

    The first ``n % k`` folds carry the extra row. Indices inside a fold are sorted.
    """
    if k < 2 or k > n:
        raise ConfigError(f"cannot make {k} folds from {n} rows (need 2 <= k <= n)")
    if repeats < 1:
        raise ConfigError(f"repeats must be at least 1, got {repeats}")
    src = RandomSource(seed).child("folds")
    plan = []
    for r in range(repeats):
        perm = src.child(r).permutation(n)
        plan.append(tuple(np.sort(part) for part in np.array_split(perm, k)))
    return FoldPlan(n, k, repeats, seed, tuple(plan))


# ---------------------------------------------------------------- cross-validation

@dataclass(frozen=True)
class FoldScore:
    repeat: int
    fold: int
    mae: float
    rmse: float
    n_train: int
    n_test: int

    def metric(self, name: str) -> float:
        return getattr(self, _metric(name))


@dataclass(frozen=True, eq=False)
class FoldPredictions:
    repeat: int
    fold: int
    ids: tuple[str, ...]
    y_real: np.ndarray
    y_pred: np.ndarray


@dataclass(frozen=True, eq=False)
class EvalResult:
    spec: ModelSpec
    feature_set: FeatureSet
    folds: tuple[FoldScore, ...]
    plan_digest: str
    predictions: tuple[FoldPredictions, ...] | None = None

    @property
    def algorithm(self) -> str:
        return self.spec.algorithm

    @property
    def mae(self) -> float:
        return float(np.mean([f.mae for f in self.folds]))

    @property
    def rmse(self) -> float:
        return float(np.mean([f.rmse for f in self.folds]))

    def score(self, metric: str) -> float:
        return getattr(self, _metric(metric))

    def per_fold(self, metric: str) -> np.ndarray:
        return np.array([f.metric(metric) for f in self.folds])


def _metric(name: str) -> str:
    key = str(name).lower()
    if key not in METRICS:
        raise ConfigError(f"unknown metric {name!r}; choose from {', '.join(METRICS)}")
    return key


def fold_seed(spec: ModelSpec, repeat: int, fold: int) -> int | None:
    """Seed handed to the fit on one fold; ``None`` for deterministic learners."""
    if spec.seed is None:
        return None
    return RandomSource(spec.seed).derive_seed("fold", repeat, fold)


def cross_validate(spec: ModelSpec, m: FeatureMatrix, plan: FoldPlan, *,
                   keep_predictions: bool = False) -> EvalResult:
    if plan.n != len(m):
        raise PairingError(f"fold plan covers {plan.n} rows but the matrix has {len(m)}")
    if spec.stochastic and spec.seed is None:
        raise ConfigError(f"{spec.algorithm} is stochastic and needs an explicit seed")
    scores, kept = [], []
    for r, f, train, test in plan.splits():
        try:
            model = fit(spec.with_seed(fold_seed(spec, r, f)), m.take(train))
            pred = model.predict_array(m.X[test])
        except CredregError as exc:
            raise annotate(exc, f"repeat {r}, fold {f}")
        ps = PredictionSet(m.targets[test], pred)
        scores.append(FoldScore(r, f, mae(ps), rmse(ps), len(train), len(test)))
        if keep_predictions:
            kept.append(FoldPredictions(r, f, tuple(m.ids[i] for i in test), ps.y_real, ps.y_pred))
    return EvalResult(spec, m.set, tuple(scores), plan.digest, tuple(kept) if keep_predictions else None)


# ---------------------------------------------------------------- paired t-test

@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    mean_difference: float
    significant_better: bool
    degenerate: bool
    alpha: float = 0.05
    corrected: bool = True


def paired_t_statistic(diffs, n_train: float, n_test: float, corrected: bool = True) -> tuple[float, int]:
    """t statistic and degrees of freedom for per-fold differences.

    With ``corrected`` the sample variance is scaled by ``1/J + n_test/n_train``
    (``J`` differences) instead of ``1/J``.
    """
    d = np.asarray(diffs, dtype=np.float64)
    J = len(d)
    if J < 2:
        raise PairingError("a paired t-test needs at least two folds")
    mean = float(np.mean(d))
    var = float(np.var(d, ddof=1))
    factor = 1.0 / J + (n_test / n_train if corrected else 0.0)
    if var == 0.0:
        t = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
    else:
        t = mean / math.sqrt(factor * var)
    return t, J - 1


def compare_folds(candidate: EvalResult, baseline: EvalResult) -> None:
    """Raise :class:`PairingError` unless both results come from the same fold plan."""
    if candidate.plan_digest != baseline.plan_digest:
        raise PairingError("results come from different fold plans")
    a = [(f.repeat, f.fold, f.n_train, f.n_test) for f in candidate.folds]
    b = [(f.repeat, f.fold, f.n_train, f.n_test) for f in baseline.folds]
    if a != b:
        raise PairingError("results cover different folds")


def corrected_paired_ttest(candidate: EvalResult, baseline: EvalResult, alpha: float = 0.05, *,
                           metric: str = "mae", corrected: bool = True) -> TestResult:
    """Two-sided paired t-test of ``baseline - candidate`` per-fold errors.

    ``significant_better`` means the null is rejected and the candidate has the
    lower mean error. Zero variance is flagged ``degenerate`` and decided by the
    sign of the mean difference alone.
    """
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    compare_folds(candidate, baseline)
    d = baseline.per_fold(metric) - candidate.per_fold(metric)
    n_train = float(np.mean([f.n_train for f in candidate.folds]))
    n_test = float(np.mean([f.n_test for f in candidate.folds]))
    t, df = paired_t_statistic(d, n_train, n_test, corrected)
    mean = float(np.mean(d))
    # constant differences up to rounding count as zero variance
    if float(np.std(d)) <= 1e-12 * float(np.max(np.abs(d))):
        t = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
        return TestResult(t, df, 1.0 if mean == 0.0 else 0.0, mean, mean > 0.0, True, alpha, corrected)
    p = float(2.0 * stats.t.sf(abs(t), df))
    return TestResult(t, df, p, mean, bool(p < alpha and mean > 0.0), False, alpha, corrected)


# ---------------------------------------------------------------- experiments

@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Every (algorithm, feature set) cell evaluated on one shared fold plan."""

    view: DatasetView
    k: int
    repeats: int
    seed: int
    alpha: float
    corrected: bool
    algorithms: tuple[str, ...]
    feature_sets: tuple[FeatureSet, ...]
    results: dict = field(default_factory=dict)   # (algorithm, FeatureSet) -> EvalResult
    tests: dict = field(default_factory=dict)     # (algorithm, FeatureSet, metric) -> TestResult

    def result(self, algorithm: str, fs: FeatureSet) -> EvalResult:
        return self.results[(algorithm, fs)]

    def test(self, algorithm: str, fs: FeatureSet, metric: str) -> TestResult:
        return self.tests[(algorithm, fs, _metric(metric))]


def default_threads() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def _ordered_specs(specs: Sequence[ModelSpec]) -> list[ModelSpec]:
    names = [s.algorithm for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError("each algorithm may appear only once in an experiment")
    out = list(specs)
    if BASELINE not in names:
        out.insert(0, ModelSpec(BASELINE))
    return sorted(out, key=lambda s: ALGORITHMS.index(s.algorithm))


def run_experiment(d: Dataset, feature_sets: Sequence[FeatureSet], specs: Sequence[ModelSpec], *,
                   k: int = 10, repeats: int = 10, seed: int = 0, threads: int = 1,
                   alpha: float = 0.05, corrected: bool = True, keep_predictions: bool = False,
                   log: Callable[[str], None] | None = None) -> ExperimentResult:
    """Cross-validate every spec on every feature set and test each cell against ZeroR.

    ZeroR is added when absent. Stochastic specs without a seed get one derived
    from ``seed`` and the algorithm name, so cells never share a random stream.
    """
    if not feature_sets:
        raise ConfigError("no feature sets requested")
    if len(set(feature_sets)) != len(feature_sets):
        raise ConfigError("a feature set is listed twice")
    if len(d) == 0:
        raise EmptyInputError("the dataset is empty")
    specs = _ordered_specs(specs)
    master = RandomSource(seed)
    specs = [s.with_seed(master.derive_seed("model", s.algorithm)) if s.stochastic and s.seed is None else s
             for s in specs]
    plan = make_folds(len(d), k, repeats, seed)
    matrices = {fs: assemble_matrix(d, fs) for fs in feature_sets}
    cells = [(s, fs) for fs in feature_sets for s in specs]

    def run(cell):
        spec, fs = cell
        try:
            res = cross_validate(spec, matrices[fs], plan, keep_predictions=keep_predictions)
        except CredregError as exc:
            raise annotate(exc, f"{spec.algorithm} on {fs.label}")
        if log is not None:
            log(f"{spec.algorithm:<28} {fs.label:<12} MAE {res.mae:.4f}  RMSE {res.rmse:.4f}")
        return res

    results = {}
    if threads <= 1:
        for cell in cells:
            results[(cell[0].algorithm, cell[1])] = run(cell)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(run, cell): cell for cell in cells}
            done, pending = wait(futures, return_when=FIRST_EXCEPTION)
            for fut in pending:
                fut.cancel()
            for fut in futures:
                if fut in done and fut.exception() is not None:
                    raise fut.exception()
            for fut, (spec, fs) in futures.items():
                results[(spec.algorithm, fs)] = fut.result()

    tests = {}
    for spec, fs in cells:
        base = results[(BASELINE, fs)]
        for metric in METRICS:
            tests[(spec.algorithm, fs, metric)] = corrected_paired_ttest(
                results[(spec.algorithm, fs)], base, alpha, metric=metric, corrected=corrected)
    return ExperimentResult(d.view, k, repeats, seed, alpha, corrected,
                            tuple(s.algorithm for s in specs), tuple(feature_sets), results, tests)


# ---------------------------------------------------------------- serialization

def _fold_dict(f: FoldScore) -> dict:
    return {"repeat": f.repeat, "fold": f.fold, "mae": f.mae, "rmse": f.rmse,
            "n_train": f.n_train, "n_test": f.n_test}


def _test_dict(t: TestResult) -> dict:
    def num(v):
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    return {"t_statistic": num(t.t_statistic), "degrees_of_freedom": t.degrees_of_freedom,
            "p_value": t.p_value, "mean_difference": t.mean_difference,
            "significant_better": t.significant_better, "degenerate": t.degenerate,
            "alpha": t.alpha, "corrected": t.corrected}


def _test_from(d: dict) -> TestResult:
    return TestResult(float(d["t_statistic"]), int(d["degrees_of_freedom"]), float(d["p_value"]),
                      float(d["mean_difference"]), bool(d["significant_better"]), bool(d["degenerate"]),
                      float(d["alpha"]), bool(d["corrected"]))


def experiment_to_json(x: ExperimentResult) -> str:
    cells = []
    for fs in x.feature_sets:
        for alg in x.algorithms:
            r = x.results[(alg, fs)]
            cells.append({
                "algorithm": alg,
                "feature_set": fs.value,
                "spec": r.spec.to_dict(),
                "mae": r.mae,
                "rmse": r.rmse,
                "tests": {m: _test_dict(x.tests[(alg, fs, m)]) for m in METRICS},
                "folds": [_fold_dict(f) for f in r.folds],
            })
    doc = {
        "format": RESULTS_FORMAT,
        "version": RESULTS_FORMAT_VERSION,
        "view": x.view.value,
        "k": x.k,
        "repeats": x.repeats,
        "seed": x.seed,
        "alpha": x.alpha,
        "corrected": x.corrected,
        "algorithms": list(x.algorithms),
        "feature_sets": [fs.value for fs in x.feature_sets],
        "plan_digest": next(iter(x.results.values())).plan_digest if x.results else None,
        "cells": cells,
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def experiment_from_json(text: str) -> ExperimentResult:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"results file is not valid JSON: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != RESULTS_FORMAT:
        raise ConfigError("not a credreg results file")
    if doc.get("version") != RESULTS_FORMAT_VERSION:
        raise ConfigError(f"results format version {doc.get('version')!r} is not supported")
    sets = tuple(FeatureSet(v) for v in doc["feature_sets"])
    results, tests = {}, {}
    for c in doc["cells"]:
        fs = FeatureSet(c["feature_set"])
        folds = tuple(FoldScore(**f) for f in c["folds"])
        results[(c["algorithm"], fs)] = EvalResult(ModelSpec.from_dict(c["spec"]), fs, folds, doc["plan_digest"])
        for m in METRICS:
            tests[(c["algorithm"], fs, m)] = _test_from(c["tests"][m])
    return ExperimentResult(DatasetView(doc["view"]), doc["k"], doc["repeats"], doc["seed"], doc["alpha"],
                            doc["corrected"], tuple(doc["algorithms"]), sets, results, tests)


def predictions_csv(r: EvalResult) -> str:
    if r.predictions is None:
        raise ConfigError("this result was computed without keeping predictions")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["repeat", "fold", "account_id", "y_real", "y_pred"])
    for fp in r.predictions:
        for i, real, pred in zip(fp.ids, fp.y_real, fp.y_pred):
            w.writerow([fp.repeat, fp.fold, i, repr(float(real)), repr(float(pred))])
    return buf.getvalue()
