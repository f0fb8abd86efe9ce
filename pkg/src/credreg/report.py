"""Comparison tables: algorithms by feature set, starred and bolded."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from types import MappingProxyType
from typing import Mapping

from .errors import ConfigError, EmptyInputError, ParseError
from .evaluation import BASELINE, METRICS, ExperimentResult
from .features import FeatureSet
from .ingest import DatasetView

CSV_COLUMNS = ("algorithm", "feature_set", "score", "starred", "bold")
FORMATS = ("markdown", "csv")

_VIEW_TITLES = {DatasetView.ALL_HUMANS: "all human-operated accounts",
                DatasetView.CREDULOUS_ONLY: "credulous users"}


def format_score(x: float) -> str:
    """Two decimals, halves rounded away from zero on the shortest decimal form of ``x``."""
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class Cell:
    score: float
    starred: bool = False


@dataclass(frozen=True, eq=False)
class ComparisonTable:
    """One metric over a grid of algorithms (rows) and feature sets (columns).

    Rows may name algorithms this package does not implement, so published
    tables can be loaded as they are. The baseline row is always kept first.
    """

    metric: str
    view: DatasetView
    algorithms: tuple[str, ...]
    feature_sets: tuple[FeatureSet, ...]
    cells: Mapping[tuple[str, FeatureSet], Cell] = field(default_factory=dict)
    baseline: str = BASELINE

    def __post_init__(self):
        metric = str(self.metric).upper()
        if metric.lower() not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        object.__setattr__(self, "metric", metric)
        algs = tuple(self.algorithms)
        if len(set(algs)) != len(algs) or len(set(self.feature_sets)) != len(self.feature_sets):
            raise ValueError("duplicate row or column in comparison table")
        if algs and self.baseline not in algs:
            raise ValueError(f"baseline row {self.baseline!r} is missing")
        if algs:
            algs = (self.baseline,) + tuple(a for a in algs if a != self.baseline)
        object.__setattr__(self, "algorithms", algs)
        object.__setattr__(self, "feature_sets", tuple(self.feature_sets))
        cells = dict(self.cells)
        for a in algs:
            for fs in self.feature_sets:
                if (a, fs) not in cells:
                    raise ValueError(f"no cell for ({a}, {fs.label})")
        if len(cells) != len(algs) * len(self.feature_sets):
            raise ValueError("cells outside the table's rows and columns")
        if any(cells[(self.baseline, fs)].starred for fs in self.feature_sets):
            raise ValueError("the baseline cannot be significantly better than itself")
        object.__setattr__(self, "cells", MappingProxyType(cells))

    def __len__(self) -> int:
        return len(self.cells)

    def cell(self, algorithm: str, fs: FeatureSet) -> Cell:
        return self.cells[(algorithm, fs)]

    @property
    def bold(self) -> frozenset[tuple[str, FeatureSet]]:
        """Cells holding the table minimum, compared at the printed precision."""
        if not self.cells:
            return frozenset()
        shown = {key: Decimal(format_score(c.score)) for key, c in self.cells.items()}
        low = min(shown.values())
        return frozenset(key for key, v in shown.items() if v == low)

    @property
    def starred(self) -> frozenset[tuple[str, FeatureSet]]:
        return frozenset(key for key, c in self.cells.items() if c.starred)

    def __eq__(self, other):
        return (isinstance(other, ComparisonTable) and self.metric == other.metric
                and self.view == other.view and self.algorithms == other.algorithms
                and self.feature_sets == other.feature_sets and self.baseline == other.baseline
                and dict(self.cells) == dict(other.cells))

    __hash__ = None


def comparison_table(x: ExperimentResult, metric: str) -> ComparisonTable:
    metric = metric.lower()
    cells = {}
    for alg in x.algorithms:
        for fs in x.feature_sets:
            score = x.result(alg, fs).score(metric)
            cells[(alg, fs)] = Cell(score, x.test(alg, fs, metric).significant_better)
    return ComparisonTable(metric, x.view, x.algorithms, x.feature_sets, cells)


def _check(t: ComparisonTable) -> None:
    if len(t) == 0:
        raise EmptyInputError("cannot render an empty comparison table")


def render_markdown(t: ComparisonTable) -> str:
    _check(t)
    bold = t.bold
    lines = [
        f"**{t.metric} on {_VIEW_TITLES[t.view]}**",
        "",
        "| Algorithm | " + " | ".join(fs.label for fs in t.feature_sets) + " |",
        "|---|" + "---:|" * len(t.feature_sets),
    ]
    for alg in t.algorithms:
        name = f"{alg} (baseline)" if alg == t.baseline else alg
        texts = []
        for fs in t.feature_sets:
            c = t.cell(alg, fs)
            text = format_score(c.score) + ("*" if c.starred else "")
            texts.append(f"**{text}**" if (alg, fs) in bold else text)
        lines.append(f"| {name} | " + " | ".join(texts) + " |")
    lines += ["", f"`*` significantly lower than {t.baseline} (paired t-test); lowest score in bold.", ""]
    return "\n".join(lines)


def render_csv(t: ComparisonTable) -> str:
    _check(t)
    bold = t.bold
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for alg in t.algorithms:
        for fs in t.feature_sets:
            c = t.cell(alg, fs)
            w.writerow([alg, fs.label, format_score(c.score), str(c.starred).lower(),
                        str((alg, fs) in bold).lower()])
    return buf.getvalue()


def render(t: ComparisonTable, fmt: str = "markdown") -> str:
    if fmt == "markdown":
        return render_markdown(t)
    if fmt == "csv":
        return render_csv(t)
    raise ConfigError(f"unknown table format {fmt!r}; choose from {', '.join(FORMATS)}")


def _flag(text: str, line: int) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ParseError(f"expected true or false, got {text!r}", line)


def parse_csv(text: str, metric: str, view: DatasetView, baseline: str = BASELINE) -> ComparisonTable:
    """Inverse of :func:`render_csv`; scores come back at two decimals."""
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ParseError(f"expected header {','.join(CSV_COLUMNS)}", 1)
    algs, sets, cells = [], [], {}
    for row in reader:
        line = reader.line_num
        try:
            fs = FeatureSet.parse(row["feature_set"])
            score = float(row["score"])
        except (ConfigError, ValueError) as exc:
            raise ParseError(str(exc), line) from None
        if row["algorithm"] not in algs:
            algs.append(row["algorithm"])
        if fs not in sets:
            sets.append(fs)
        cells[(row["algorithm"], fs)] = Cell(score, _flag(row["starred"], line))
        _flag(row["bold"], line)
    try:
        return ComparisonTable(metric, view, tuple(algs), tuple(sets), cells, baseline)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
