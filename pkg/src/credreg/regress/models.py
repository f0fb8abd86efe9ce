"""The regression learners.

Distance- and kernel-based learners (IBk, LWL, GaussianProcesses, SMOreg,
LinearRegression) rescale every column to [0, 1] with a :class:`ColumnScaler`
fitted on their own training rows.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConvergenceError
from ..features import ColumnScaler, FeatureMatrix
from ..numeric import RandomSource, solve_spd
from . import _kernels
from .base import ModelSpec, TrainedModel, frozen


def _scaler_state(s: ColumnScaler) -> dict:
    return {"lo": s.lo.tolist(), "hi": s.hi.tolist()}


def _scaler_from(d: dict) -> ColumnScaler:
    return ColumnScaler(np.array(d["lo"], dtype=np.float64), np.array(d["hi"], dtype=np.float64))


def presort(X: np.ndarray) -> np.ndarray:
    """Row ``f`` lists the sample indices sorted by column ``f`` (ties by index)."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int64))


# ---------------------------------------------------------------- ZeroR

class ZeroR(TrainedModel):
    def __init__(self, spec, feature_set, mean: float):
        super().__init__(spec, feature_set)
        self.mean = float(mean)

    @classmethod
    def fit(cls, spec: ModelSpec, m: FeatureMatrix) -> "ZeroR":
        return cls(spec, m.set, float(np.mean(m.targets)))

    def _predict(self, X):
        return np.full(len(X), self.mean)

    def state(self):
        return {"mean": self.mean}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        return cls(spec, feature_set, state["mean"])


# ---------------------------------------------------------------- LinearRegression

class LinearRegression(TrainedModel):
    """Ridge regression on [0, 1]-scaled columns with a free intercept."""

    def __init__(self, spec, feature_set, scaler: ColumnScaler, weights, intercept: float):
        super().__init__(spec, feature_set)
        self.scaler = scaler
        self.weights = frozen(weights)
        self.intercept = float(intercept)

    @classmethod
    def fit(cls, spec, m):
        scaler = ColumnScaler.fit(m.X)
        Z = scaler.transform(m.X)
        y = m.targets
        z_mean = Z.mean(axis=0)
        y_mean = y.mean()
        Zc = Z - z_mean
        A = Zc.T @ Zc + spec.hyperparameters["ridge"] * np.eye(Z.shape[1])
        if spec.hyperparameters["ridge"] == 0:
            A += 1e-12 * np.eye(Z.shape[1])
        w = solve_spd(A, Zc.T @ (y - y_mean))
        return cls(spec, m.set, scaler, w, y_mean - z_mean @ w)

    @property
    def coefficients(self) -> np.ndarray:
        """Weights expressed on the raw (unscaled) feature columns."""
        span = self.scaler.hi - self.scaler.lo
        return np.where(span > 0, self.weights / np.where(span > 0, span, 1.0), 0.0)

    @property
    def raw_intercept(self) -> float:
        return float(self.intercept - self.coefficients @ self.scaler.lo)

    def _predict(self, X):
        return self.scaler.transform(X) @ self.weights + self.intercept

    def state(self):
        return {"scaler": _scaler_state(self.scaler), "weights": self.weights.tolist(),
                "intercept": self.intercept}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        return cls(spec, feature_set, _scaler_from(state["scaler"]), state["weights"], state["intercept"])


# ---------------------------------------------------------------- IBk

class IBk(TrainedModel):
    """k nearest neighbours by Euclidean distance on scaled columns; mean target of the k."""

    _CHUNK = 256

    def __init__(self, spec, feature_set, scaler, Z, y):
        super().__init__(spec, feature_set)
        self.scaler = scaler
        self.Z = frozen(Z)
        self.y = frozen(y)
        self.k = min(spec.hyperparameters["k"], len(self.y))

    @classmethod
    def fit(cls, spec, m):
        scaler = ColumnScaler.fit(m.X)
        return cls(spec, m.set, scaler, scaler.transform(m.X), m.targets)

    def neighbours(self, X) -> np.ndarray:
        """Indices of the k nearest training rows per query, closest first."""
        Q = np.ascontiguousarray(self.scaler.transform(X))
        Z = np.ascontiguousarray(self.Z)
        if self.k == 1:
            return _kernels.nearest_index(Z, Q)[:, None]
        out = np.empty((len(Q), self.k), dtype=np.intp)
        for s in range(0, len(Q), self._CHUNK):
            dist = _kernels.squared_distances(Q[s:s + self._CHUNK], Z)
            # stable sort: equal distances keep the lower training index first
            out[s:s + self._CHUNK] = np.argsort(dist, axis=1, kind="stable")[:, :self.k]
        return out

    def _predict(self, X):
        return self.y[self.neighbours(X)].mean(axis=1)

    def state(self):
        return {"scaler": _scaler_state(self.scaler), "Z": self.Z.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        Z = np.array(state["Z"], dtype=np.float64).reshape(-1, feature_set.dimension)
        return cls(spec, feature_set, _scaler_from(state["scaler"]), Z, state["y"])


# ---------------------------------------------------------------- LWL

class LWL(TrainedModel):
    """Lazy learner: a fresh distance-weighted DecisionStump for every query."""

    def __init__(self, spec, feature_set, scaler, Z, y):
        super().__init__(spec, feature_set)
        self.scaler = scaler
        self.Z = frozen(Z)
        self.y = frozen(y)
        self._order = presort(self.Z)
        self._ZT = np.ascontiguousarray(self.Z.T)

    @classmethod
    def fit(cls, spec, m):
        scaler = ColumnScaler.fit(m.X)
        return cls(spec, m.set, scaler, scaler.transform(m.X), m.targets)

    def _predict(self, X):
        Q = np.ascontiguousarray(self.scaler.transform(X))
        return _kernels.lwl_predict(self.Z, self._ZT, self.y, self._order, Q)

    def state(self):
        return {"scaler": _scaler_state(self.scaler), "Z": self.Z.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        Z = np.array(state["Z"], dtype=np.float64).reshape(-1, feature_set.dimension)
        return cls(spec, feature_set, _scaler_from(state["scaler"]), Z, state["y"])


# ---------------------------------------------------------------- trees

class Tree:
    """Array-backed binary tree; node 0 is the root, leaves have ``feature == -1``."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = frozen(feature, np.int64)
        self.threshold = frozen(threshold)
        self.left = frozen(left, np.int64)
        self.right = frozen(right, np.int64)
        self.value = frozen(value)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.tree_apply(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def state(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_state(cls, d: dict) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])

    @classmethod
    def grow(cls, X, y, *, weights=None, order=None, labels=None, n_classes=0, min_leaf=1.0,
             max_depth=-1, features_per_split=None, seed=0) -> "Tree":
        """Grow on all rows of ``X`` with positive weight.

        ``order`` may hold a presort of ``X`` (as from :func:`presort`); it is
        filtered to the positive-weight rows and never modified.
        """
        X = np.ascontiguousarray(X, dtype=np.float64)
        n, d = X.shape
        w = np.ones(n) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
        if order is None:
            order = presort(X)
        keep = w > 0
        if not keep.all():
            order = order[keep[order]].reshape(d, -1)
        else:
            order = order.copy()
        criterion = _kernels.REGRESSION if labels is None else _kernels.GINI
        lab = np.zeros(n, dtype=np.int64) if labels is None else np.ascontiguousarray(labels, dtype=np.int64)
        n_sub = d if features_per_split is None else min(int(features_per_split), d)
        f, t, lc, rc, v, _, k = _kernels.grow_tree(
            np.ascontiguousarray(X.T), np.ascontiguousarray(y, dtype=np.float64), lab, w, order, criterion, n_classes,
            float(min_leaf), int(max_depth), n_sub, np.uint64(seed),
        )
        return cls(f[:k], t[:k], lc[:k], rc[:k], v[:k])

    def pruned(self, X_holdout, y_holdout) -> "Tree":
        """Reduced-error pruning: collapse every subtree whose holdout SSE exceeds
        the holdout SSE of predicting its node value."""
        if len(y_holdout) == 0:
            return self
        leaf_err = _kernels.holdout_errors(
            self.feature, self.threshold, self.left, self.right, self.value,
            np.ascontiguousarray(X_holdout, dtype=np.float64), np.ascontiguousarray(y_holdout, dtype=np.float64),
        )
        feature = self.feature.copy()
        sub_err = leaf_err.copy()
        # children always carry larger indices than their parent
        for node in range(self.n_nodes - 1, -1, -1):
            if feature[node] < 0:
                continue
            err = sub_err[self.left[node]] + sub_err[self.right[node]]
            if err > leaf_err[node]:
                feature[node] = -1
            else:
                sub_err[node] = err
        return Tree(feature, self.threshold, self.left, self.right, self.value)._compacted()

    def _compacted(self) -> "Tree":
        keep, stack = [], [0]
        while stack:
            node = stack.pop()
            keep.append(node)
            if self.feature[node] >= 0:
                stack.append(self.right[node])
                stack.append(self.left[node])
        remap = np.full(self.n_nodes, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        keep = np.array(keep)
        internal = self.feature[keep] >= 0
        left = np.where(internal, remap[self.left[keep]], -1)
        right = np.where(internal, remap[self.right[keep]], -1)
        thr = np.where(internal, self.threshold[keep], 0.0)
        return Tree(self.feature[keep], thr, left, right, self.value[keep])


class _TreeModel(TrainedModel):
    def __init__(self, spec, feature_set, tree: Tree):
        super().__init__(spec, feature_set)
        self.tree = tree

    def _predict(self, X):
        return self.tree.predict(X)

    def state(self):
        return {"tree": self.tree.state()}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        return cls(spec, feature_set, Tree.from_state(state["tree"]))


class DecisionStump(_TreeModel):
    """One split minimising (weighted) SSE; a single leaf if no split helps."""

    @classmethod
    def fit(cls, spec, m, weights=None):
        return cls(spec, m.set, fit_stump_tree(m.X, m.targets, weights))


def fit_stump_tree(X, y, weights=None, order=None) -> Tree:
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(y),) or np.any(weights < 0) or not np.sum(weights) > 0:
            raise ValueError("stump weights must be non-negative with a positive sum")
    return Tree.grow(X, y, weights=weights, order=order, min_leaf=0.0, max_depth=1)


class REPTree(_TreeModel):
    """Variance-reduction tree, optionally pruned against a random internal holdout."""

    @classmethod
    def fit(cls, spec, m):
        hp = spec.hyperparameters
        n = len(m)
        grow_idx = np.arange(n)
        hold_idx = np.empty(0, dtype=np.intp)
        if hp["prune"]:
            n_hold = int(math.floor(hp["holdout"] * n))
            if n_hold > 0:
                perm = RandomSource(spec.seed).child("reptree-holdout").permutation(n)
                hold_idx = np.sort(perm[:n_hold])
                grow_idx = np.sort(perm[n_hold:])
        tree = Tree.grow(m.X[grow_idx], m.targets[grow_idx], min_leaf=hp["min_leaf"],
                         max_depth=hp["max_depth"])
        if hp["prune"]:
            tree = tree.pruned(m.X[hold_idx], m.targets[hold_idx])
        return cls(spec, m.set, tree)


class RegressionByDiscretization(TrainedModel):
    """Gini classification tree over equal-width target bins; predicts the bin's mean target."""

    def __init__(self, spec, feature_set, tree: Tree, bin_means, lo: float, width: float):
        super().__init__(spec, feature_set)
        self.tree = tree
        self.bin_means = frozen(bin_means)
        self.lo = float(lo)
        self.width = float(width)

    @staticmethod
    def bin_index(y, lo: float, width: float, bins: int) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if width <= 0:
            return np.zeros(y.shape, dtype=np.int64)
        return np.minimum(np.floor((y - lo) / width), bins - 1).astype(np.int64)

    @classmethod
    def fit(cls, spec, m):
        bins = spec.hyperparameters["bins"]
        y = m.targets
        lo, hi = float(y.min()), float(y.max())
        width = (hi - lo) / bins
        if width <= 0:
            tree = Tree([-1], [0.0], [-1], [-1], [0.0])
            return cls(spec, m.set, tree, [lo], lo, 0.0)
        labels = cls.bin_index(y, lo, width, bins)
        sums = np.bincount(labels, weights=y, minlength=bins)
        counts = np.bincount(labels, minlength=bins)
        means = np.divide(sums, counts, out=np.full(bins, np.nan), where=counts > 0)
        tree = Tree.grow(m.X, y, labels=labels, n_classes=bins,
                         min_leaf=spec.hyperparameters["min_leaf"])
        return cls(spec, m.set, tree, means, lo, width)

    def _predict(self, X):
        return self.bin_means[self.tree.predict(X).astype(np.int64)]

    def state(self):
        return {"tree": self.tree.state(), "bin_means": [None if np.isnan(v) else v for v in self.bin_means.tolist()],
                "lo": self.lo, "width": self.width}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        means = [np.nan if v is None else v for v in state["bin_means"]]
        return cls(spec, feature_set, Tree.from_state(state["tree"]), means, state["lo"], state["width"])


class AdditiveRegression(TrainedModel):
    """Forward stagewise boosting of decision stumps on residuals."""

    def __init__(self, spec, feature_set, base: float, stumps: list[Tree]):
        super().__init__(spec, feature_set)
        self.base = float(base)
        self.stumps = tuple(stumps)
        self.shrinkage = float(spec.hyperparameters["shrinkage"])

    @classmethod
    def fit(cls, spec, m):
        eta = spec.hyperparameters["shrinkage"]
        X = np.ascontiguousarray(m.X)
        order = presort(X)
        base = float(np.mean(m.targets))
        F = np.full(len(m), base)
        stumps = []
        for _ in range(spec.hyperparameters["iterations"]):
            stump = fit_stump_tree(X, m.targets - F, order=order)
            stumps.append(stump)
            F = F + eta * stump.predict(X)
        return cls(spec, m.set, base, stumps)

    def staged_predict(self, X):
        """Predictions after 0, 1, ..., I boosting rounds."""
        X = np.asarray(X, dtype=np.float64)
        F = np.full(len(X), self.base)
        yield F.copy()
        for s in self.stumps:
            F = F + self.shrinkage * s.predict(X)
            yield F.copy()

    def _predict(self, X):
        F = np.full(len(X), self.base)
        for s in self.stumps:
            F = F + self.shrinkage * s.predict(X)
        return F

    def state(self):
        return {"base": self.base, "stumps": [s.state() for s in self.stumps]}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        return cls(spec, feature_set, state["base"], [Tree.from_state(s) for s in state["stumps"]])


class RandomForest(TrainedModel):
    """Bagged unpruned variance trees with per-node random feature subsets."""

    def __init__(self, spec, feature_set, trees: list[Tree]):
        super().__init__(spec, feature_set)
        self.trees = tuple(trees)

    @staticmethod
    def default_features_per_split(d: int) -> int:
        return int(math.floor(math.log2(d))) + 1

    @classmethod
    def fit(cls, spec, m):
        hp = spec.hyperparameters
        X = np.ascontiguousarray(m.X)
        n, d = X.shape
        f = hp["features_per_split"] or cls.default_features_per_split(d)
        order = presort(X)
        rng = RandomSource(spec.seed)
        trees = []
        for t in range(hp["trees"]):
            stream = rng.child("tree", t)
            if hp["bootstrap"]:
                counts = np.bincount(stream.integers(0, n, size=n), minlength=n).astype(np.float64)
            else:
                counts = np.ones(n)
            node_seed = int(stream.integers(0, 2 ** 63 - 1))
            trees.append(Tree.grow(X, m.targets, weights=counts, order=order, min_leaf=hp["min_leaf"],
                                   max_depth=hp["max_depth"], features_per_split=f, seed=node_seed))
        return cls(spec, m.set, trees)

    def member_predictions(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return np.array([t.predict(X) for t in self.trees])

    def _predict(self, X):
        return self.member_predictions(X).mean(axis=0)

    def state(self):
        return {"trees": [t.state() for t in self.trees]}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        return cls(spec, feature_set, [Tree.from_state(t) for t in state["trees"]])


# ---------------------------------------------------------------- kernel methods

def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    # |a|^2 + |b|^2 - 2ab through one matrix product; rounding can dip below zero
    D = A @ B.T
    D *= -2.0
    D += np.einsum("ij,ij->i", A, A)[:, None]
    D += np.einsum("ij,ij->i", B, B)[None, :]
    np.maximum(D, 0.0, out=D)
    if A is B:
        np.fill_diagonal(D, 0.0)
    D *= -gamma
    return np.exp(D, out=D)


class GaussianProcesses(TrainedModel):
    """GP posterior mean with an RBF kernel on scaled inputs and centred targets."""

    def __init__(self, spec, feature_set, scaler, Z, alpha, y_mean: float, gamma: float):
        super().__init__(spec, feature_set)
        self.scaler = scaler
        self.Z = frozen(Z)
        self.alpha = frozen(alpha)
        self.y_mean = float(y_mean)
        self.gamma = float(gamma)

    @classmethod
    def fit(cls, spec, m):
        hp = spec.hyperparameters
        gamma = hp["gamma"] if hp["gamma"] is not None else 1.0 / m.set.dimension
        scaler = ColumnScaler.fit(m.X)
        Z = scaler.transform(m.X)
        y_mean = float(np.mean(m.targets))
        K = rbf_kernel(Z, Z, gamma)
        K[np.diag_indices_from(K)] += hp["noise"]
        alpha = solve_spd(K, m.targets - y_mean)
        return cls(spec, m.set, scaler, Z, alpha, y_mean, gamma)

    def _predict(self, X):
        return self.y_mean + rbf_kernel(self.scaler.transform(X), self.Z, self.gamma) @ self.alpha

    def state(self):
        return {"scaler": _scaler_state(self.scaler), "Z": self.Z.tolist(), "alpha": self.alpha.tolist(),
                "y_mean": self.y_mean, "gamma": self.gamma}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        Z = np.array(state["Z"], dtype=np.float64).reshape(-1, feature_set.dimension)
        return cls(spec, feature_set, _scaler_from(state["scaler"]), Z, state["alpha"],
                   state["y_mean"], state["gamma"])


class SMOreg(TrainedModel):
    """Linear epsilon-insensitive SVR trained by sequential minimal optimisation.

    ``beta`` holds the dual coefficients ``alpha - alpha*`` of the training rows;
    the primal weight vector is kept explicitly since the kernel is linear.
    """

    def __init__(self, spec, feature_set, scaler, weights, bias: float, beta, iterations: int = 0):
        super().__init__(spec, feature_set)
        self.scaler = scaler
        self.weights = frozen(weights)
        self.bias = float(bias)
        self.beta = frozen(beta)
        self.iterations = int(iterations)

    @classmethod
    def fit(cls, spec, m):
        hp = spec.hyperparameters
        C, eps, tol = float(hp["C"]), float(hp["epsilon"]), float(hp["tolerance"])
        scaler = ColumnScaler.fit(m.X)
        Z = np.ascontiguousarray(scaler.transform(m.X))
        y = np.ascontiguousarray(m.targets, dtype=np.float64)
        K = Z @ Z.T
        beta, gap, iters = _kernels.smo_solve(K, y, C, eps, tol, int(hp["max_iter"]))
        g = K @ beta - y
        bias = cls._bias(beta, g, C, eps)
        model = cls(spec, m.set, scaler, Z.T @ beta, bias, beta, iters)
        if not gap < tol:
            worst = float(np.max(model.kkt_violations(m.X, m.targets)))
            raise ConvergenceError(f"SMOreg stopped after {iters} pair updates without converging",
                                   max(worst, gap))
        return model

    @staticmethod
    def _bias(beta, g, C, eps) -> float:
        free = (np.abs(beta) > 0) & (np.abs(beta) < C)
        if free.any():
            return float(np.mean(-g[free] - eps * np.sign(beta[free])))
        up = np.where(beta < C, g + np.where(beta >= 0, eps, -eps), np.inf)
        dn = np.where(beta > -C, g - np.where(beta <= 0, eps, -eps), -np.inf)
        return float(-(up.min() + dn.max()) / 2)

    def decision(self, X) -> np.ndarray:
        return self.scaler.transform(X) @ self.weights + self.bias

    def _predict(self, X):
        return self.decision(X)

    def kkt_violations(self, X, y) -> np.ndarray:
        """Per-sample distance from the epsilon-KKT conditions on the training data."""
        hp = self.spec.hyperparameters
        C, eps = float(hp["C"]), float(hp["epsilon"])
        r = np.asarray(y, dtype=np.float64) - self.decision(X)
        b = self.beta
        tiny = 1e-12 * C
        at_upper = b >= C - tiny
        at_lower = b <= -C + tiny
        zero = np.abs(b) <= tiny
        pos = (b > tiny) & ~at_upper
        neg = (b < -tiny) & ~at_lower
        v = np.zeros_like(r)
        v[zero] = np.maximum(0.0, np.abs(r[zero]) - eps)
        v[pos] = np.abs(r[pos] - eps)
        v[neg] = np.abs(r[neg] + eps)
        v[at_upper] = np.maximum(0.0, eps - r[at_upper])
        v[at_lower] = np.maximum(0.0, r[at_lower] + eps)
        return v

    def state(self):
        return {"scaler": _scaler_state(self.scaler), "weights": self.weights.tolist(), "bias": self.bias,
                "beta": self.beta.tolist(), "iterations": self.iterations}

    @classmethod
    def from_state(cls, spec, feature_set, state):
        return cls(spec, feature_set, _scaler_from(state["scaler"]), state["weights"], state["bias"],
                   state["beta"], state.get("iterations", 0))


MODEL_CLASSES: dict[str, type[TrainedModel]] = {
    "ZeroR": ZeroR,
    "REPTree": REPTree,
    "LinearRegression": LinearRegression,
    "IBk": IBk,
    "LWL": LWL,
    "AdditiveRegression": AdditiveRegression,
    "RegressionByDiscretization": RegressionByDiscretization,
    "DecisionStump": DecisionStump,
    "GaussianProcesses": GaussianProcesses,
    "SMOreg": SMOreg,
    "RandomForest": RandomForest,
}
