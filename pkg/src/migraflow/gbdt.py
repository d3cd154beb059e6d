"""Gradient-boosted decision stumps for binary classification under logistic loss."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import TrainConfig
from .features import NOMINAL_FEATURES

MODEL_HEADER = "migraflow-stumps v1"

# relative SSE tolerance under which two splits count as tied
TIE_RTOL = 1e-10
MAX_EXHAUSTIVE_CATEGORIES = 12


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def logistic_loss(y, scores):
    """Per-sample -[y log s(F) + (1-y) log(1-s(F))], computed stably."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(scores, dtype=float)
    # log(1 + e^(-F)) for positives and log(1 + e^F) for negatives, with no cancellation
    return np.logaddexp(0.0, (1.0 - 2.0 * y) * f)


def pseudo_residuals(y, scores) -> np.ndarray:
    """Negative gradient of the logistic loss w.r.t. the score: y - sigmoid(F)."""
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return np.asarray(y, dtype=float) - sigmoid(scores)


@dataclass(frozen=True)
class Stump:
    feature_index: int
    kind: str  # "numeric", "categorical" or "constant"
    threshold: float | None
    categories: frozenset | None
    left_value: float
    right_value: float

    def goes_left(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.kind == "constant":
            return np.ones(len(X), dtype=bool)
        col = X[:, self.feature_index]
        if self.kind == "numeric":
            return col <= self.threshold
        return np.isin(col, sorted(self.categories))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.goes_left(X), self.left_value, self.right_value)


def _constant(r: np.ndarray) -> Stump:
    v = float(r.mean()) if len(r) else 0.0
    return Stump(-1, "constant", None, None, v, v)


def _numeric_candidates(x, rc, total_sq, min_leaf):
    n = len(x)
    order = np.argsort(x, kind="stable")
    xs, rs = x[order], rc[order]
    cs = np.cumsum(rs)
    boundary = np.flatnonzero(xs[:-1] != xs[1:])
    n_left = boundary + 1
    ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
    boundary, n_left = boundary[ok], n_left[ok]
    s_left = cs[boundary]
    s_right = cs[-1] - s_left
    sse = total_sq - s_left**2 / n_left - s_right**2 / (n - n_left)
    thresholds = (xs[boundary] + xs[boundary + 1]) / 2.0
    return sse, thresholds


def _categorical_candidates(x, rc, total_sq, min_leaf):
    n = len(x)
    cats, inv = np.unique(x, return_inverse=True)
    counts = np.bincount(inv)
    sums = np.bincount(inv, weights=rc)
    if len(cats) <= MAX_EXHAUSTIVE_CATEGORIES:
        # every subset, smallest first; min_leaf can make the best subset a non-prefix of the mean order
        subsets_idx = [c for size in range(1, len(cats)) for c in itertools.combinations(range(len(cats)), size)]
        member = np.zeros((len(subsets_idx), len(cats)))
        for i, c in enumerate(subsets_idx):
            member[i, list(c)] = 1.0
    else:
        order = np.lexsort((cats, sums / counts))
        subsets_idx = [tuple(sorted(order[:k].tolist())) for k in range(1, len(cats))]
        member = np.tril(np.ones((len(cats) - 1, len(cats))))[:, np.argsort(order)]
    n_left = member @ counts
    s_left = member @ sums
    s_right = sums.sum() - s_left
    n_right = n - n_left
    ok = (n_left >= min_leaf) & (n_right >= min_leaf)
    # keep the lower-mean side on the left so each partition appears once
    ok &= s_left * np.maximum(n_right, 1) <= s_right * np.maximum(n_left, 1)
    rank = np.flatnonzero(ok)
    sse = total_sq - s_left[ok] ** 2 / n_left[ok] - s_right[ok] ** 2 / n_right[ok]
    subsets = [frozenset(cats[list(subsets_idx[i])].tolist()) for i in rank]
    return sse, rank, subsets


def fit_stump(X: np.ndarray, residuals: np.ndarray, min_leaf: int = 1,
              nominal: Sequence[int] = NOMINAL_FEATURES) -> Stump:
    """Least-squares depth-1 tree over every feature and split point.

    Numeric splits sit at midpoints between sorted unique values (left is
    ``x <= threshold``). Nominal splits send a category subset left, the side
    with the lower mean residual; up to ``MAX_EXHAUSTIVE_CATEGORIES`` values
    every subset is tried, beyond that only prefixes of the mean order. Ties go
    to the lowest feature index, then the lowest threshold (or the smallest,
    then lexicographically first, subset).
    """
    X = np.asarray(X, dtype=float)
    r = np.asarray(residuals, dtype=float)
    n = len(r)
    if n < 2 * min_leaf:
        raise ValueError(f"need at least {2 * min_leaf} samples, got {n}")
    if np.all(r == r[0]):
        return _constant(r)
    rc = r - r.mean()
    total_sq = float(np.dot(rc, rc))
    nominal = set(nominal)

    per_feature = []
    for f in range(X.shape[1]):
        if f in nominal:
            sse, keys, subsets = _categorical_candidates(X[:, f], rc, total_sq, min_leaf)
            per_feature.append((f, sse, keys, subsets))
        else:
            sse, thresholds = _numeric_candidates(X[:, f], rc, total_sq, min_leaf)
            per_feature.append((f, sse, thresholds, None))
    mins = [float(sse.min()) for _, sse, _, _ in per_feature if len(sse)]
    if not mins:
        return _constant(r)
    best = min(mins)
    tol = TIE_RTOL * total_sq
    for f, sse, keys, subsets in per_feature:
        tied = np.flatnonzero(sse <= best + tol)
        if len(tied) == 0:
            continue
        j = tied[np.argmin(keys[tied])]
        if subsets is None:
            thr = float(keys[j])
            left = X[:, f] <= thr
            return Stump(f, "numeric", thr, None, float(r[left].mean()), float(r[~left].mean()))
        cats = subsets[j]
        left = np.isin(X[:, f], sorted(cats))
        return Stump(f, "categorical", None, cats, float(r[left].mean()), float(r[~left].mean()))
    return _constant(r)  # unreachable


@dataclass
class StumpEnsemble:
    base_score: float
    stages: list[tuple[Stump, float]] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list, compare=False)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        score = np.full(len(X), self.base_score)
        for stump, gamma in self.stages:
            score = score + gamma * stump.predict(X)
        return score

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)


def predict_proba(ensemble: StumpEnsemble, x) -> float:
    """Probability that a single feature record is residential."""
    if hasattr(x, "as_tuple"):
        x = x.as_tuple()
    return float(ensemble.predict_proba(np.asarray(x, dtype=float).reshape(1, -1))[0])


def train(X, y, config: TrainConfig = TrainConfig(), sample_ids=None,
          nominal: Sequence[int] = NOMINAL_FEATURES) -> StumpEnsemble:
    """Boost ``config.n_stages`` stumps from the log-odds prior.

    Samples are put in ``sample_ids`` order first so the result does not
    depend on how the caller ordered the rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("empty training set")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    p = y.mean()
    if p in (0.0, 1.0):
        raise ValueError("training set needs both classes")
    if sample_ids is not None:
        order = np.argsort(np.asarray(sample_ids), kind="stable")
        X, y = X[order], y[order]
    base = float(np.log(p / (1.0 - p)))
    model = StumpEnsemble(base)
    scores = np.full(len(y), base)
    model.train_loss.append(float(logistic_loss(y, scores).sum()))
    for m in range(config.n_stages):
        r = pseudo_residuals(y, scores)
        stump = fit_stump(X, r, config.min_leaf, nominal)
        gamma = config.gamma(m)
        scores = scores + gamma * stump.predict(X)
        model.stages.append((stump, gamma))
        model.train_loss.append(float(logistic_loss(y, scores).sum()))
    return model


@dataclass
class CVResult:
    precision: list[float]
    recall: list[float]

    @property
    def mean_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def mean_recall(self) -> float:
        return float(np.mean(self.recall))


class FoldError(ValueError):
    pass


def stratified_folds(y, k: int, seed: int = 0) -> np.ndarray:
    """Fold number per sample; each class is shuffled then dealt round-robin."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be at least 2")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        fold[idx] = np.arange(len(idx)) % k
    return fold


def cross_validate(X, y, k: int = 5, config: TrainConfig = TrainConfig(), seed: int = 0,
                   trainer: Callable[..., StumpEnsemble] | None = None, sample_ids=None,
                   nominal: Sequence[int] = NOMINAL_FEATURES) -> CVResult:
    """Stratified k-fold precision and recall of the positive class.

    ``trainer(X, y, config)`` must return something with ``predict``; the
    default boosts stumps with ``nominal`` as the categorical columns.
    """
    if trainer is None:
        trainer = partial(train, nominal=nominal)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if sample_ids is not None:
        order = np.argsort(np.asarray(sample_ids), kind="stable")
        X, y = X[order], y[order]
    fold = stratified_folds(y, k, seed)
    for i in range(k):
        if len(np.unique(y[fold == i])) < 2 or len(np.unique(y[fold != i])) < 2:
            raise FoldError(f"fold {i} lacks one of the classes")
    precision, recall = [], []
    for i in range(k):
        test = fold == i
        model = trainer(X[~test], y[~test], config)
        pred = model.predict(X[test])
        truth = y[test]
        tp = int(np.sum((pred == 1) & (truth == 1)))
        fp = int(np.sum((pred == 1) & (truth == 0)))
        fn = int(np.sum((pred == 0) & (truth == 1)))
        precision.append(tp / (tp + fp) if tp + fp else 0.0)
        recall.append(tp / (tp + fn) if tp + fn else 0.0)
    return CVResult(precision, recall)


# -- plain-text model format ---------------------------------------------
def dumps(model: StumpEnsemble) -> str:
    lines = [f"{MODEL_HEADER},{model.base_score!r},{len(model.stages)}"]
    for stump, gamma in model.stages:
        if stump.kind == "numeric":
            split = repr(stump.threshold)
        elif stump.kind == "categorical":
            split = "|".join(repr(c) for c in sorted(stump.categories))
        else:
            split = ""
        lines.append(f"{stump.feature_index},{stump.kind},{split},{stump.left_value!r},{stump.right_value!r},{gamma!r}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> StumpEnsemble:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty model file")
    header = lines[0].split(",")
    if len(header) != 3 or header[0] != MODEL_HEADER:
        raise ValueError(f"not a {MODEL_HEADER} model")
    base, m = float(header[1]), int(header[2])
    stages = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise ValueError(f"malformed stage line: {ln!r}")
        f, kind, split, left, right, gamma = parts
        if kind == "numeric":
            stump = Stump(int(f), kind, float(split), None, float(left), float(right))
        elif kind == "categorical":
            stump = Stump(int(f), kind, None, frozenset(float(c) for c in split.split("|")), float(left), float(right))
        elif kind == "constant":
            stump = Stump(int(f), kind, None, None, float(left), float(right))
        else:
            raise ValueError(f"unknown stump kind {kind!r}")
        stages.append((stump, float(gamma)))
    if len(stages) != m:
        raise ValueError(f"header declares {m} stages, found {len(stages)}")
    return StumpEnsemble(base, stages)


def save(model: StumpEnsemble, path: str | Path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load(path: str | Path) -> StumpEnsemble:
    return loads(Path(path).read_text(encoding="utf-8"))
