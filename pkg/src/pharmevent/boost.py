"""Gradient-boosted trees, the GCN+GBDT ensemble, and feature attribution.

The boosted model grows one regression tree per class per round against
softmax cross-entropy gradients and hessians, with greedy variance-gain
splits at midpoints of adjacent observed values. Missing values carry an
explicit NaN marker and are routed by a learned default direction rather
than imputed, preserving the missingness signal. Tree structure may be
learned on a row subsample, but leaf values are always refit on the full
gradient statistics, which keeps the training loss monotone.

Attribution uses permutation importance in production plus an exact
brute-force Shapley oracle (all coalitions, feasible up to 12 features)
for validation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateLabels,
    EmptyFeatures,
    SchemaMismatch,
    TooFew,
    TooManyFeatures,
)
from .graph import EventGraph, GcnConfig, GcnModel, gcn_probs, train_gcn

GCN_PROB_COLUMNS = tuple(f"gcn_prob_{k}" for k in range(6))


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows with named columns; NaN is the explicit missing marker."""

    schema: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise SchemaMismatch(f"values must be 2-D, got shape {values.shape}")
        if values.shape[1] != len(self.schema):
            raise SchemaMismatch(
                f"schema has {len(self.schema)} names but rows have width {values.shape[1]}"
            )
        if len(set(self.schema)) != len(self.schema):
            raise SchemaMismatch("duplicate feature names")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def take(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(schema=self.schema, values=self.values[rows])

    def with_columns(self, names, columns: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(
            schema=self.schema + tuple(names),
            values=np.hstack([self.values, columns]),
        )


# --- regression tree ------------------------------------------------------------


@dataclass
class TreeNode:
    is_leaf: bool
    value: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    missing_left: bool = True
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "missing_left": self.missing_left,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TreeNode":
        if "leaf" in obj:
            return cls(is_leaf=True, value=float(obj["leaf"]))
        return cls(
            is_leaf=False,
            feature=int(obj["feature"]),
            threshold=float(obj["threshold"]),
            missing_left=bool(obj["missing_left"]),
            left=cls.from_dict(obj["left"]),
            right=cls.from_dict(obj["right"]),
        )

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


def _route_mask(node: TreeNode, x: np.ndarray, rows: np.ndarray):
    """Row indices going left and right at an internal node."""
    col = x[rows, node.feature]
    miss = np.isnan(col)
    goes_left = np.where(miss, node.missing_left, col <= node.threshold)
    return rows[goes_left], rows[~goes_left]


def tree_predict(node: TreeNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0])
    stack = [(node, np.arange(x.shape[0]))]
    while stack:
        nd, rows = stack.pop()
        if len(rows) == 0:
            continue
        if nd.is_leaf:
            out[rows] = nd.value
        else:
            left_rows, right_rows = _route_mask(nd, x, rows)
            stack.append((nd.left, left_rows))
            stack.append((nd.right, right_rows))
    return out


@dataclass(frozen=True)
class GbdtConfig:
    n_rounds: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    subsample: float = 0.8
    reg_lambda: float = 1.0
    min_samples_leaf: int = 1
    min_gain: float = 1e-12
    leaf_clip: float = 10.0
    n_classes: int = 6
    seed: int = 0


def _leaf_value(g_sum: float, h_sum: float, cfg: GbdtConfig) -> float:
    v = -g_sum / (h_sum + cfg.reg_lambda)
    return float(np.clip(v, -cfg.leaf_clip, cfg.leaf_clip))


def _find_split(x, grad, hess, rows, cfg: GbdtConfig):
    """Best (gain, feature, threshold, missing_left) over all features, or None.

    Gain is the usual regularized variance gain sum(G^2/(H+lambda)) of the
    children minus the parent's. Thresholds sit at midpoints of adjacent
    distinct observed values; missing rows are tried on both sides and the
    better direction is learned. Ties resolve to the first (lowest)
    feature and threshold, keeping training deterministic.
    """
    g_tot = float(grad[rows].sum())
    h_tot = float(hess[rows].sum())
    lam = cfg.reg_lambda
    parent = g_tot * g_tot / (h_tot + lam)
    best = None  # (gain, feature, threshold, missing_left)
    for f in range(x.shape[1]):
        col = x[rows, f]
        miss = np.isnan(col)
        nm_rows = rows[~miss]
        if len(nm_rows) < 2 * cfg.min_samples_leaf or len(nm_rows) < 2:
            continue
        vals = x[nm_rows, f]
        order = np.argsort(vals, kind="stable")
        vs = vals[order]
        gs = grad[nm_rows][order]
        hs = hess[nm_rows][order]
        cg = np.cumsum(gs)[:-1]
        ch = np.cumsum(hs)[:-1]
        valid = vs[:-1] < vs[1:]
        k = len(nm_rows)
        counts_left = np.arange(1, k)
        valid &= (counts_left >= cfg.min_samples_leaf) & (k - counts_left >= cfg.min_samples_leaf)
        if not valid.any():
            continue
        g_m = float(grad[rows[miss]].sum())
        h_m = float(hess[rows[miss]].sum())
        g_nm = float(gs.sum())
        h_nm = float(hs.sum())
        gr = g_nm - cg
        hr = h_nm - ch
        gain_ml = (cg + g_m) ** 2 / (ch + h_m + lam) + gr**2 / (hr + lam) - parent
        gain_mr = cg**2 / (ch + lam) + (gr + g_m) ** 2 / (hr + h_m + lam) - parent
        for gains, missing_left in ((gain_ml, True), (gain_mr, False)):
            masked = np.where(valid, gains, -np.inf)
            i = int(np.argmax(masked))
            gain = float(masked[i])
            if gain > cfg.min_gain and (best is None or gain > best[0]):
                best = (gain, f, float(0.5 * (vs[i] + vs[i + 1])), missing_left)
    return best


def _build_tree(x, grad, hess, rows, cfg: GbdtConfig, depth: int = 0) -> TreeNode:
    g_sum = float(grad[rows].sum())
    h_sum = float(hess[rows].sum())
    if depth >= cfg.max_depth or len(rows) < 2 * cfg.min_samples_leaf:
        return TreeNode(is_leaf=True, value=_leaf_value(g_sum, h_sum, cfg))
    split = _find_split(x, grad, hess, rows, cfg)
    if split is None:
        return TreeNode(is_leaf=True, value=_leaf_value(g_sum, h_sum, cfg))
    _, f, thr, missing_left = split
    node = TreeNode(is_leaf=False, feature=f, threshold=thr, missing_left=missing_left)
    left_rows, right_rows = _route_mask(node, x, rows)
    node.left = _build_tree(x, grad, hess, left_rows, cfg, depth + 1)
    node.right = _build_tree(x, grad, hess, right_rows, cfg, depth + 1)
    return node


def _refit_leaves(node: TreeNode, x, grad, hess, rows, cfg: GbdtConfig) -> None:
    """Recompute leaf values from full-data gradient statistics."""
    if node.is_leaf:
        node.value = _leaf_value(float(grad[rows].sum()), float(hess[rows].sum()), cfg)
        return
    left_rows, right_rows = _route_mask(node, x, rows)
    _refit_leaves(node.left, x, grad, hess, left_rows, cfg)
    _refit_leaves(node.right, x, grad, hess, right_rows, cfg)


# --- boosted model ---------------------------------------------------------------


@dataclass
class GbdtModel:
    schema: tuple[str, ...]
    trees: list[list[TreeNode]]  # [round][class]
    base_scores: np.ndarray
    config: GbdtConfig
    train_ce: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "schema": list(self.schema),
            "base_scores": [repr(float(v)) for v in self.base_scores],
            "config": {
                "n_rounds": self.config.n_rounds,
                "max_depth": self.config.max_depth,
                "learning_rate": self.config.learning_rate,
                "subsample": self.config.subsample,
                "reg_lambda": self.config.reg_lambda,
                "min_samples_leaf": self.config.min_samples_leaf,
                "min_gain": self.config.min_gain,
                "leaf_clip": self.config.leaf_clip,
                "n_classes": self.config.n_classes,
                "seed": self.config.seed,
            },
            "trees": [[t.to_dict() for t in rnd] for rnd in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GbdtModel":
        return cls(
            schema=tuple(obj["schema"]),
            trees=[[TreeNode.from_dict(t) for t in rnd] for rnd in obj["trees"]],
            base_scores=np.array([float(v) for v in obj["base_scores"]]),
            config=GbdtConfig(**obj["config"]),
        )


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_training_inputs(x: FeatureMatrix, y: np.ndarray, n_classes: int):
    if x.d == 0:
        raise EmptyFeatures("feature matrix has no columns")
    if x.n < 20:
        raise TooFew(f"need at least 20 rows to train, got {x.n}")
    if len(y) != x.n:
        raise SchemaMismatch(f"{len(y)} labels vs {x.n} rows")
    present = np.unique(y)
    if len(present) < 2:
        raise DegenerateLabels(f"single class {present} in labels")
    if present.min() < 0 or present.max() >= n_classes:
        raise SchemaMismatch(f"labels outside [0, {n_classes})")


def train_gbdt(x: FeatureMatrix, y, config: GbdtConfig | None = None) -> GbdtModel:
    """Boosted one-tree-per-class-per-round with softmax cross-entropy."""
    cfg = config or GbdtConfig()
    y = np.asarray(y, dtype=np.intp)
    _check_training_inputs(x, y, cfg.n_classes)
    values = x.values
    n = x.n
    counts = np.bincount(y, minlength=cfg.n_classes).astype(float)
    priors = counts / n
    base = np.where(priors > 0, np.log(np.clip(priors, 1e-300, None)), -30.0)
    scores = np.tile(base, (n, 1))
    onehot = np.zeros((n, cfg.n_classes))
    onehot[np.arange(n), y] = 1.0
    rng = np.random.default_rng(cfg.seed)
    trees: list[list[TreeNode]] = []
    ce_history: list[float] = []
    all_rows = np.arange(n)
    n_sub = max(2 * cfg.min_samples_leaf, int(round(cfg.subsample * n)))
    for _ in range(cfg.n_rounds):
        probs = _softmax(scores)
        round_trees: list[TreeNode] = []
        for k in range(cfg.n_classes):
            grad = probs[:, k] - onehot[:, k]
            hess = probs[:, k] * (1.0 - probs[:, k]) + 1e-16
            if cfg.subsample < 1.0 and n_sub < n:
                rows = np.sort(rng.choice(n, size=n_sub, replace=False))
            else:
                rows = all_rows
            tree = _build_tree(values, grad, hess, rows, cfg)
            _refit_leaves(tree, values, grad, hess, all_rows, cfg)
            scores[:, k] += cfg.learning_rate * tree_predict(tree, values)
            round_trees.append(tree)
        trees.append(round_trees)
        probs = _softmax(scores)
        ce_history.append(
            float(-np.mean(np.log(np.clip(probs[np.arange(n), y], 1e-300, None))))
        )
    return GbdtModel(
        schema=x.schema, trees=trees, base_scores=base.copy(), config=cfg, train_ce=ce_history
    )


def _prediction_values(model_schema, x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        if x.schema != tuple(model_schema):
            raise SchemaMismatch("feature schema does not match the model")
        return x.values
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != len(model_schema):
        raise SchemaMismatch(
            f"expected width {len(model_schema)}, got shape {arr.shape}"
        )
    return arr


def predict_scores(model: GbdtModel, x) -> np.ndarray:
    values = _prediction_values(model.schema, x)
    scores = np.tile(model.base_scores, (values.shape[0], 1))
    for round_trees in model.trees:
        for k, tree in enumerate(round_trees):
            scores[:, k] += model.config.learning_rate * tree_predict(tree, values)
    return scores


def predict_proba(model: GbdtModel, x) -> np.ndarray:
    """Class probabilities from accumulated leaf scores; rows sum to 1."""
    return _softmax(predict_scores(model, x))


# --- random forest -----------------------------------------------------------------


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: int | str | None = "sqrt"
    bootstrap: bool = True
    min_samples_leaf: int = 1
    n_classes: int = 6
    seed: int = 0


@dataclass
class ForestModel:
    schema: tuple[str, ...]
    trees: list[TreeNode]  # leaves hold the majority class index
    config: ForestConfig


def _gini_split(x, y_onehot, rows, feat_indices, min_leaf: int):
    """Best (score, feature, threshold, missing_left) by weighted Gini impurity."""
    best = None
    n_node = len(rows)
    for f in feat_indices:
        col = x[rows, f]
        miss = np.isnan(col)
        nm_rows = rows[~miss]
        if len(nm_rows) < 2:
            continue
        vals = x[nm_rows, f]
        order = np.argsort(vals, kind="stable")
        vs = vals[order]
        counts = np.cumsum(y_onehot[nm_rows][order], axis=0)
        total_nm = counts[-1]
        miss_counts = y_onehot[rows[miss]].sum(axis=0)
        valid = vs[:-1] < vs[1:]
        if not valid.any():
            continue
        left = counts[:-1]
        right = total_nm - left
        for add_miss_left in (True, False):
            lc = left + (miss_counts if add_miss_left else 0.0)
            rc = right + (0.0 if add_miss_left else miss_counts)
            nl = lc.sum(axis=1)
            nr = rc.sum(axis=1)
            ok = valid & (nl >= min_leaf) & (nr >= min_leaf)
            if not ok.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gini_l = 1.0 - np.sum((lc / np.maximum(nl, 1)[:, None]) ** 2, axis=1)
                gini_r = 1.0 - np.sum((rc / np.maximum(nr, 1)[:, None]) ** 2, axis=1)
            score = (nl * gini_l + nr * gini_r) / n_node
            masked = np.where(ok, score, np.inf)
            i = int(np.argmin(masked))
            if masked[i] < np.inf and (best is None or masked[i] < best[0] - 1e-15):
                best = (float(masked[i]), int(f), float(0.5 * (vs[i] + vs[i + 1])), add_miss_left)
    return best


def _build_class_tree(x, y, y_onehot, rows, cfg: ForestConfig, rng) -> TreeNode:
    labels = y[rows]
    if len(np.unique(labels)) == 1 or len(rows) < 2 * cfg.min_samples_leaf:
        majority = int(np.argmax(np.bincount(labels, minlength=cfg.n_classes)))
        return TreeNode(is_leaf=True, value=float(majority))
    d = x.shape[1]
    if cfg.max_features is None:
        m = d
    elif cfg.max_features == "sqrt":
        m = max(1, int(math.sqrt(d)))
    else:
        m = min(d, int(cfg.max_features))
    feat_indices = np.sort(rng.choice(d, size=m, replace=False)) if m < d else np.arange(d)
    split = _gini_split(x, y_onehot, rows, feat_indices, cfg.min_samples_leaf)
    if split is None:
        majority = int(np.argmax(np.bincount(labels, minlength=cfg.n_classes)))
        return TreeNode(is_leaf=True, value=float(majority))
    _, f, thr, missing_left = split
    node = TreeNode(is_leaf=False, feature=f, threshold=thr, missing_left=missing_left)
    left_rows, right_rows = _route_mask(node, x, rows)
    if len(left_rows) == 0 or len(right_rows) == 0:
        majority = int(np.argmax(np.bincount(labels, minlength=cfg.n_classes)))
        return TreeNode(is_leaf=True, value=float(majority))
    node.left = _build_class_tree(x, y, y_onehot, left_rows, cfg, rng)
    node.right = _build_class_tree(x, y, y_onehot, right_rows, cfg, rng)
    return node


def train_random_forest(x: FeatureMatrix, y, config: ForestConfig | None = None) -> ForestModel:
    """Bagged fully-grown Gini trees with per-split feature subsampling."""
    cfg = config or ForestConfig()
    y = np.asarray(y, dtype=np.intp)
    _check_training_inputs(x, y, cfg.n_classes)
    onehot = np.zeros((x.n, cfg.n_classes))
    onehot[np.arange(x.n), y] = 1.0
    rng = np.random.default_rng(cfg.seed)
    trees = []
    for _ in range(cfg.n_trees):
        if cfg.bootstrap:
            rows = np.sort(rng.integers(0, x.n, size=x.n))
        else:
            rows = np.arange(x.n)
        trees.append(_build_class_tree(x.values, y, onehot, rows, cfg, rng))
    return ForestModel(schema=x.schema, trees=trees, config=cfg)


def forest_proba(model: ForestModel, x) -> np.ndarray:
    """Majority-vote probabilities: the fraction of trees voting each class."""
    values = _prediction_values(model.schema, x)
    votes = np.zeros((values.shape[0], model.config.n_classes))
    for tree in model.trees:
        pred = tree_predict(tree, values).astype(np.intp)
        votes[np.arange(values.shape[0]), pred] += 1.0
    return votes / len(model.trees)


# --- ensemble -----------------------------------------------------------------------


@dataclass
class EnsembleModel:
    gcn: GcnModel
    gbdt: GbdtModel
    schema: tuple[str, ...]  # includes the gcn_prob_* columns appended last
    impute_means: np.ndarray


def _impute_for_gcn(values: np.ndarray, train_mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean-impute NaNs using train-row statistics (the GCN cannot take NaN)."""
    with np.errstate(invalid="ignore"):
        means = np.nanmean(values[train_mask], axis=0)
    means = np.where(np.isfinite(means), means, 0.0)
    filled = np.where(np.isnan(values), means, values)
    return filled, means


def train_ensemble(
    graph: EventGraph,
    features: FeatureMatrix,
    labels,
    train_mask,
    gcn_config: GcnConfig | None = None,
    gbdt_config: GbdtConfig | None = None,
) -> EnsembleModel:
    """Train the GCN, append its probabilities as features, train the GBDT.

    The six probability columns are appended after the original schema;
    the GBDT trains only on masked (train) rows.
    """
    labels = np.asarray(labels, dtype=np.intp)
    train_mask = np.asarray(train_mask, dtype=bool)
    if features.n != graph.n:
        raise SchemaMismatch(f"{features.n} feature rows vs {graph.n} graph nodes")
    filled, means = _impute_for_gcn(features.values, train_mask)
    gcn = train_gcn(graph, filled, labels, train_mask, gcn_config)
    probs = gcn_probs(gcn, graph, filled)
    augmented = features.with_columns(GCN_PROB_COLUMNS, probs)
    train_rows = np.flatnonzero(train_mask)
    gbdt = train_gbdt(augmented.take(train_rows), labels[train_rows], gbdt_config)
    return EnsembleModel(gcn=gcn, gbdt=gbdt, schema=augmented.schema, impute_means=means)


def ensemble_proba(model: EnsembleModel, graph: EventGraph, features: FeatureMatrix) -> np.ndarray:
    if features.schema != model.schema[: -len(GCN_PROB_COLUMNS)]:
        raise SchemaMismatch("feature schema does not match the ensemble")
    filled = np.where(np.isnan(features.values), model.impute_means, features.values)
    probs = gcn_probs(model.gcn, graph, filled)
    augmented = features.with_columns(GCN_PROB_COLUMNS, probs)
    return predict_proba(model.gbdt, augmented)


# --- attribution --------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureImportance:
    feature: str
    importance: float
    std: float


def permutation_importance(
    model,
    x: FeatureMatrix,
    y,
    metric=None,
    n_repeats: int = 5,
    seed: int = 0,
) -> list[FeatureImportance]:
    """Mean metric drop when one column is shuffled, over n_repeats shuffles.

    model is a GbdtModel or any callable mapping a value matrix to class
    probabilities; metric defaults to support-weighted one-vs-rest ROC
    AUC. Results are sorted by importance, descending; deterministic for
    a fixed seed.
    """
    if metric is None:
        from .evalkit import roc_auc_ovr

        def metric(y_true, probs):
            return roc_auc_ovr(probs, y_true).weighted_mean

    if isinstance(model, GbdtModel):
        if x.schema != model.schema:
            raise SchemaMismatch("feature schema does not match the model")

        def predict(values):
            return predict_proba(model, values)

    else:
        predict = model
    y = np.asarray(y, dtype=np.intp)
    base = metric(y, predict(x.values))
    rng = np.random.default_rng(seed)
    out: list[FeatureImportance] = []
    for j, name in enumerate(x.schema):
        drops = []
        for _ in range(n_repeats):
            shuffled = x.values.copy()
            shuffled[:, j] = shuffled[rng.permutation(x.n), j]
            drops.append(base - metric(y, predict(shuffled)))
        drops = np.asarray(drops)
        out.append(
            FeatureImportance(
                feature=name,
                importance=float(drops.mean()),
                std=float(drops.std(ddof=1)) if n_repeats > 1 else 0.0,
            )
        )
    out.sort(key=lambda fi: (-fi.importance, fi.feature))
    return out


def shapley_brute(predict, x, background, max_features: int = 12) -> np.ndarray:
    """Exact Shapley attributions of a scalar model output for one row.

    predict maps an (m, d) matrix to m scalar outputs. The value of a
    coalition is the mean output with out-of-coalition features replaced
    by background rows. Enumerates all 2^d coalitions, so d is capped.
    """
    x = np.asarray(x, dtype=float).ravel()
    background = np.atleast_2d(np.asarray(background, dtype=float))
    d = len(x)
    if d > max_features:
        raise TooManyFeatures(f"{d} features exceeds the exact-enumeration cap {max_features}")
    if background.shape[1] != d:
        raise SchemaMismatch(f"background width {background.shape[1]} != {d}")
    nb = background.shape[0]
    n_masks = 1 << d
    batch = np.empty((n_masks * nb, d))
    for mask in range(n_masks):
        block = background.copy()
        for j in range(d):
            if mask >> j & 1:
                block[:, j] = x[j]
        batch[mask * nb : (mask + 1) * nb] = block
    outputs = np.asarray(predict(batch), dtype=float).reshape(n_masks, nb)
    v = outputs.mean(axis=1)

    fact = [math.factorial(i) for i in range(d + 1)]
    weights = [fact[s] * fact[d - 1 - s] / fact[d] for s in range(d)]
    phi = np.zeros(d)
    for mask in range(n_masks):
        s = bin(mask).count("1")
        for j in range(d):
            if not mask >> j & 1:
                phi[j] += weights[s] * (v[mask | (1 << j)] - v[mask])
    return phi
