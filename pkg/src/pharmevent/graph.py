"""Event-interconnection graph and a from-scratch graph convolutional net.

Two events are linked when the earlier one involves the same company or
shares an ICD-10 category with the later one and the gap is under a year.
Edges are directed earlier -> later and the propagation matrix is the
row-normalized D_in^-1 (A + I), so information can never flow backwards
in time: with nodes in chronological order the propagation matrix is
lower triangular, which makes the no-future-leakage property exact
rather than approximate.

The classifier stacks a dense layer, two graph convolutions and two more
dense layers (three fully connected plus two graph convolutions in
total), with rectifier activations and a softmax head emitting six class
probabilities. Training is full-batch with adaptive-moment updates and
best-validation-snapshot selection, deterministic for a fixed seed.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateLabels, DimensionMismatch, InvariantViolation, NonFiniteLoss


@dataclass(frozen=True)
class EventNode:
    id: str
    date: Date
    ticker: str
    icd10: tuple[str, ...] = ()


@dataclass(frozen=True)
class GraphEdge:
    src: int
    dst: int
    reason: str  # "company", "nosology" or "both"
    gap_days: int


@dataclass(frozen=True)
class EventGraph:
    nodes: tuple[EventNode, ...]
    edges: tuple[GraphEdge, ...]

    @property
    def n(self) -> int:
        return len(self.nodes)


def build_event_graph(events, max_gap_days: int = 365) -> EventGraph:
    """Directed event graph with deterministic (date, id) node ordering.

    An edge runs from the earlier to the later event when they share a
    ticker or an ICD-10 category and are strictly less than max_gap_days
    apart. Same-day events are never linked (no strict ordering).
    """
    nodes = tuple(
        EventNode(id=e.id, date=e.date, ticker=e.ticker, icd10=tuple(e.icd10))
        for e in sorted(events, key=lambda e: (e.date, e.id))
    )
    pair_reasons: dict[tuple[int, int], set[str]] = {}

    def link_group(indices: list[int], reason: str) -> None:
        # indices are in node (chronological) order
        for a_pos in range(len(indices)):
            i = indices[a_pos]
            for b_pos in range(a_pos + 1, len(indices)):
                j = indices[b_pos]
                gap = (nodes[j].date - nodes[i].date).days
                if gap >= max_gap_days:
                    break
                if gap <= 0:
                    continue
                pair_reasons.setdefault((i, j), set()).add(reason)

    by_ticker: dict[str, list[int]] = {}
    by_code: dict[str, list[int]] = {}
    for i, node in enumerate(nodes):
        by_ticker.setdefault(node.ticker, []).append(i)
        for code in node.icd10:
            by_code.setdefault(code, []).append(i)
    for indices in by_ticker.values():
        link_group(indices, "company")
    for indices in by_code.values():
        link_group(indices, "nosology")

    edges = tuple(
        GraphEdge(
            src=i,
            dst=j,
            reason="both" if len(reasons) == 2 else next(iter(reasons)),
            gap_days=(nodes[j].date - nodes[i].date).days,
        )
        for (i, j), reasons in sorted(pair_reasons.items())
    )
    return EventGraph(nodes=nodes, edges=edges)


def normalize_adjacency(graph: EventGraph) -> sp.csr_matrix:
    """Row-normalized D_in^-1 (A + I) respecting edge direction."""
    n = graph.n
    rows = [e.dst for e in graph.edges] + list(range(n))
    cols = [e.src for e in graph.edges] + list(range(n))
    data = np.ones(len(rows))
    a = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    in_deg = np.asarray(a.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / in_deg)
    return (inv @ a).tocsr()


# --- GCN --------------------------------------------------------------------


@dataclass(frozen=True)
class GcnConfig:
    hidden: int = 64
    epochs: int = 300
    learning_rate: float = 1e-3
    val_fraction: float = 0.15
    l2: float = 0.0
    n_classes: int = 6
    seed: int = 0


@dataclass
class GcnModel:
    """Trained weights plus the frozen feature standardization statistics."""

    params: list[tuple[np.ndarray, np.ndarray]]  # [(W, b)] for the 5 layers
    feat_mean: np.ndarray
    feat_std: np.ndarray
    config: GcnConfig
    history: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.params[0][0].shape[0]


def _init_params(d: int, hidden: int, n_classes: int, rng: np.random.Generator):
    h2 = max(1, hidden // 2)
    dims = [(d, hidden), (hidden, hidden), (hidden, hidden), (hidden, h2), (h2, n_classes)]
    params = []
    for fan_in, fan_out in dims:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params.append((w, np.zeros(fan_out)))
    return params


def _forward(P, X, params):
    """Full forward pass; returns the cache needed for backprop."""
    (w1, b1), (w2, b2), (w3, b3), (w4, b4), (w5, b5) = params
    a1 = X @ w1 + b1
    h1 = np.maximum(a1, 0.0)
    ph1 = P @ h1
    a2 = ph1 @ w2 + b2
    h2 = np.maximum(a2, 0.0)
    ph2 = P @ h2
    a3 = ph2 @ w3 + b3
    h3 = np.maximum(a3, 0.0)
    a4 = h3 @ w4 + b4
    h4 = np.maximum(a4, 0.0)
    logits = h4 @ w5 + b5
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return {
        "a1": a1, "h1": h1, "ph1": ph1, "a2": a2, "h2": h2, "ph2": ph2,
        "a3": a3, "h3": h3, "a4": a4, "h4": h4, "logits": logits, "probs": probs,
    }


def gcn_forward(P, X_std, params) -> np.ndarray:
    """Class probabilities from standardized features (rows sum to 1)."""
    return _forward(P, X_std, params)["probs"]


def _masked_ce(probs, labels, mask_idx) -> float:
    p = probs[mask_idx, labels[mask_idx]]
    return float(-np.mean(np.log(np.clip(p, 1e-300, None))))


def _loss_and_grads(P, X, params, labels, mask_idx, l2: float = 0.0):
    cache = _forward(P, X, params)
    probs = cache["probs"]
    n_classes = probs.shape[1]
    m = len(mask_idx)
    loss = _masked_ce(probs, labels, mask_idx)

    y = np.zeros_like(probs)
    y[mask_idx, labels[mask_idx]] = 1.0
    d_logits = np.zeros_like(probs)
    d_logits[mask_idx] = (probs[mask_idx] - y[mask_idx]) / m

    (w1, _), (w2, _), (w3, _), (w4, _), (w5, _) = params
    g_w5 = cache["h4"].T @ d_logits
    g_b5 = d_logits.sum(axis=0)
    d_h4 = d_logits @ w5.T
    d_a4 = d_h4 * (cache["a4"] > 0)
    g_w4 = cache["h3"].T @ d_a4
    g_b4 = d_a4.sum(axis=0)
    d_h3 = d_a4 @ w4.T
    d_a3 = d_h3 * (cache["a3"] > 0)
    g_w3 = cache["ph2"].T @ d_a3
    g_b3 = d_a3.sum(axis=0)
    d_ph2 = d_a3 @ w3.T
    d_h2 = P.T @ d_ph2
    d_a2 = d_h2 * (cache["a2"] > 0)
    g_w2 = cache["ph1"].T @ d_a2
    g_b2 = d_a2.sum(axis=0)
    d_ph1 = d_a2 @ w2.T
    d_h1 = P.T @ d_ph1
    d_a1 = d_h1 * (cache["a1"] > 0)
    g_w1 = X.T @ d_a1
    g_b1 = d_a1.sum(axis=0)

    grads = [(g_w1, g_b1), (g_w2, g_b2), (g_w3, g_b3), (g_w4, g_b4), (g_w5, g_b5)]
    if l2 > 0.0:
        for (w, _), (gw, _) in zip(params, grads):
            loss += 0.5 * l2 * float(np.sum(w * w))
            gw += l2 * w
    return loss, grads, probs


def _standardize_stats(features, train_idx):
    mean = features[train_idx].mean(axis=0)
    std = features[train_idx].std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return mean, std


def train_gcn(
    graph: EventGraph,
    features: np.ndarray,
    labels: np.ndarray,
    train_mask: np.ndarray,
    config: GcnConfig | None = None,
) -> GcnModel:
    """Full-batch training with Adam and best-validation-snapshot selection.

    Test nodes stay in the graph (transductive) but only masked nodes
    contribute to the loss; feature standardization uses train-node
    statistics only.
    """
    config = config or GcnConfig()
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=np.intp)
    train_mask = np.asarray(train_mask, dtype=bool)
    n, d = features.shape
    if n != graph.n:
        raise DimensionMismatch(f"{n} feature rows vs {graph.n} graph nodes")
    train_idx = np.flatnonzero(train_mask)
    if len(train_idx) == 0:
        raise DegenerateLabels("empty train mask")
    if len(np.unique(labels[train_idx])) < 2:
        raise DegenerateLabels("fewer than 2 classes in train labels")

    rng = np.random.default_rng(config.seed)
    n_val = int(round(config.val_fraction * len(train_idx)))
    if 1 <= n_val <= len(train_idx) - 2:
        perm = rng.permutation(len(train_idx))
        val_idx = np.sort(train_idx[perm[:n_val]])
        fit_idx = np.sort(train_idx[perm[n_val:]])
        if len(np.unique(labels[fit_idx])) < 2:
            fit_idx, val_idx = train_idx, np.empty(0, dtype=np.intp)
    else:
        fit_idx, val_idx = train_idx, np.empty(0, dtype=np.intp)

    mean, std = _standardize_stats(features, train_idx)
    x = (features - mean) / std
    p = normalize_adjacency(graph)
    params = _init_params(d, config.hidden, config.n_classes, rng)

    adam_m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    adam_v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best_val = np.inf
    best_params = None
    losses: list[float] = []
    for epoch in range(1, config.epochs + 1):
        loss, grads, probs = _loss_and_grads(p, x, params, labels, fit_idx, config.l2)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss diverged at epoch {epoch}")
        losses.append(loss)
        for k, ((w, b), (gw, gb)) in enumerate(zip(params, grads)):
            mw, mb = adam_m[k]
            vw, vb = adam_v[k]
            mw[:] = beta1 * mw + (1 - beta1) * gw
            mb[:] = beta1 * mb + (1 - beta1) * gb
            vw[:] = beta2 * vw + (1 - beta2) * gw**2
            vb[:] = beta2 * vb + (1 - beta2) * gb**2
            c1 = 1 - beta1**epoch
            c2 = 1 - beta2**epoch
            w -= config.learning_rate * (mw / c1) / (np.sqrt(vw / c2) + eps)
            b -= config.learning_rate * (mb / c1) / (np.sqrt(vb / c2) + eps)
        if len(val_idx):
            val_loss = _masked_ce(gcn_forward(p, x, params), labels, val_idx)
            if val_loss < best_val:
                best_val = val_loss
                best_params = [(w.copy(), b.copy()) for w, b in params]
    if best_params is not None:
        params = best_params
    return GcnModel(
        params=params,
        feat_mean=mean,
        feat_std=std,
        config=config,
        history={"train_loss": losses, "best_val": None if best_params is None else best_val},
    )


def gcn_probs(model: GcnModel, graph: EventGraph, features: np.ndarray) -> np.ndarray:
    """Class probabilities for every node; labels are never consulted."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != model.input_dim:
        raise DimensionMismatch(
            f"expected {model.input_dim} features, got {features.shape}"
        )
    if features.shape[0] != graph.n:
        raise DimensionMismatch(f"{features.shape[0]} rows vs {graph.n} nodes")
    x = (features - model.feat_mean) / model.feat_std
    return gcn_forward(normalize_adjacency(graph), x, model.params)


def preactivation_margin(model: GcnModel, graph: EventGraph, features: np.ndarray) -> float:
    """Smallest |pre-activation| feeding a rectifier (finite-difference guard)."""
    x = (np.asarray(features, dtype=float) - model.feat_mean) / model.feat_std
    cache = _forward(normalize_adjacency(graph), x, model.params)
    return float(min(np.min(np.abs(cache[k])) for k in ("a1", "a2", "a3", "a4")))


def grad_check(
    model: GcnModel,
    graph: EventGraph,
    features: np.ndarray,
    labels: np.ndarray,
    epsilon: float = 1e-5,
    mask: np.ndarray | None = None,
    fault_layer: int | None = None,
) -> float:
    """Max guarded relative error of analytic vs central-difference gradients.

    Every weight and bias entry is perturbed. fault_layer zeroes that
    layer's analytic gradient first (negative control for the check
    itself). Intended for small instances only.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=np.intp)
    if mask is None:
        mask_idx = np.arange(graph.n)
    else:
        mask_idx = np.flatnonzero(np.asarray(mask, dtype=bool))
    x = (features - model.feat_mean) / model.feat_std
    p = normalize_adjacency(graph)
    params = [(w.copy(), b.copy()) for w, b in model.params]
    _, grads, _ = _loss_and_grads(p, x, params, labels, mask_idx, model.config.l2)
    if fault_layer is not None:
        grads[fault_layer] = (
            np.zeros_like(grads[fault_layer][0]),
            np.zeros_like(grads[fault_layer][1]),
        )

    def loss_at() -> float:
        loss, _, _ = _loss_and_grads(p, x, params, labels, mask_idx, model.config.l2)
        return loss

    max_err = 0.0
    for (w, b), (gw, gb) in zip(params, grads):
        for arr, grad in ((w, gw), (b, gb)):
            flat = arr.ravel()
            gflat = grad.ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = loss_at()
                flat[i] = orig - epsilon
                down = loss_at()
                flat[i] = orig
                numeric = (up - down) / (2.0 * epsilon)
                denom = max(abs(gflat[i]), abs(numeric), 1e-3)
                max_err = max(max_err, abs(gflat[i] - numeric) / denom)
    return max_err


# --- serialization -------------------------------------------------------------

_MAGIC = b"GCNW"
_FORMAT_VERSION = 1


def save_gcn_model(path: str | Path, model: GcnModel) -> None:
    """Single deterministic binary file: JSON header plus raw float64 blocks."""
    arrays: list[np.ndarray] = []
    names: list[str] = []
    for k, (w, b) in enumerate(model.params):
        arrays.extend([w, b])
        names.extend([f"w{k + 1}", f"b{k + 1}"])
    arrays.extend([model.feat_mean, model.feat_std])
    names.extend(["feat_mean", "feat_std"])
    header = {
        "format_version": _FORMAT_VERSION,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in zip(names, arrays)],
        "config": {
            "hidden": model.config.hidden,
            "epochs": model.config.epochs,
            "learning_rate": model.config.learning_rate,
            "val_fraction": model.config.val_fraction,
            "l2": model.config.l2,
            "n_classes": model.config.n_classes,
            "seed": model.config.seed,
        },
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype=np.float64).tobytes())


def load_gcn_model(path: str | Path) -> GcnModel:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise InvariantViolation(f"not a GCN weight file: {path}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header["format_version"] != _FORMAT_VERSION:
            raise InvariantViolation(f"unsupported format version {header['format_version']}")
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            arrays[spec["name"]] = np.frombuffer(buf, dtype=np.float64).reshape(shape).copy()
    params = [(arrays[f"w{k}"], arrays[f"b{k}"]) for k in range(1, 6)]
    return GcnModel(
        params=params,
        feat_mean=arrays["feat_mean"],
        feat_std=arrays["feat_std"],
        config=GcnConfig(**header["config"]),
    )
