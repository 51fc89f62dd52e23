"""Gradient-boosted regression trees with exact greedy split search.

Supports two training objectives: squared error (point forecasting) and
pinball loss at a fixed quantile level (direct quantile forecasting).
Each boosting round fits one tree to the negative-gradient
pseudo-residuals, then refits every leaf with the loss-optimal constant
(mean for squared error, the level's sample quantile for pinball).

Split candidates are the midpoints between consecutive sorted unique
feature values; the search is exact, no histogram binning. Columns whose
values are all 0/1 (the calendar one-hots) have a single candidate
threshold at 0.5, so their gain comes from one matrix product instead of
a sort. Continuous columns are argsorted once per fit and kept in sorted
order per tree node by stable partitioning.

Feature importance is the total split gain accumulated per feature,
normalized to percent.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import EmptyMatrix, InvalidQuantile, SchemaMismatch
from .features import FeatureMatrix

MODEL_FORMAT = "loadcast-gbt"
MODEL_VERSION = 1


@dataclass(frozen=True)
class GbtConfig:
    n_trees: int = 300
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 20
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must lie in (0, 1]")


@dataclass
class TreeNode:
    """Internal node (children set) or leaf (children None).

    Internal nodes route a sample left iff x[feature_index] <= threshold.
    """

    feature_index: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class BoostedEnsemble:
    base_prediction: float
    trees: list[TreeNode]
    learning_rate: float
    loss: str
    quantile: float | None
    importance: np.ndarray
    feature_names: list[str]
    config: GbtConfig | None = None
    train_history: list[float] = field(default_factory=list, repr=False)
    validation_history: list[float] = field(default_factory=list, repr=False)


class ImportanceEntry(NamedTuple):
    name: str
    importance: float
    cumulative: float


def _pseudo_residuals(y, pred, loss, q):
    if loss == "squared":
        return y - pred
    return np.where(y > pred, q, q - 1.0)


def _mean_loss(y, pred, loss, q):
    if loss == "squared":
        return float(np.mean((y - pred) ** 2))
    diff = pred - y
    return float(np.mean(np.where(diff >= 0, (1.0 - q) * diff, -q * diff)))


def _eval_tree(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.is_leaf:
            out[idx] = nd.value
        else:
            goes_left = X[idx, nd.feature_index] <= nd.threshold
            stack.append((nd.left, idx[goes_left]))
            stack.append((nd.right, idx[~goes_left]))
    return out


class _TreeGrower:
    """Shared per-fit state for exact greedy tree construction."""

    def __init__(self, X: np.ndarray, config: GbtConfig):
        n, d = X.shape
        self.X = X
        self.cfg = config
        self.n = n
        self.d = d
        is_binary = np.all((X == 0.0) | (X == 1.0), axis=0)
        self.cont_cols = np.flatnonzero(~is_binary)
        self.bin_cols = np.flatnonzero(is_binary)
        self.Xc = np.asfortranarray(X[:, self.cont_cols])
        self.B = np.ascontiguousarray(X[:, self.bin_cols])
        self.order_full = np.argsort(self.Xc, axis=0, kind="stable").astype(np.int32)
        self.xsorted_full = np.take_along_axis(self.Xc, self.order_full, axis=0)
        self.mark = np.zeros(n, dtype=np.int64)
        self.stamp = 0

    def subsample_buffers(self, in_rows: np.ndarray | None):
        """Per-tree working copies of the sorted-order buffers."""
        if in_rows is None:
            return (
                self.order_full.copy(),
                self.xsorted_full.copy(),
                np.arange(self.n, dtype=np.int32),
            )
        mask = np.zeros(self.n, dtype=bool)
        mask[in_rows] = True
        k = len(in_rows)
        dc = self.order_full.shape[1]
        sel = mask[self.order_full]
        order = np.ascontiguousarray(self.order_full.T[sel.T].reshape(dc, k).T)
        xsorted = np.ascontiguousarray(self.xsorted_full.T[sel.T].reshape(dc, k).T)
        return order, xsorted, np.asarray(in_rows, dtype=np.int32)

    def grow(self, grad, resid, leaf_value, order, xsorted, rows, gain_acc):
        return self._node(grad, resid, leaf_value, order, xsorted, rows, 0, len(rows), 0, gain_acc)

    def _node(self, grad, resid, leaf_value, order, xsorted, rows, lo, hi, depth, gain_acc):
        m = hi - lo
        cfg = self.cfg
        node_rows = rows[lo:hi]
        if depth >= cfg.max_depth or m < 2 * cfg.min_samples_leaf:
            return TreeNode(value=leaf_value(resid[node_rows]))

        g_node = grad[node_rows]
        if g_node.min() == g_node.max():
            # constant gradient: every split has exactly zero gain
            return TreeNode(value=leaf_value(resid[node_rows]))
        total = float(g_node.sum())

        best_gain = -np.inf
        best_feature = -1
        split_info = None

        dc = len(self.cont_cols)
        if dc:
            idx = order[lo:hi]
            xs = xsorted[lo:hi]
            g = grad[idx]
            cs = np.cumsum(g, axis=0)
            tot = cs[-1]
            nl = np.arange(1, m, dtype=np.float64)[:, None]
            nr = m - nl
            left = cs[:-1]
            with np.errstate(invalid="ignore"):
                gains = left**2 / nl + (tot - left) ** 2 / nr - tot**2 / m
            valid = xs[1:] > xs[:-1]
            if cfg.min_samples_leaf > 1:
                msl_ok = (nl >= cfg.min_samples_leaf) & (nr >= cfg.min_samples_leaf)
                valid &= msl_ok
            gains = np.where(valid, gains, -np.inf)
            pos = np.argmax(gains, axis=0)
            col_best = gains[pos, np.arange(dc)]
        if len(self.bin_cols):
            Bn = self.B[node_rows]
            s1 = g_node @ Bn
            c1 = Bn.sum(axis=0)
            c0 = m - c1
            ok = (c0 >= cfg.min_samples_leaf) & (c1 >= cfg.min_samples_leaf)
            s0 = total - s1
            gain_b = np.where(
                ok,
                s0**2 / np.maximum(c0, 1.0)
                + s1**2 / np.maximum(c1, 1.0)
                - total**2 / m,
                -np.inf,
            )

        # lowest original feature index wins ties, then lowest threshold
        # (argmax keeps the first maximum in both scans)
        all_gain = np.full(self.d, -np.inf)
        if dc:
            all_gain[self.cont_cols] = col_best
        if len(self.bin_cols):
            all_gain[self.bin_cols] = gain_b
        best_feature = int(np.argmax(all_gain))
        best_gain = all_gain[best_feature]
        if not best_gain > 0.0:
            return TreeNode(value=leaf_value(resid[node_rows]))

        cont_local = np.searchsorted(self.cont_cols, best_feature)
        if cont_local < dc and self.cont_cols[cont_local] == best_feature:
            p = int(pos[cont_local])
            threshold = float((xs[p, cont_local] + xs[p + 1, cont_local]) / 2.0)
            left_rows = idx[: p + 1, cont_local]
        else:
            bin_local = int(np.searchsorted(self.bin_cols, best_feature))
            threshold = 0.5
            left_rows = node_rows[Bn[:, bin_local] == 0.0]
        n_left = len(left_rows)

        self.stamp += 1
        self.mark[left_rows] = self.stamp
        if dc:
            in_left = self.mark[idx] == self.stamp
            perm = np.argsort(~in_left, axis=0, kind="stable")
            order[lo:hi] = np.take_along_axis(idx, perm, axis=0)
            xsorted[lo:hi] = np.take_along_axis(xs, perm, axis=0)
        row_left = self.mark[node_rows] == self.stamp
        rows[lo:hi] = np.concatenate([node_rows[row_left], node_rows[~row_left]])

        gain_acc[best_feature] += best_gain
        node = TreeNode(feature_index=best_feature, threshold=threshold)
        node.left = self._node(
            grad, resid, leaf_value, order, xsorted, rows, lo, lo + n_left, depth + 1, gain_acc
        )
        node.right = self._node(
            grad, resid, leaf_value, order, xsorted, rows, lo + n_left, hi, depth + 1, gain_acc
        )
        return node


def fit(
    matrix: FeatureMatrix,
    config: GbtConfig,
    loss: str = "squared",
    quantile: float | None = None,
    validation: tuple[FeatureMatrix, np.ndarray] | None = None,
) -> BoostedEnsemble:
    """Train a boosted ensemble on the matrix's features and targets.

    ``loss`` is "squared" or "pinball"; pinball requires a quantile level
    in (0, 1). When a validation pair (matrix, actuals) is given, the
    per-round validation loss is recorded for tree-count monitoring; it
    never influences training.
    """
    if matrix.n_rows == 0:
        raise EmptyMatrix("cannot fit on an empty matrix")
    if loss not in ("squared", "pinball"):
        raise ValueError(f"unknown loss {loss!r}")
    if loss == "pinball":
        if quantile is None or not 0.0 < quantile < 1.0:
            raise InvalidQuantile(quantile)
    else:
        quantile = None

    X = matrix.rows
    y = matrix.targets
    n = matrix.n_rows

    if loss == "squared":
        base = float(np.mean(y))
        leaf_value = lambda r: float(np.mean(r))
    else:
        base = float(np.quantile(y, quantile))
        leaf_value = lambda r: float(np.quantile(r, quantile))

    pred = np.full(n, base)
    grower = _TreeGrower(X, config)
    rng = np.random.default_rng(config.seed)
    k_sub = max(1, int(round(config.subsample * n))) if config.subsample < 1.0 else n

    gain_acc = np.zeros(matrix.n_features)
    trees: list[TreeNode] = []
    train_history = [_mean_loss(y, pred, loss, quantile)]
    val_history: list[float] = []
    if validation is not None:
        val_X = validation[0].rows
        val_y = np.asarray(validation[1], dtype=np.float64)
        val_pred = np.full(len(val_y), base)
        val_history.append(_mean_loss(val_y, val_pred, loss, quantile))

    for _ in range(config.n_trees):
        if config.subsample < 1.0:
            in_rows = np.sort(rng.permutation(n)[:k_sub])
        else:
            in_rows = None
        grad = _pseudo_residuals(y, pred, loss, quantile)
        resid = y - pred
        order, xsorted, rows = grower.subsample_buffers(in_rows)
        tree = grower.grow(grad, resid, leaf_value, order, xsorted, rows, gain_acc)
        trees.append(tree)
        pred += config.learning_rate * _eval_tree(tree, X)
        train_history.append(_mean_loss(y, pred, loss, quantile))
        if validation is not None:
            val_pred += config.learning_rate * _eval_tree(tree, val_X)
            val_history.append(_mean_loss(val_y, val_pred, loss, quantile))

    total_gain = gain_acc.sum()
    if total_gain > 0.0:
        importance = gain_acc * (100.0 / total_gain)
    else:
        # nothing ever split with positive gain: report uniform importance
        importance = np.full(matrix.n_features, 100.0 / matrix.n_features)

    return BoostedEnsemble(
        base_prediction=base,
        trees=trees,
        learning_rate=config.learning_rate,
        loss=loss,
        quantile=quantile,
        importance=importance,
        feature_names=list(matrix.column_names),
        config=config,
        train_history=train_history,
        validation_history=val_history,
    )


def predict(model: BoostedEnsemble, matrix: FeatureMatrix) -> np.ndarray:
    """Evaluate base_prediction + learning_rate times the sum of trees."""
    if matrix.column_names != model.feature_names:
        raise SchemaMismatch(
            "matrix columns do not match the model's feature names "
            f"(got {matrix.column_names[:5]}..., want {model.feature_names[:5]}...)"
        )
    out = np.full(matrix.n_rows, model.base_prediction)
    if not model.trees:
        return out
    acc = np.zeros(matrix.n_rows)
    for tree in model.trees:
        acc += _eval_tree(tree, matrix.rows)
    return out + model.learning_rate * acc


def rank_importances(names, values) -> list[ImportanceEntry]:
    """Descending importance with running cumulative percent.

    Ties break lexicographically on the feature name so the ranking is
    deterministic.
    """
    pairs = sorted(zip(names, values), key=lambda nv: (-nv[1], nv[0]))
    out = []
    cum = 0.0
    for name, val in pairs:
        cum += val
        out.append(ImportanceEntry(name, float(val), float(cum)))
    return out


def importance_ranking(model: BoostedEnsemble) -> list[ImportanceEntry]:
    return rank_importances(model.feature_names, model.importance)


def _tree_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {
        "feature_index": node.feature_index,
        "threshold": node.threshold,
        "left": _tree_to_dict(node.left),
        "right": _tree_to_dict(node.right),
    }


def _tree_from_dict(d: dict) -> TreeNode:
    if "value" in d:
        return TreeNode(value=d["value"])
    return TreeNode(
        feature_index=d["feature_index"],
        threshold=d["threshold"],
        left=_tree_from_dict(d["left"]),
        right=_tree_from_dict(d["right"]),
    )


def save_json(model: BoostedEnsemble, path: str | Path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.config) if model.config else None,
        "loss": model.loss,
        "quantile": model.quantile,
        "base_prediction": model.base_prediction,
        "learning_rate": model.learning_rate,
        "feature_names": model.feature_names,
        "importance": [float(v) for v in model.importance],
        "trees": [_tree_to_dict(t) for t in model.trees],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_json(path: str | Path) -> BoostedEnsemble:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    return BoostedEnsemble(
        base_prediction=doc["base_prediction"],
        trees=[_tree_from_dict(t) for t in doc["trees"]],
        learning_rate=doc["learning_rate"],
        loss=doc["loss"],
        quantile=doc["quantile"],
        importance=np.array(doc["importance"]),
        feature_names=doc["feature_names"],
        config=GbtConfig(**doc["config"]) if doc.get("config") else None,
    )
