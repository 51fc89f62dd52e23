"""Feedforward multi-quantile network trained on pinball loss.

One network carries every requested quantile level as a separate output
unit on shared hidden layers. Training minimizes the pinball loss summed
over levels and averaged over samples, by mini-batch gradient descent
with fixed step and 0.9 momentum; everything is seeded, so a fit is a
pure function of (data, config).

Inputs and targets are standardized on the training data (constant
columns get unit scale); predictions are mapped back to MW. Each emitted
forecast row is sorted ascending across levels, which removes quantile
crossing and never increases pinball loss.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import (
    DegenerateTarget,
    EmptyMatrix,
    InvalidQuantile,
    SchemaMismatch,
)
from .features import FeatureMatrix

MODEL_FORMAT = "loadcast-qrnn"
MODEL_VERSION = 1
MOMENTUM = 0.9

# standardized distance beyond which an input row counts as extrapolation
EXTRAPOLATION_SIGMA = 5.0

DEFAULT_QUANTILES = tuple(round(0.05 * i, 2) for i in range(1, 20))


def pinball(prediction, actual, q: float):
    """Pinball loss: (1-q)(pred-actual) when over, q(actual-pred) when under."""
    if not 0.0 < q < 1.0:
        raise InvalidQuantile(q)
    diff = np.asarray(prediction, dtype=np.float64) - actual
    loss = np.where(diff >= 0, (1.0 - q) * diff, -q * diff)
    return float(loss) if loss.ndim == 0 else loss


@dataclass(frozen=True)
class QrnnConfig:
    hidden_layers: tuple[int, ...] = (10,)
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 0.05
    seed: int = 0
    activation: str = "sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))
        object.__setattr__(self, "quantiles", tuple(self.quantiles))
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layer sizes must be positive")
        if not self.quantiles:
            raise ValueError("at least one quantile level required")
        for q in self.quantiles:
            if not 0.0 < q < 1.0:
                raise InvalidQuantile(q)
        if list(self.quantiles) != sorted(set(self.quantiles)):
            raise ValueError("quantiles must be strictly ascending")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.activation not in ("sigmoid", "tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")


class QuantileForecast:
    """Per-instant quantile vectors in MW, non-decreasing across levels."""

    def __init__(self, instants, levels, values: np.ndarray, extrapolation_count: int = 0):
        self.instants = list(instants)
        self.levels = tuple(levels)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.extrapolation_count = extrapolation_count
        if self.values.shape != (len(self.instants), len(self.levels)):
            raise ValueError("values shape must be (n_instants, n_levels)")
        if self.values.size and np.any(np.diff(self.values, axis=1) < 0):
            raise ValueError("quantile rows must be non-decreasing across levels")

    @property
    def n_instants(self) -> int:
        return self.values.shape[0]

    def level_column(self, level: float) -> np.ndarray:
        for j, lv in enumerate(self.levels):
            if abs(lv - level) < 1e-9:
                return self.values[:, j]
        from .errors import LevelNotForecast

        raise LevelNotForecast(level)


class QuantileNet:
    """Trained network: layer parameters plus input/target standardization."""

    def __init__(
        self,
        weights: list[np.ndarray],
        biases: list[np.ndarray],
        x_mean: np.ndarray,
        x_std: np.ndarray,
        y_mean: float,
        y_std: float,
        config: QrnnConfig,
        feature_names: list[str],
        train_history: list[float] | None = None,
    ):
        self.weights = weights
        self.biases = biases
        self.x_mean = x_mean
        self.x_std = x_std
        self.y_mean = y_mean
        self.y_std = y_std
        self.config = config
        self.feature_names = feature_names
        self.train_history = train_history or []

    def standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.x_mean) / self.x_std


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return expit(z)
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_deriv(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "tanh":
        return 1.0 - a * a
    return (z > 0).astype(np.float64)


def _forward(weights, biases, activation, Xs):
    """Returns (activations per layer, pre-activations per layer)."""
    acts = [Xs]
    zs = []
    a = Xs
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        zs.append(z)
        a = z if i == last else _activate(z, activation)
        acts.append(a)
    return acts, zs


def _output_grad(out, ys, levels, mask=None):
    """d(objective)/d(output): (1-q) above the target, -q at or below it."""
    diff = out - ys[:, None]
    g = np.where(diff > 0, 1.0 - levels, -levels)
    if mask is not None:
        g = g * mask
    return g / out.shape[0]


def _objective(weights, biases, activation, Xs, ys, levels, mask=None):
    out = _forward(weights, biases, activation, Xs)[0][-1]
    diff = out - ys[:, None]
    pb = np.where(diff >= 0, (1.0 - levels) * diff, -levels * diff)
    if mask is not None:
        pb = pb * mask
    return float(pb.sum() / len(ys))


def _backprop(weights, biases, activation, acts, zs, dout):
    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    delta = dout
    for i in reversed(range(len(weights))):
        grads_w[i] = acts[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * _activate_deriv(
                zs[i - 1], acts[i], activation
            )
    return grads_w, grads_b


def fit(matrix: FeatureMatrix, config: QrnnConfig) -> QuantileNet:
    """Train a quantile network; deterministic given config.seed."""
    if matrix.n_rows == 0:
        raise EmptyMatrix("cannot fit on an empty matrix")
    y = matrix.targets
    if np.all(y == y[0]):
        raise DegenerateTarget("all targets identical; nothing to regress")

    X = matrix.rows
    x_mean = X.mean(axis=0)
    x_std = X.std(axis=0)
    x_std = np.where(x_std == 0.0, 1.0, x_std)
    y_mean = float(y.mean())
    y_std = float(y.std())
    Xs = (X - x_mean) / x_std
    ys = (y - y_mean) / y_std

    levels = np.array(config.quantiles)
    rng = np.random.default_rng(config.seed)
    sizes = [matrix.n_features, *config.hidden_layers, len(levels)]
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    # start the output heads at the empirical standardized quantiles so the
    # spread across levels is sensible from the first epoch
    biases[-1] = np.quantile(ys, levels)

    vel_w = [np.zeros_like(W) for W in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    n = matrix.n_rows
    history = [_objective(weights, biases, config.activation, Xs, ys, levels)]

    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = perm[start : start + config.batch_size]
            xb, yb = Xs[batch], ys[batch]
            acts, zs = _forward(weights, biases, config.activation, xb)
            dout = _output_grad(acts[-1], yb, levels)
            gw, gb = _backprop(weights, biases, config.activation, acts, zs, dout)
            for i in range(len(weights)):
                vel_w[i] = MOMENTUM * vel_w[i] - config.learning_rate * gw[i]
                vel_b[i] = MOMENTUM * vel_b[i] - config.learning_rate * gb[i]
                weights[i] += vel_w[i]
                biases[i] += vel_b[i]
        history.append(_objective(weights, biases, config.activation, Xs, ys, levels))

    return QuantileNet(
        weights,
        biases,
        x_mean,
        x_std,
        y_mean,
        float(y_std),
        config,
        list(matrix.column_names),
        train_history=history,
    )


def predict(net: QuantileNet, matrix: FeatureMatrix) -> QuantileForecast:
    """Emit the forecast for every row; rows sorted ascending across levels."""
    if matrix.column_names != net.feature_names:
        raise SchemaMismatch(
            "matrix columns do not match the network's feature names"
        )
    Xs = net.standardize(matrix.rows)
    extrapolated = int(np.sum(np.max(np.abs(Xs), axis=1) > EXTRAPOLATION_SIGMA)) if Xs.size else 0
    if extrapolated:
        warnings.warn(
            f"{extrapolated} rows lie more than {EXTRAPOLATION_SIGMA} standard "
            "deviations outside the training inputs",
            stacklevel=2,
        )
    out = _forward(net.weights, net.biases, net.config.activation, Xs)[0][-1]
    values = np.sort(out, axis=1) * net.y_std + net.y_mean
    return QuantileForecast(
        matrix.instants, net.config.quantiles, values, extrapolated
    )


def grad_check(net: QuantileNet, matrix: FeatureMatrix, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The pinball objective is non-differentiable where a prediction meets
    its target, so contributions whose standardized residual lies within
    10*epsilon of zero are masked out of both sides (mask frozen before
    differencing). ReLU nets additionally mask rows with a pre-activation
    within 10*epsilon of its own kink.
    """
    if matrix.n_rows > 64:
        raise ValueError("grad_check is meant for small matrices (<= 64 rows)")
    Xs = net.standardize(matrix.rows)
    ys = (matrix.targets - net.y_mean) / net.y_std
    levels = np.array(net.config.quantiles)
    act = net.config.activation

    acts, zs = _forward(net.weights, net.biases, act, Xs)
    out = acts[-1]
    mask = (np.abs(out - ys[:, None]) >= 10.0 * epsilon).astype(np.float64)
    if act == "relu":
        row_ok = np.ones(matrix.n_rows, dtype=bool)
        for z in zs[:-1]:
            row_ok &= np.all(np.abs(z) >= 10.0 * epsilon, axis=1)
        mask = mask * row_ok[:, None]

    dout = _output_grad(out, ys, levels, mask)
    grads_w, grads_b = _backprop(net.weights, net.biases, act, acts, zs, dout)

    max_rel = 0.0
    for params, grads in ((net.weights, grads_w), (net.biases, grads_b)):
        for arr, grad in zip(params, grads):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                hi = _objective(net.weights, net.biases, act, Xs, ys, levels, mask)
                flat[i] = orig - epsilon
                lo = _objective(net.weights, net.biases, act, Xs, ys, levels, mask)
                flat[i] = orig
                numeric = (hi - lo) / (2.0 * epsilon)
                rel = abs(gflat[i] - numeric) / max(abs(gflat[i]), abs(numeric), 1e-8)
                max_rel = max(max_rel, rel)
    return max_rel


def save_json(net: QuantileNet, path: str | Path) -> None:
    cfg = asdict(net.config)
    cfg["hidden_layers"] = list(cfg["hidden_layers"])
    cfg["quantiles"] = list(cfg["quantiles"])
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": cfg,
        "feature_names": net.feature_names,
        "x_mean": net.x_mean.tolist(),
        "x_std": net.x_std.tolist(),
        "y_mean": net.y_mean,
        "y_std": net.y_std,
        "weights": [W.tolist() for W in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_json(path: str | Path) -> QuantileNet:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    return QuantileNet(
        weights=[np.array(W) for W in doc["weights"]],
        biases=[np.array(b) for b in doc["biases"]],
        x_mean=np.array(doc["x_mean"]),
        x_std=np.array(doc["x_std"]),
        y_mean=doc["y_mean"],
        y_std=doc["y_std"],
        config=QrnnConfig(**doc["config"]),
        feature_names=doc["feature_names"],
    )
