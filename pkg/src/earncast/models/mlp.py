"""Feed-forward price regressor: input -> 20 -> 20 -> 20 -> 1, rectifier
activations, 10% hidden dropout (training only), Adam on mean squared error,
early stopping on validation MSE.

Features are z-scored with training-split statistics stored on the model;
targets are standardized internally the same way (predictions are mapped
back), which keeps Adam step sizes sane for rupee-scale prices. Validation
MSE for early stopping is computed in original price units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import MlpParams, TrainConfig
from .tree import ModelError, check_row_width


class DivergenceError(ModelError):
    pass


@dataclass
class MlpRegressor:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feat_mean: np.ndarray
    feat_std: np.ndarray
    target_mean: float
    target_std: float
    dropout: float
    n_features: int
    best_epoch: int = 0
    val_curve: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = check_row_width(self.n_features, X)
        if not np.all(np.isfinite(X)):
            raise ModelError("non-finite inputs at inference (impute missing values first)")
        Xs = (X - self.feat_mean) / self.feat_std
        out = _forward(self.weights, self.biases, Xs)
        return out * self.target_std + self.target_mean


def mlp_predict(model: MlpRegressor, features) -> np.ndarray | float:
    """Deterministic forward pass with dropout disabled; row -> scalar."""
    arr = np.asarray(features, dtype=np.float64)
    out = model.predict(arr)
    return float(out[0]) if arr.ndim == 1 else out


def _init_params(n_in: int, hidden: tuple[int, ...], rng: np.random.Generator):
    weights, biases = [], []
    widths = [n_in, *hidden, 1]
    for fan_in, fan_out in zip(widths, widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward(weights, biases, Xs: np.ndarray) -> np.ndarray:
    a = Xs
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        a = z if i == last else np.maximum(z, 0.0)
    return a[:, 0]


def loss_and_grads(weights, biases, Xs, ys, masks=None):
    """MSE loss and exact parameter gradients for one (standardized) batch.

    masks, when given, is one multiplicative dropout mask per hidden layer
    (entries 0 or 1/keep); passing explicit masks makes the loss a
    deterministic function of the parameters, which the finite-difference
    check relies on.
    """
    last = len(weights) - 1
    a = Xs
    acts = [a]
    pre = []
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        pre.append(z)
        if i == last:
            a = z
        else:
            a = np.maximum(z, 0.0)
            if masks is not None:
                a = a * masks[i]
        acts.append(a)

    pred = a[:, 0]
    diff = pred - ys
    n = len(ys)
    loss = float(np.mean(diff**2))

    grad_w = [np.zeros_like(W) for W in weights]
    grad_b = [np.zeros_like(b) for b in biases]
    delta = (2.0 * diff / n)[:, None]
    for i in range(last, -1, -1):
        grad_w[i] = acts[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ weights[i].T
            if masks is not None:
                delta = delta * masks[i - 1]
            delta = delta * (pre[i - 1] > 0.0)
    return loss, grad_w, grad_b


def _standardizer(values: np.ndarray, axis=0):
    mean = np.nanmean(values, axis=axis)
    std = np.nanstd(values, axis=axis)
    mean = np.where(np.isfinite(mean), mean, 0.0)
    std = np.where(np.isfinite(std) & (std > 1e-12), std, 1.0)
    return mean, std


def train_mlp(features, targets, cfg: TrainConfig, X_val=None, y_val=None) -> MlpRegressor:
    """Mini-batch Adam on MSE; returns the best-validation-epoch parameters."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(targets, dtype=np.float64)
    if X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ModelError(f"feature matrix {X.shape} does not match targets {y.shape}")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ModelError("non-finite training inputs (impute missing values first)")
    params: MlpParams = cfg.mlp
    rng = np.random.default_rng(cfg.seed)

    feat_mean, feat_std = _standardizer(X)
    t_mean, t_std = _standardizer(y)
    Xs = (X - feat_mean) / feat_std
    ys = (y - float(t_mean)) / float(t_std)

    weights, biases = _init_params(X.shape[1], params.hidden, rng)
    model = MlpRegressor(
        weights=weights,
        biases=biases,
        feat_mean=feat_mean,
        feat_std=feat_std,
        target_mean=float(t_mean),
        target_std=float(t_std),
        dropout=params.dropout,
        n_features=X.shape[1],
    )

    m_w = [np.zeros_like(W) for W in weights]
    v_w = [np.zeros_like(W) for W in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    keep = 1.0 - params.dropout
    n = X.shape[0]
    step = 0
    # anneal the step size toward lr_end across the epoch budget
    gamma = (params.lr_end / params.learning_rate) ** (1.0 / max(1, params.epochs))

    best_val = np.inf
    best_params = None
    best_epoch = 0
    stall = 0
    val_curve = []

    for epoch in range(params.epochs):
        lr = params.learning_rate * gamma**epoch
        order = rng.permutation(n)
        for start in range(0, n, params.batch_size):
            rows = order[start : start + params.batch_size]
            masks = None
            if params.dropout > 0.0:
                masks = [
                    (rng.random((len(rows), W.shape[1])) < keep) / keep
                    for W in weights[:-1]
                ]
            loss, grad_w, grad_b = loss_and_grads(weights, biases, Xs[rows], ys[rows], masks)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite training loss at epoch {epoch}, lr={lr:.2e}"
                )
            step += 1
            b1c = 1.0 - params.adam_beta1**step
            b2c = 1.0 - params.adam_beta2**step
            for i in range(len(weights)):
                if params.weight_decay:
                    grad_w[i] += params.weight_decay * weights[i]
                for g, p, m, v in ((grad_w[i], weights[i], m_w[i], v_w[i]),
                                   (grad_b[i], biases[i], m_b[i], v_b[i])):
                    m *= params.adam_beta1
                    m += (1 - params.adam_beta1) * g
                    v *= params.adam_beta2
                    v += (1 - params.adam_beta2) * g * g
                    p -= lr * (m / b1c) / (np.sqrt(v / b2c) + params.adam_eps)
        for W, b in zip(weights, biases):
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise DivergenceError(f"non-finite parameters after epoch {epoch}")

        if X_val is not None and len(X_val) > 0:
            val_pred = model.predict(np.asarray(X_val, dtype=np.float64))
            val_mse = float(np.mean((val_pred - np.asarray(y_val, dtype=np.float64)) ** 2))
            val_curve.append(val_mse)
            if val_mse < best_val - 1e-12:
                best_val = val_mse
                best_params = ([W.copy() for W in weights], [b.copy() for b in biases])
                best_epoch = epoch
                stall = 0
            else:
                stall += 1
                if stall > params.patience:
                    break

    if best_params is not None:
        model.weights, model.biases = best_params
        model.best_epoch = best_epoch
    model.val_curve = np.asarray(val_curve)
    return model
