"""Leaf-area prediction models.

Two families: ordinary least squares on the four image predictors
(optionally fitted per treatment or per genotype), and a single-hidden-layer
perceptron on the full numeric feature set. The OLS solve goes through a QR
decomposition rather than normal equations: the area-like predictors are
mutually correlated and the normal equations square the condition number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataset import MANDATORY_FEATURES
from .errors import (
    MissingPredictor,
    NonFiniteLoss,
    RankDeficient,
    TooFewObservations,
)

MODEL_FORMAT = "drydown-model/1"


class ModelScope(str, Enum):
    GLOBAL = "global"
    PER_TREATMENT = "treatment"
    PER_GENOTYPE = "genotype"


@dataclass
class LinearAreaModel:
    intercept: float
    coefficients: dict  # predictor name -> coefficient, ordered
    predictor_names: list
    n: int
    rmse: float  # training RMSE, mm^2

    def predict(self, record):
        return predict_linear(self, record)

    def to_json_dict(self):
        return {
            "format": MODEL_FORMAT,
            "kind": "linear",
            "intercept": self.intercept,
            "coefficients": self.coefficients,
            "predictor_names": self.predictor_names,
            "n": self.n,
            "rmse": self.rmse,
        }

    @classmethod
    def from_json_dict(cls, data):
        return cls(
            intercept=data["intercept"],
            coefficients=dict(data["coefficients"]),
            predictor_names=list(data["predictor_names"]),
            n=data["n"],
            rmse=data["rmse"],
        )


@dataclass
class ScopedModelSet:
    scope: ModelScope
    models: dict  # scope key -> LinearAreaModel

    def model_for(self, plant):
        if self.scope is ModelScope.GLOBAL:
            return self.models["global"]
        key = plant.treatment if self.scope is ModelScope.PER_TREATMENT else plant.genotype
        if key not in self.models:
            raise TooFewObservations(f"no fitted model for scope key {key!r}")
        return self.models[key]

    def to_json_dict(self):
        return {
            "format": MODEL_FORMAT,
            "kind": "scoped",
            "scope": self.scope.value,
            "models": {k: m.to_json_dict() for k, m in self.models.items()},
        }

    @classmethod
    def from_json_dict(cls, data):
        return cls(
            scope=ModelScope(data["scope"]),
            models={k: LinearAreaModel.from_json_dict(m) for k, m in data["models"].items()},
        )


def usable_rows(pairs, predictors):
    """Pairs with every predictor present and finite, plus the excluded count."""
    used, excluded = [], 0
    for pair in pairs:
        values = [pair.features.features.get(name) for name in predictors]
        if any(v is None or not np.isfinite(v) for v in values):
            excluded += 1
        else:
            used.append(pair)
    return used, excluded


def design_matrix(pairs, predictors):
    used, excluded = usable_rows(pairs, predictors)
    X = np.array(
        [[pair.features.features[name] for name in predictors] for pair in used],
        dtype=float,
    ).reshape(len(used), len(predictors))
    y = np.array([pair.observed_area for pair in used], dtype=float)
    return X, y, used, excluded


def _qr_solve(X, y, column_names):
    """Least squares through QR with an explicit rank check."""
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    tol = max(X.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    for j, d in enumerate(diag):
        if d <= tol:
            raise RankDeficient(column_names[j])
    return np.linalg.solve(r, q.T @ y)


def fit_linear(pairs, predictors=MANDATORY_FEATURES):
    """OLS fit of observed area on `predictors`, with intercept.

    Predictor columns that are constant over the usable rows are absorbed
    into the intercept (their coefficient is 0); genuinely collinear columns
    raise RankDeficient.
    """
    predictors = list(predictors)
    X, y, used, _ = design_matrix(pairs, predictors)
    p = len(predictors)
    if len(used) < p + 1:
        raise TooFewObservations(
            f"need at least {p + 1} usable observation pairs, got {len(used)}"
        )
    varying = [j for j in range(p) if np.ptp(X[:, j]) > 0.0]
    active = [predictors[j] for j in varying]
    design = np.column_stack([np.ones(len(used)), X[:, varying]])
    beta = _qr_solve(design, y, ["<intercept>"] + active)
    residuals = y - design @ beta
    rmse = float(np.sqrt(np.mean(residuals**2)))
    by_name = dict(zip(active, beta[1:]))
    return LinearAreaModel(
        intercept=float(beta[0]),
        coefficients={name: float(by_name.get(name, 0.0)) for name in predictors},
        predictor_names=predictors,
        n=len(used),
        rmse=rmse,
    )


def predict_linear(model, record):
    """Raw model output, mm^2; may be negative (clamped downstream)."""
    total = model.intercept
    for name, coefficient in model.coefficients.items():
        value = record.features.get(name)
        if value is None or not np.isfinite(value):
            raise MissingPredictor(name)
        total += coefficient * value
    return float(total)


def fit_scoped(pairs, scope, predictors=MANDATORY_FEATURES):
    """One OLS model per scope key (whole dataset, treatment, or genotype)."""
    scope = ModelScope(scope)
    if scope is ModelScope.GLOBAL:
        groups = {"global": list(pairs)}
    else:
        groups = {}
        for pair in pairs:
            key = (pair.plant.treatment if scope is ModelScope.PER_TREATMENT
                   else pair.plant.genotype)
            groups.setdefault(key, []).append(pair)

    models = {}
    for key in sorted(groups):
        try:
            models[key] = fit_linear(groups[key], predictors)
        except TooFewObservations as err:
            raise TooFewObservations(f"scope key {key!r}: {err}") from None
    return ScopedModelSet(scope=scope, models=models)


# --- multilayer perceptron ----------------------------------------------


@dataclass
class MlpConfig:
    hidden_width: int = 32
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 16
    validation_fraction: float = 0.2
    patience: int = 20
    seed: int = 0


@dataclass
class MlpAreaModel:
    input_names: list
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float
    w1: np.ndarray  # (d, H)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H,)
    b2: float
    training_log: dict = field(default_factory=dict)

    def predict(self, record):
        return predict_mlp(self, record)

    def to_json_dict(self):
        return {
            "format": MODEL_FORMAT,
            "kind": "mlp",
            "input_names": self.input_names,
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "y_scale": self.y_scale,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2,
            "training_log": self.training_log,
        }

    @classmethod
    def from_json_dict(cls, data):
        return cls(
            input_names=list(data["input_names"]),
            x_mean=np.array(data["x_mean"], dtype=float),
            x_scale=np.array(data["x_scale"], dtype=float),
            y_mean=data["y_mean"],
            y_scale=data["y_scale"],
            w1=np.array(data["w1"], dtype=float),
            b1=np.array(data["b1"], dtype=float),
            w2=np.array(data["w2"], dtype=float),
            b2=data["b2"],
            training_log=dict(data.get("training_log", {})),
        )


def mlp_forward(params, X):
    w1, b1, w2, b2 = params
    hidden = np.tanh(X @ w1 + b1)
    return hidden @ w2 + b2


def mlp_loss_and_grad(params, X, y):
    """Mean squared error and its analytic gradient (backprop).

    Kept as a standalone function so the gradient can be checked against
    finite differences independently of the training loop.
    """
    w1, b1, w2, b2 = params
    n = X.shape[0]
    pre = X @ w1 + b1
    hidden = np.tanh(pre)
    pred = hidden @ w2 + b2
    err = pred - y
    loss = float(np.mean(err**2))

    d_pred = 2.0 * err / n
    g_b2 = float(np.sum(d_pred))
    g_w2 = hidden.T @ d_pred
    d_hidden = np.outer(d_pred, w2) * (1.0 - hidden**2)
    g_b1 = d_hidden.sum(axis=0)
    g_w1 = X.T @ d_hidden
    return loss, (g_w1, g_b1, g_w2, g_b2)


def numeric_feature_matrix(pairs):
    """All-numeric feature matrix: drops columns with absent values or zero
    variance, keeps every pair."""
    if not pairs:
        raise TooFewObservations("no observation pairs")
    names = list(pairs[0].features.features)
    columns = []
    kept = []
    for name in names:
        values = [p.features.features.get(name) for p in pairs]
        if any(v is None or not np.isfinite(v) for v in values):
            continue
        col = np.array(values, dtype=float)
        if np.ptp(col) == 0.0:
            continue
        kept.append(name)
        columns.append(col)
    X = np.column_stack(columns)
    y = np.array([p.observed_area for p in pairs], dtype=float)
    return X, y, kept


def fit_mlp(pairs, config=None):
    """Train the one-hidden-layer network by mini-batch gradient descent.

    Inputs and target are standardized on the training split; the output bias
    starts at the (standardized) target mean so a zero-weight network predicts
    the mean area. Deterministic given config.seed. Early-stops when the
    validation loss has not improved for `patience` epochs and restores the
    best parameters seen.
    """
    config = config or MlpConfig()
    if len(pairs) < 20:
        raise TooFewObservations(f"MLP training needs >= 20 pairs, got {len(pairs)}")
    X, y, names = numeric_feature_matrix(list(pairs))

    rng = np.random.default_rng(config.seed)
    n = len(y)
    order = rng.permutation(n)
    n_val = max(1, int(round(config.validation_fraction * n))) if config.validation_fraction > 0 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]

    x_mean = X[train_idx].mean(axis=0)
    x_scale = X[train_idx].std(axis=0)
    x_scale[x_scale == 0.0] = 1.0
    y_mean = float(y[train_idx].mean())
    y_scale = float(y[train_idx].std()) or 1.0

    Xs = (X - x_mean) / x_scale
    ys = (y - y_mean) / y_scale
    X_train, y_train = Xs[train_idx], ys[train_idx]
    X_val, y_val = Xs[val_idx], ys[val_idx]

    d, h = X.shape[1], config.hidden_width
    w1 = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, h))
    b1 = np.zeros(h)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(h), size=h)
    b2 = 0.0  # standardized target mean

    best = (w1.copy(), b1.copy(), w2.copy(), b2)
    best_val = np.inf
    stale = 0
    epochs_run = 0

    for epoch in range(config.epochs):
        shuffle = rng.permutation(len(y_train))
        for start in range(0, len(y_train), config.batch_size):
            batch = shuffle[start:start + config.batch_size]
            loss, grads = mlp_loss_and_grad((w1, b1, w2, b2), X_train[batch], y_train[batch])
            if not np.isfinite(loss):
                raise NonFiniteLoss(epoch, config.learning_rate)
            g_w1, g_b1, g_w2, g_b2 = grads
            w1 -= config.learning_rate * g_w1
            b1 -= config.learning_rate * g_b1
            w2 -= config.learning_rate * g_w2
            b2 -= config.learning_rate * g_b2
        epochs_run = epoch + 1

        if n_val:
            val_pred = mlp_forward((w1, b1, w2, b2), X_val)
            val_loss = float(np.mean((val_pred - y_val) ** 2))
            if not np.isfinite(val_loss):
                raise NonFiniteLoss(epoch, config.learning_rate)
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best = (w1.copy(), b1.copy(), w2.copy(), b2)
                stale = 0
            else:
                stale += 1
                if stale > config.patience:
                    break

    if n_val:
        w1, b1, w2, b2 = best
        final_val = best_val
    else:
        final_val = float("nan")

    return MlpAreaModel(
        input_names=names,
        x_mean=x_mean,
        x_scale=x_scale,
        y_mean=y_mean,
        y_scale=y_scale,
        w1=w1,
        b1=b1,
        w2=np.asarray(w2),
        b2=float(b2),
        training_log={"epochs": epochs_run, "validation_loss": final_val},
    )


def predict_mlp(model, record):
    values = []
    for name in model.input_names:
        value = record.features.get(name)
        if value is None or not np.isfinite(value):
            raise MissingPredictor(name)
        values.append(value)
    x = (np.array(values, dtype=float) - model.x_mean) / model.x_scale
    out = mlp_forward((model.w1, model.b1, model.w2, model.b2), x[None, :])[0]
    return float(out * model.y_scale + model.y_mean)


# --- model files ---------------------------------------------------------

def save_model(model, path):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(model.to_json_dict(), handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    kind = data.get("kind")
    if kind == "linear":
        return LinearAreaModel.from_json_dict(data)
    if kind == "scoped":
        return ScopedModelSet.from_json_dict(data)
    if kind == "mlp":
        return MlpAreaModel.from_json_dict(data)
    raise ValueError(f"unknown model kind {kind!r} in {path}")
