"""Learned performance model: one-hidden-layer network trained by backprop.

Inputs and targets are z-scored with statistics fit on the training set; the
hidden layer is sigmoid, the output layer linear, and the loss is MSE in the
normalized target space. Training uses mini-batches with Adam-style adaptive
steps and early stopping on a held-out validation slice. Everything is plain
numpy so the gradient can be checked against finite differences.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import jsonio
from .errors import (
    DimensionMismatchError,
    InsufficientRowsError,
    NonFiniteLossError,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    hidden_units: int = 64
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 500
    patience: int = 20
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if min(self.hidden_units, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ValueError("hidden_units, batch_size, max_epochs, patience must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must lie in (0, 0.5]")

    def as_dict(self):
        return {
            "hidden_units": self.hidden_units,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "seed": self.seed,
            "validation_fraction": self.validation_fraction,
        }


def _norm_stats(M):
    mean = M.mean(axis=0)
    std = M.std(axis=0)
    std = np.where(std > 0, std, 1.0)  # constant columns pass through unscaled
    return mean, std


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_inputs(self):
        return self.W1.shape[1]

    @property
    def n_outputs(self):
        return self.W2.shape[0]

    def check_dims(self):
        hid = self.W1.shape[0]
        if self.b1.shape != (hid,) or self.W2.shape[1] != hid:
            raise DimensionMismatchError("hidden-layer shapes inconsistent")
        if self.b2.shape != (self.n_outputs,):
            raise DimensionMismatchError("output bias shape inconsistent")
        if self.x_mean.shape != (self.n_inputs,) or self.x_std.shape != (self.n_inputs,):
            raise DimensionMismatchError("input normalization shape inconsistent")
        if self.y_mean.shape != (self.n_outputs,) or self.y_std.shape != (self.n_outputs,):
            raise DimensionMismatchError("target normalization shape inconsistent")
        return self

    def norm_x(self, X):
        return (X - self.x_mean) / self.x_std

    def norm_y(self, Y):
        return (Y - self.y_mean) / self.y_std

    def denorm_y(self, Yn):
        return Yn * self.y_std + self.y_mean

    def forward_norm(self, Xn):
        """Hidden activations and normalized outputs for normalized inputs."""
        H = expit(Xn @ self.W1.T + self.b1)
        return H, H @ self.W2.T + self.b2

    def to_doc(self):
        def mat(a):
            return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}

        return {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "model",
            "W1": mat(self.W1), "b1": mat(self.b1),
            "W2": mat(self.W2), "b2": mat(self.b2),
            "x_mean": mat(self.x_mean), "x_std": mat(self.x_std),
            "y_mean": mat(self.y_mean), "y_std": mat(self.y_std),
            "meta": self.meta,
        }

    @classmethod
    def from_doc(cls, doc, path="<doc>"):
        jsonio.check_schema_version(doc, path, kind="model")

        def mat(m):
            return np.array(m["data"], dtype=float).reshape(m["shape"])

        return cls(
            W1=mat(doc["W1"]), b1=mat(doc["b1"]),
            W2=mat(doc["W2"]), b2=mat(doc["b2"]),
            x_mean=mat(doc["x_mean"]), x_std=mat(doc["x_std"]),
            y_mean=mat(doc["y_mean"]), y_std=mat(doc["y_std"]),
            meta=doc.get("meta", {}),
        ).check_dims()

    def save(self, path):
        jsonio.dump_file(path, self.to_doc())

    @classmethod
    def load(cls, path):
        return cls.from_doc(jsonio.load_file(path), path)


def predict(model, X):
    """Denormalized predictions for raw feature rows (n, inputs)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_inputs:
        raise DimensionMismatchError(
            f"expected {model.n_inputs} input columns, got {X.shape[1]}"
        )
    _, Yn = model.forward_norm(model.norm_x(X))
    return model.denorm_y(Yn)


def gradient(model, x_row, y_row):
    """Exact gradient of 1/2 ||y_hat - y||^2 in normalized space, one row."""
    x = np.asarray(x_row, dtype=float).ravel()
    y = np.asarray(y_row, dtype=float).ravel()
    if x.shape != (model.n_inputs,) or y.shape != (model.n_outputs,):
        raise DimensionMismatchError("gradient row shapes do not match model")
    xn = (x - model.x_mean) / model.x_std
    yn = (y - model.y_mean) / model.y_std
    h = expit(model.W1 @ xn + model.b1)
    e = model.W2 @ h + model.b2 - yn
    dz = (model.W2.T @ e) * h * (1.0 - h)
    return {
        "W1": np.outer(dz, xn),
        "b1": dz,
        "W2": np.outer(e, h),
        "b2": e,
    }


def loss_norm(model, x_row, y_row):
    """1/2 ||y_hat - y||^2 in normalized space; finite-difference companion."""
    x = np.asarray(x_row, dtype=float).ravel()
    y = np.asarray(y_row, dtype=float).ravel()
    xn = (x - model.x_mean) / model.x_std
    yn = (y - model.y_mean) / model.y_std
    h = expit(model.W1 @ xn + model.b1)
    e = model.W2 @ h + model.b2 - yn
    return 0.5 * float(e @ e)


def fit(train, cfg=None):
    """Train on a Dataset; deterministic per (data, cfg).

    Normalization statistics come from the full training set; a validation
    slice (cfg.validation_fraction of rows, seeded carve) drives early
    stopping, and the weights returned are the best-validation snapshot.
    """
    cfg = cfg or TrainConfig()
    if train.n_rows == 0:
        raise InsufficientRowsError("cannot fit on an empty dataset")

    X, Y = train.X, train.Y
    x_mean, x_std = _norm_stats(X)
    y_mean, y_std = _norm_stats(Y)
    Xn, Yn = (X - x_mean) / x_std, (Y - y_mean) / y_std

    n, n_in = Xn.shape
    n_out = Yn.shape[1]
    hid = cfg.hidden_units

    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = int(round(cfg.validation_fraction * n))
    if n_val >= n:
        n_val = n - 1
    if n_val <= 0:
        warnings.warn("dataset too small for a validation slice; monitoring training loss")
        tr_idx, va_idx = perm, perm
    else:
        va_idx, tr_idx = perm[:n_val], perm[n_val:]
    Xtr, Ytr = Xn[tr_idx], Yn[tr_idx]
    Xva, Yva = Xn[va_idx], Yn[va_idx]

    a1 = np.sqrt(6.0 / (n_in + hid))
    a2 = np.sqrt(6.0 / (hid + n_out))
    W1 = rng.uniform(-a1, a1, size=(hid, n_in))
    b1 = np.zeros(hid)
    W2 = rng.uniform(-a2, a2, size=(n_out, hid))
    b2 = np.zeros(n_out)

    params = [W1, b1, W2, b2]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    t = 0

    def val_mse():
        H = expit(Xva @ W1.T + b1)
        E = H @ W2.T + b2 - Yva
        return float(np.mean(E * E))

    best = val_mse()
    best_params = [p.copy() for p in params]
    best_epoch = 0
    since_best = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(Xtr))
        for start in range(0, len(Xtr), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            Xb, Yb = Xtr[idx], Ytr[idx]
            B = len(idx)

            H = expit(Xb @ W1.T + b1)
            E = H @ W2.T + b2 - Yb
            loss = 0.5 * float(np.mean(np.sum(E * E, axis=1)))
            if not np.isfinite(loss):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, batch row {start}; "
                    f"lr={cfg.learning_rate}, batch={cfg.batch_size}"
                )

            dZ2 = E / B
            gW2 = dZ2.T @ H
            gb2 = dZ2.sum(axis=0)
            dH = dZ2 @ W2
            dZ1 = dH * H * (1.0 - H)
            gW1 = dZ1.T @ Xb
            gb1 = dZ1.sum(axis=0)

            t += 1
            corr1 = 1.0 - ADAM_BETA1 ** t
            corr2 = 1.0 - ADAM_BETA2 ** t
            for p, mi, vi, g in zip(params, m, v, (gW1, gb1, gW2, gb2)):
                mi *= ADAM_BETA1
                mi += (1 - ADAM_BETA1) * g
                vi *= ADAM_BETA2
                vi += (1 - ADAM_BETA2) * g * g
                p -= cfg.learning_rate * (mi / corr1) / (np.sqrt(vi / corr2) + ADAM_EPS)

        cur = val_mse()
        if not np.isfinite(cur):
            raise NonFiniteLossError(f"non-finite validation MSE at epoch {epoch}")
        if cur < best:
            best = cur
            best_params = [p.copy() for p in params]
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    W1, b1, W2, b2 = best_params
    return MlpModel(
        W1=W1, b1=b1, W2=W2, b2=b2,
        x_mean=x_mean, x_std=x_std, y_mean=y_mean, y_std=y_std,
        meta={
            "topology_hash": train.topology_hash,
            "train_config": cfg.as_dict(),
            "seed": cfg.seed,
            "n_train_rows": int(n),
            "best_epoch": best_epoch,
            "best_val_mse": best,
            "feature_names": list(train.feature_names),
            "target_names": list(train.target_names),
        },
    ).check_dims()


@dataclass
class EvalMetrics:
    mse: float
    mean_rel_err: float
    per_pair_rel_err: np.ndarray
    per_sample_rel_err: np.ndarray
    n_rows: int

    def as_dict(self):
        return {
            "mse": self.mse,
            "mean_rel_err": self.mean_rel_err,
            "per_pair_rel_err": [float(v) for v in self.per_pair_rel_err],
            "per_sample_rel_err": [float(v) for v in self.per_sample_rel_err],
            "n_rows": self.n_rows,
        }


def evaluate(model, test):
    """MSE in normalized target space plus relative error in raw space.

    Relative errors are taken over entries with positive ground truth; the
    headline mean_rel_err averages jointly over all such entries.
    """
    if test.n_rows == 0:
        raise InsufficientRowsError("cannot evaluate on an empty dataset")
    Yhat = predict(model, test.X)
    Y = test.Y
    En = model.norm_y(Yhat) - model.norm_y(Y)
    mse = float(np.mean(En * En))

    pos = Y > 0
    rel = np.full_like(Y, np.nan)
    rel[pos] = np.abs(Yhat[pos] - Y[pos]) / Y[pos]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns allowed
        per_pair = np.nanmean(rel, axis=0)
        per_sample = np.nanmean(rel, axis=1)
    return EvalMetrics(
        mse=mse,
        mean_rel_err=float(np.mean(rel[pos])) if pos.any() else float("nan"),
        per_pair_rel_err=per_pair,
        per_sample_rel_err=per_sample,
        n_rows=test.n_rows,
    )


def learning_curve(ds, sizes, cfg=None, test_size=300):
    """Fit once per training-set size against one fixed held-out test split.

    One seeded shuffle defines both the test rows (the tail) and the nested
    training prefixes, so each larger size strictly extends the previous one.
    """
    cfg = cfg or TrainConfig()
    sizes = [int(s) for s in sizes]
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if max(sizes) + test_size > ds.n_rows:
        raise InsufficientRowsError(
            f"need {max(sizes)}+{test_size} rows, dataset has {ds.n_rows}"
        )
    perm = np.random.default_rng(cfg.seed).permutation(ds.n_rows)
    test = ds.take(perm[len(perm) - test_size:])
    rows = []
    for s in sizes:
        model = fit(ds.take(perm[:s]), cfg)
        met = evaluate(model, test)
        rows.append((s, met.mse, met.mean_rel_err))
    return rows


def smoothed(values, window=2):
    """Trailing moving average; the learning-curve acceptance check runs on this."""
    v = np.asarray(values, dtype=float)
    if window <= 1 or len(v) < window:
        return v.copy()
    return np.convolve(v, np.ones(window) / window, mode="valid")
