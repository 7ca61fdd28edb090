# graphids/services/learner.py - Feature scaling and soft-margin RBF SVM trained with SMO
"""Dual soft-margin SVM with an RBF kernel.

The solver is a sequential minimal optimisation loop with second-order
working-set selection. Kernel rows are served from the shared LRU
``RowCache``; when the whole Gram matrix fits the byte budget it is
computed once up front.
"""
import json
import os
import zipfile
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.metrics.pairwise import rbf_kernel
from sklearn.utils import gen_batches

from ..errors import LearnerError, ModelFormatError
from ..extensions import RowCache, logger

MODEL_FORMAT_VERSION = 1
DEFAULT_CACHE_BYTES = 256 * 1024 * 1024
PREDICT_BATCH = 4096
TAU = 1e-12


@dataclass(frozen=True)
class Scaler:
    means: np.ndarray
    stds: np.ndarray
    mask: np.ndarray

    @property
    def scaled(self) -> np.ndarray:
        """Columns actually transformed: masked and with non-zero variance"""
        return self.mask & (self.stds > 0)

    def restrict(self, columns: Sequence[int]) -> "Scaler":
        columns = list(columns)
        return Scaler(self.means[columns].copy(), self.stds[columns].copy(), self.mask[columns].copy())

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist(), "mask": self.mask.tolist()}


def fit_scaler(x, mask) -> Scaler:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise LearnerError("cannot fit a scaler on an empty matrix")

    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (x.shape[1],):
        raise LearnerError(f"scaler mask has {mask.size} entries for {x.shape[1]} columns")

    # Population statistics of the training set
    means = x.mean(axis=0)
    stds = x.std(axis=0)
    return Scaler(means, stds, mask)


def apply_scaler(s: Scaler, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != s.mask.size:
        raise LearnerError(f"scaler expects {s.mask.size} columns, got shape {x.shape}")

    out = x.copy()
    cols = s.scaled
    out[:, cols] = (x[:, cols] - s.means[cols]) / s.stds[cols]
    return out


def rbf(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise LearnerError(f"rbf needs rows of equal length, got {x.size} and {y.size}")
    if gamma <= 0:
        raise LearnerError(f"gamma must be positive, got {gamma}")
    diff = x - y
    return float(np.exp(-gamma * np.dot(diff, diff)))


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    gamma: float
    c: float
    scaler: Optional[Scaler] = None
    feature_mask: Tuple[int, ...] = ()
    feature_names: Tuple[str, ...] = ()
    support_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    iterations: int = 0
    converged: bool = True

    @property
    def n_support(self) -> int:
        return int(self.dual_coefs.size)

    @property
    def n_features(self) -> int:
        return int(self.support_vectors.shape[1])

    def decision_function(self, x) -> np.ndarray:
        return decision_function(self, x)

    def predict(self, x) -> np.ndarray:
        return predict(self, x)


class _KernelRows:
    """Kernel rows of the training matrix, precomputed or LRU-cached"""

    def __init__(self, x: np.ndarray, gamma: float, cache_bytes: int):
        self.x = x
        self.gamma = gamma
        n = x.shape[0]
        self.full = None
        self.cache = None

        if n * n * 8 <= cache_bytes:
            self.full = rbf_kernel(x, x, gamma=gamma)
            logger.debug(f"Precomputed {n}x{n} Gram matrix")
        else:
            self.cache = RowCache(cache_bytes)
            logger.debug(f"Kernel rows served from an LRU cache of {cache_bytes} bytes")

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        return self.cache.get_or_compute(i, lambda: rbf_kernel(self.x[i:i + 1], self.x, gamma=self.gamma)[0])

    def diagonal(self) -> np.ndarray:
        if self.full is not None:
            return np.diag(self.full).copy()
        # exp(0) for every row against itself
        return np.ones(self.x.shape[0])


def _check_training_input(x, y, c: float, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] == 0:
        raise LearnerError("training matrix must be a non-empty 2-d array")
    if y.shape != (x.shape[0],):
        raise LearnerError(f"{y.size} labels for {x.shape[0]} training rows")
    if not np.isfinite(x).all():
        raise LearnerError("training matrix contains non-finite values")
    if not np.isin(y, (-1, 1)).all():
        raise LearnerError("labels must be -1 (benign) or +1 (malicious)")
    if np.unique(y).size < 2:
        raise LearnerError("training data must contain both classes")
    if c <= 0 or gamma <= 0:
        raise LearnerError(f"C and gamma must be positive, got C={c} gamma={gamma}")
    return x, y.astype(float)


def _select_working_set(y, alpha, grad, c, qd, kernel, tol):
    """Second-order selection of the maximal violating pair; None once optimal"""
    y_grad = -y * grad
    up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < c))
    if not up.any() or not low.any():
        return None

    up_idx = np.flatnonzero(up)
    i = int(up_idx[np.argmax(y_grad[up_idx])])
    g_max = y_grad[i]

    low_idx = np.flatnonzero(low)
    g_min = y_grad[low_idx].min()
    if g_max - g_min < tol:
        return None

    k_i = kernel.row(i)
    grad_diff = g_max - y_grad[low_idx]
    candidates = grad_diff > 0
    if not candidates.any():
        return None

    low_idx, grad_diff = low_idx[candidates], grad_diff[candidates]
    quad = qd[i] + qd[low_idx] - 2.0 * k_i[low_idx]
    quad = np.where(quad > 0, quad, TAU)
    j = int(low_idx[np.argmin(-(grad_diff ** 2) / quad)])
    return i, j


def _update_pair(i, j, y, alpha, grad, c, qd, k_ij):
    """Analytic two-variable step, clipped to the box [0, C]"""
    ai, aj = alpha[i], alpha[j]
    quad = qd[i] + qd[j] - 2.0 * k_ij
    quad = quad if quad > 0 else TAU

    if y[i] != y[j]:
        delta = (-grad[i] - grad[j]) / quad
        diff = ai - aj
        ai += delta
        aj += delta
        if diff > 0:
            if aj < 0:
                aj, ai = 0.0, diff
        elif ai < 0:
            ai, aj = 0.0, -diff
        if diff > 0:
            if ai > c:
                ai, aj = c, c - diff
        elif aj > c:
            aj, ai = c, c + diff
    else:
        delta = (grad[i] - grad[j]) / quad
        total = ai + aj
        ai -= delta
        aj += delta
        if total > c:
            if ai > c:
                ai, aj = c, total - c
        elif aj < 0:
            aj, ai = 0.0, total
        if total > c:
            if aj > c:
                aj, ai = c, total - c
        elif ai < 0:
            ai, aj = 0.0, total

    return ai, aj


def _compute_rho(y, alpha, grad, c) -> float:
    y_grad = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        return float(y_grad[free].mean())

    at_upper = alpha >= c
    # Bounds on rho from the points sitting at either end of the box
    ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
    ub = y_grad[ub_mask].min() if ub_mask.any() else np.inf
    lb = y_grad[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2)


def train(x, y, c: float, gamma: float, tol: float = 1e-3, max_passes: int = 10,
          cache_bytes: int = DEFAULT_CACHE_BYTES, scaler: Optional[Scaler] = None,
          feature_mask: Sequence[int] = (), feature_names: Sequence[str] = ()) -> SvmModel:
    """Solve the soft-margin dual for labels in {-1, +1}.

    Iteration stops when the maximal KKT violation drops below ``tol`` or
    after ``max_passes * max(n, 10000)`` pair updates, in which case the
    returned model is flagged as not converged.
    """
    x, y = _check_training_input(x, y, c, gamma)
    n = x.shape[0]

    kernel = _KernelRows(x, gamma, cache_bytes)
    qd = kernel.diagonal()
    alpha = np.zeros(n)
    grad = -np.ones(n)

    max_iter = max_passes * max(n, 10000)
    iterations = 0
    converged = False
    logger.info(f"Training RBF SVM on {n} samples x {x.shape[1]} features (C={c:g}, gamma={gamma:g})")

    while iterations < max_iter:
        pair = _select_working_set(y, alpha, grad, c, qd, kernel, tol)
        if pair is None:
            converged = True
            break
        i, j = pair
        iterations += 1

        k_i, k_j = kernel.row(i), kernel.row(j)
        old_ai, old_aj = alpha[i], alpha[j]
        alpha[i], alpha[j] = _update_pair(i, j, y, alpha, grad, c, qd, k_i[j])

        d_ai, d_aj = alpha[i] - old_ai, alpha[j] - old_aj
        grad += y * (y[i] * k_i * d_ai + y[j] * k_j * d_aj)

    if not converged:
        logger.warning(f"SMO stopped at the iteration cap ({max_iter}) before reaching tol={tol:g}")

    rho = _compute_rho(y, alpha, grad, c)
    support = np.flatnonzero(alpha > 0)
    if support.size == 0:
        raise LearnerError("solver produced no support vectors")

    if kernel.cache is not None:
        logger.debug(f"Kernel cache hits={kernel.cache.hits} misses={kernel.cache.misses}")
    logger.info(f"✅ SMO finished after {iterations} iterations with {support.size} support vectors")

    return SvmModel(
        support_vectors=x[support].copy(),
        dual_coefs=alpha[support] * y[support],
        bias=-rho,
        gamma=float(gamma),
        c=float(c),
        scaler=scaler,
        feature_mask=tuple(int(f) for f in feature_mask),
        feature_names=tuple(feature_names),
        support_indices=support.astype(np.int64),
        iterations=iterations,
        converged=converged,
    )


def decision_function(m: SvmModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != m.n_features:
        raise LearnerError(f"model expects {m.n_features} features, got {x.shape[1]}")

    if m.scaler is not None:
        x = apply_scaler(m.scaler, x)

    out = np.empty(x.shape[0])
    for batch in gen_batches(x.shape[0], PREDICT_BATCH):
        out[batch] = rbf_kernel(x[batch], m.support_vectors, gamma=m.gamma) @ m.dual_coefs + m.bias
    return out


def predict(m: SvmModel, x) -> np.ndarray:
    """Labels in {-1, +1}; a decision value of exactly 0 raises the alarm"""
    return np.where(decision_function(m, x) >= 0, 1, -1)


def kkt_violation(x, y, m: SvmModel) -> float:
    """Largest KKT violation of a model on the data it was trained on"""
    x, y = _check_training_input(x, y, m.c, m.gamma)
    if m.scaler is not None:
        raise LearnerError("kkt_violation expects a model trained on prepared features")

    alpha = np.zeros(x.shape[0])
    alpha[m.support_indices] = np.abs(m.dual_coefs)
    margin = y * decision_function(m, x) - 1.0

    at_lower = alpha <= 0
    at_upper = alpha >= m.c
    free = ~at_lower & ~at_upper
    violation = np.zeros_like(margin)
    violation[at_lower] = np.maximum(-margin[at_lower], 0)
    violation[at_upper] = np.maximum(margin[at_upper], 0)
    violation[free] = np.abs(margin[free])
    return float(violation.max())


def save_model(m: SvmModel, path):
    """Write an .npz container without pickles and with fixed zip timestamps"""
    metadata = {
        "format_version": MODEL_FORMAT_VERSION,
        "gamma": m.gamma,
        "c": m.c,
        "bias": m.bias,
        "feature_mask": list(m.feature_mask),
        "feature_names": list(m.feature_names),
        "iterations": m.iterations,
        "converged": m.converged,
        "scaled": m.scaler is not None,
    }
    arrays = {
        "support_vectors": m.support_vectors,
        "dual_coefs": m.dual_coefs,
        "support_indices": m.support_indices,
        "metadata": np.array(json.dumps(metadata, sort_keys=True)),
    }
    if m.scaler is not None:
        arrays.update(scaler_means=m.scaler.means, scaler_stds=m.scaler.stds, scaler_mask=m.scaler.mask)

    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        for name in sorted(arrays):
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            with archive.open(info, "w") as handle:
                np.lib.format.write_array(handle, np.asarray(arrays[name]), allow_pickle=False)

    logger.info(f"💾 Saved model with {m.n_support} support vectors to {os.fspath(path)}")


def load_model(path) -> SvmModel:
    try:
        with np.load(path, allow_pickle=False) as data:
            metadata = json.loads(str(data["metadata"].item()))
            arrays = {name: data[name] for name in data.files}
    except FileNotFoundError:
        raise
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as e:
        raise ModelFormatError(f"cannot read model file {os.fspath(path)}: {e}") from e

    if metadata.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {metadata.get('format_version')!r}")

    try:
        scaler = None
        if metadata["scaled"]:
            scaler = Scaler(arrays["scaler_means"], arrays["scaler_stds"], arrays["scaler_mask"].astype(bool))
        model = SvmModel(
            support_vectors=arrays["support_vectors"].astype(float),
            dual_coefs=arrays["dual_coefs"].astype(float),
            bias=float(metadata["bias"]),
            gamma=float(metadata["gamma"]),
            c=float(metadata["c"]),
            scaler=scaler,
            feature_mask=tuple(metadata["feature_mask"]),
            feature_names=tuple(metadata["feature_names"]),
            support_indices=arrays["support_indices"].astype(np.int64),
            iterations=int(metadata["iterations"]),
            converged=bool(metadata["converged"]),
        )
    except KeyError as e:
        raise ModelFormatError(f"model file {os.fspath(path)} lacks entry {e}") from e

    if model.support_vectors.ndim != 2 or model.support_vectors.shape[0] != model.dual_coefs.size:
        raise ModelFormatError("support vectors and dual coefficients disagree in length")
    if model.dual_coefs.size == 0:
        raise ModelFormatError("model has no support vectors")
    return model


class RbfSvmClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn estimator around train/predict for the model-selection utilities"""

    def __init__(self, C: float = 1.0, gamma: float = 1.0, tol: float = 1e-3, max_passes: int = 10,
                 cache_bytes: int = DEFAULT_CACHE_BYTES):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes
        self.cache_bytes = cache_bytes

    def fit(self, X, y):
        self.model_ = train(X, y, c=self.C, gamma=self.gamma, tol=self.tol,
                            max_passes=self.max_passes, cache_bytes=self.cache_bytes)
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = self.model_.n_features
        return self

    @property
    def n_support_(self) -> np.ndarray:
        """Support vectors per class, benign first"""
        coefs = self.model_.dual_coefs
        return np.array([int((coefs < 0).sum()), int((coefs > 0).sum())])

    def decision_function(self, X) -> np.ndarray:
        return decision_function(self.model_, X)

    def predict(self, X) -> np.ndarray:
        return predict(self.model_, X)


__all__ = [
    "Scaler",
    "fit_scaler",
    "apply_scaler",
    "rbf",
    "SvmModel",
    "train",
    "predict",
    "decision_function",
    "kkt_violation",
    "save_model",
    "load_model",
    "RbfSvmClassifier",
]
