"""One-class nu-SVM with a polynomial kernel.

The dual problem

    min_a  1/2 a^T K a   s.t.  0 <= a_i <= 1 / (nu * n),  sum_i a_i = 1

is solved by SMO-style pairwise updates on the maximal-violating pair.
The decision function is ``f(x) = sum_i a_i K(x_i, x) - rho``; ``f >= 0``
means bona fide.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, EmptyTrainingSet, NonConverged

MODEL_VERSION = 1
BONA_FIDE = "bonafide"
ATTACK = "attack"


@dataclass(frozen=True)
class KernelParams:
    degree: int = 3
    gamma: Optional[float] = None  # None = 1 / n_features
    coef0: float = 1.0

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def resolved(self, n_features: int) -> "KernelParams":
        if self.gamma is not None:
            return self
        return KernelParams(self.degree, 1.0 / n_features, self.coef0)


def _dots(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # fixed-order loops (no BLAS) keep results independent of thread count
    return np.einsum("ik,jk->ij", a, b, optimize=False)


def poly_kernel(x, y, params: KernelParams) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionMismatch(f"kernel arguments differ in size: {x.size} vs {y.size}")
    p = params.resolved(x.size)
    return float((p.gamma * float(_dots(x[None], y[None])[0, 0]) + p.coef0) ** p.degree)


def kernel_matrix(a: np.ndarray, b: np.ndarray, params: KernelParams) -> np.ndarray:
    p = params.resolved(a.shape[1])
    return (p.gamma * _dots(a, b) + p.coef0) ** p.degree


@dataclass(frozen=True)
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != len(self.mean):
            raise DimensionMismatch(f"expected {len(self.mean)} features, got {x.shape[-1]}")
        return (x - self.mean) / self.std

    def invert(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


def fit_scaler(features, center: bool = True) -> FeatureScaler:
    """Per-dimension z-score from the training set.

    Constant dimensions keep unit std. With ``center=False`` the mean is
    fixed at zero and each dimension is divided by its RMS (the "spread"
    scaling of PipelineConfig).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise EmptyTrainingSet("no training features")
    mean = x.mean(axis=0) if center else np.zeros(x.shape[1])
    std = x.std(axis=0) if center else np.sqrt((x**2).mean(axis=0))
    scale = np.maximum(np.abs(x).max(axis=0), 1e-300)
    std = np.where(std <= 1e-9 * scale, 1.0, std)
    return FeatureScaler(mean, std)


def apply_scaler(scaler: FeatureScaler, feature) -> np.ndarray:
    return scaler.apply(feature)


@dataclass(frozen=True)
class OneClassModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    rho: float
    kernel: KernelParams
    scaler: FeatureScaler
    nu: float
    n_train: int = 0
    n_iter: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {x.shape[1]}")
        z = self.scaler.apply(x)
        k = kernel_matrix(z, self.support_vectors, self.kernel)
        return np.einsum("ij,j->i", k, self.alphas, optimize=False) - self.rho


def dual_objective(alphas: np.ndarray, kmat: np.ndarray) -> float:
    return 0.5 * float(alphas @ kmat @ alphas)


def _solve_dual(q: np.ndarray, upper: float, tol: float, max_iter: int):
    n = len(q)
    alpha = np.full(n, 1.0 / n)
    grad = np.einsum("ij,j->i", q, alpha, optimize=False)
    diag = np.diag(q).copy()
    eps = 1e-12 * upper
    for it in range(max_iter):
        up = alpha < upper - eps
        low = alpha > eps
        gi = np.where(up, grad, np.inf)
        gj = np.where(low, grad, -np.inf)
        i = int(np.argmin(gi))
        j = int(np.argmax(gj))
        if gj[j] - gi[i] < tol:
            return alpha, grad, it
        quad = diag[i] + diag[j] - 2 * q[i, j]
        step = (grad[j] - grad[i]) / max(quad, 1e-12)
        step = min(step, upper - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        grad += step * (q[:, i] - q[:, j])
    raise NonConverged(f"SMO did not converge in {max_iter} steps")


def _offset(alpha, grad, upper, eps):
    free = (alpha > eps) & (alpha < upper - eps)
    if free.any():
        # the smallest margin value, not the mean: no margin vector may fall
        # below zero through solver tolerance
        return float(grad[free].min())
    at_upper = alpha >= upper - eps
    at_zero = alpha <= eps
    hi = grad[at_zero].min() if at_zero.any() else grad.max()
    lo = grad[at_upper].max() if at_upper.any() else grad.min()
    return float(0.5 * (hi + lo))


def train_ocsvm(features, nu: float = 0.05, kernel: KernelParams = KernelParams(),
                tol: float = 1e-6, max_iter: int = 100_000,
                center: bool = True) -> OneClassModel:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise EmptyTrainingSet("one-class SVM needs at least one bona fide training vector")
    if not 0 < nu <= 1:
        raise ValueError("nu must lie in (0, 1]")
    n = len(x)
    scaler = fit_scaler(x, center=center)
    z = scaler.apply(x)
    kp = kernel.resolved(x.shape[1])
    q = kernel_matrix(z, z, kp)
    upper = 1.0 / (nu * n)
    alpha, grad, n_iter = _solve_dual(q, upper, tol, max_iter)
    keep = alpha > 0
    # recompute the gradient exactly as decision() will evaluate it
    grad = np.einsum("ij,j->i", kernel_matrix(z, z[keep], kp), alpha[keep], optimize=False)
    rho = _offset(alpha, grad, upper, 1e-12 * upper)
    return OneClassModel(z[keep], alpha[keep], rho, kp, scaler, float(nu), n, n_iter)


def score(model: OneClassModel, feature) -> float:
    return float(model.decision(feature)[0])


def classify(model: OneClassModel, feature, threshold: float = 0.0) -> str:
    return BONA_FIDE if score(model, feature) >= threshold else ATTACK


# ---- model file ------------------------------------------------------------

def _num(v: float) -> str:
    return format(float(v), ".17g")


def _dump(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_dump(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)) or isinstance(obj, str) or obj is None:
        return json.dumps(obj if not isinstance(obj, np.bool_) else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    return _num(obj)


def model_to_json(model: OneClassModel) -> str:
    doc = {
        "version": MODEL_VERSION,
        "nu": model.nu,
        "kernel": {"degree": model.kernel.degree, "gamma": model.kernel.gamma,
                   "coef0": model.kernel.coef0},
        "scaler": {"mean": model.scaler.mean, "std": model.scaler.std},
        "support_vectors": model.support_vectors,
        "alphas": model.alphas,
        "rho": model.rho,
        "n_train": model.n_train,
    }
    return _dump(doc) + "\n"


def model_from_json(text: str) -> OneClassModel:
    doc = json.loads(text)
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    k = doc["kernel"]
    sv = np.asarray(doc["support_vectors"], dtype=np.float64).reshape(len(doc["alphas"]), -1)
    return OneClassModel(
        support_vectors=sv,
        alphas=np.asarray(doc["alphas"], dtype=np.float64),
        rho=float(doc["rho"]),
        kernel=KernelParams(int(k["degree"]), float(k["gamma"]), float(k["coef0"])),
        scaler=FeatureScaler(np.asarray(doc["scaler"]["mean"], dtype=np.float64),
                             np.asarray(doc["scaler"]["std"], dtype=np.float64)),
        nu=float(doc["nu"]),
        n_train=int(doc.get("n_train", 0)),
    )


def save_model(model: OneClassModel, path) -> None:
    from .formats import atomic_write_text
    atomic_write_text(Path(path), model_to_json(model))


def load_model(path) -> OneClassModel:
    return model_from_json(Path(path).read_text())
