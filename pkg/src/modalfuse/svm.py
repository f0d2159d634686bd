"""Kernel SVM trained by sequential minimal optimization.

The solver works on the dual soft-margin problem with working pairs chosen
by maximal KKT violation; it stops when the violation gap drops below
``tol``, which bounds every per-sample KKT residual by ``tol``. Decision
values are used raw (no probability calibration) and exact ties classify as
the positive class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import (
    ConvergenceError,
    DegenerateDataError,
    ParameterError,
    ValidationError,
)
from .metrics import accuracy, balanced_accuracy_binary, balanced_accuracy_multiclass

__all__ = [
    "KernelSpec",
    "OneVsRestSvmClassifier",
    "SearchSpace",
    "SmoSvmClassifier",
    "kernel_matrix",
    "kkt_residuals",
    "load_svm",
    "save_svm",
    "tune",
]

_ALPHA_EPS = 1e-9


@dataclass(frozen=True)
class KernelSpec:
    """Kernel selection: 'linear' or 'rbf' with gamma > 0."""

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValidationError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and (self.gamma is None or self.gamma <= 0):
            raise ValidationError("rbf kernel requires gamma > 0")


def kernel_matrix(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if spec.kind == "linear":
        return a @ b.T
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


def _smo_solve(
    K: np.ndarray, y: np.ndarray, C: float, tol: float, max_passes: int
) -> tuple[np.ndarray, float, int]:
    """Maximal-violating-pair SMO on the precomputed kernel matrix.

    Maintains G_t = sum_s alpha_s y_s K_ts; optimality gap is
    max over the 'up' set of (y - G) minus min over the 'down' set.
    """
    n = K.shape[0]
    alpha = np.zeros(n)
    G = np.zeros(n)
    pos = y > 0
    for iteration in range(max_passes):
        crit = y - G
        up = np.where((pos & (alpha < C - _ALPHA_EPS)) | (~pos & (alpha > _ALPHA_EPS)))[0]
        low = np.where((~pos & (alpha < C - _ALPHA_EPS)) | (pos & (alpha > _ALPHA_EPS)))[0]
        if up.size == 0 or low.size == 0:
            break
        i = up[np.argmax(crit[up])]
        j = low[np.argmin(crit[low])]
        gap = crit[i] - crit[j]
        if gap < tol:
            free = (alpha > _ALPHA_EPS) & (alpha < C - _ALPHA_EPS)
            b = float(np.mean(crit[free])) if np.any(free) else float(0.5 * (crit[i] + crit[j]))
            return alpha, b, iteration
        eta = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
        # Platt's pair update; the bias term cancels in E_i - E_j = crit[j] - crit[i].
        alpha_j_new = alpha[j] - y[j] * gap / eta
        if y[i] != y[j]:
            lo, hi = max(0.0, alpha[j] - alpha[i]), min(C, C + alpha[j] - alpha[i])
        else:
            lo, hi = max(0.0, alpha[i] + alpha[j] - C), min(C, alpha[i] + alpha[j])
        alpha_j_new = min(max(alpha_j_new, lo), hi)
        delta_j = alpha_j_new - alpha[j]
        delta_i = -y[i] * y[j] * delta_j
        alpha[i] += delta_i
        alpha[j] = alpha_j_new
        G += delta_i * y[i] * K[i] + delta_j * y[j] * K[j]
    else:
        crit = y - G
        raise ConvergenceError(
            f"SMO did not converge within {max_passes} passes",
            residual=float(crit.max() - crit.min()),
        )
    # All multipliers hit a bound with one side empty: any bias in the feasible
    # band is optimal; use the midpoint of the remaining criteria.
    crit = y - G
    return alpha, float(0.5 * (crit.max() + crit.min())), 0


class SmoSvmClassifier(ClassifierMixin, BaseEstimator):
    """Binary soft-margin SVM solved by SMO.

    Parameters
    ----------
    kernel : 'linear' or 'rbf'
    C : box constraint, > 0
    gamma : rbf width; defaults to 1 / (n_features * X.var()) when None
    tol : KKT violation tolerance at convergence
    max_passes : iteration cap for the pair updates
    """

    def __init__(self, kernel: str = "linear", C: float = 1.0, gamma: float | None = None,
                 tol: float = 1e-3, max_passes: int = 100_000):
        self.kernel = kernel
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes

    def _kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.gamma_ if self.kernel == "rbf" else None)

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        if self.C <= 0:
            raise ParameterError("C must be > 0")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise DegenerateDataError("training data contains a single class")
        if self.classes_.size > 2:
            raise ValidationError("binary classifier got more than two classes; use OneVsRestSvmClassifier")
        if np.all(X == X[0]):
            raise DegenerateDataError("all feature rows are identical; no margin exists")
        y_signed = np.where(y == self.classes_[1], 1.0, -1.0)
        if self.kernel == "rbf":
            var = float(X.var())
            self.gamma_ = self.gamma if self.gamma is not None else 1.0 / (X.shape[1] * var)
        else:
            self.gamma_ = None
        K = kernel_matrix(self._kernel_spec(), X, X)
        alpha, b, n_iter = _smo_solve(K, y_signed, self.C, self.tol, self.max_passes)
        sv = alpha > _ALPHA_EPS
        if not np.any(sv):
            raise DegenerateDataError("no support vectors found")
        self.support_ = np.where(sv)[0]
        self.support_vectors_ = X[sv]
        self.dual_coef_ = alpha[sv] * y_signed[sv]
        self.intercept_ = float(b)
        self.alpha_ = alpha
        self.n_iter_ = n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "support_vectors_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        K = kernel_matrix(self._kernel_spec(), X, self.support_vectors_)
        return K @ self.dual_coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        # Exact zeros classify as the positive class.
        d = self.decision_function(X)
        return np.where(d >= 0, self.classes_[1], self.classes_[0])

    @property
    def coef_(self) -> np.ndarray:
        """Explicit primal weights; defined for the linear kernel only."""
        check_is_fitted(self, "support_vectors_")
        if self.kernel != "linear":
            raise ValidationError("coef_ is only defined for the linear kernel")
        return self.dual_coef_ @ self.support_vectors_


def kkt_residuals(model: SmoSvmClassifier, X, y) -> np.ndarray:
    """Per-sample KKT residuals of a fitted model over its training set."""
    X = np.asarray(X, dtype=np.float64)
    y_signed = np.where(np.asarray(y) == model.classes_[1], 1.0, -1.0)
    yf = y_signed * model.decision_function(X)
    alpha = model.alpha_
    res = np.zeros(len(alpha))
    at_zero = alpha <= _ALPHA_EPS
    at_c = alpha >= model.C - _ALPHA_EPS
    free = ~at_zero & ~at_c
    res[at_zero] = np.maximum(0.0, 1.0 - yf[at_zero])
    res[free] = np.abs(yf[free] - 1.0)
    res[at_c] = np.maximum(0.0, yf[at_c] - 1.0)
    return res


class OneVsRestSvmClassifier(ClassifierMixin, BaseEstimator):
    """Multiclass wrapper: one binary SVM per class, argmax of decision values.

    Ties break toward the smallest class index.
    """

    def __init__(self, kernel: str = "linear", C: float = 1.0, gamma: float | None = None,
                 tol: float = 1e-3, max_passes: int = 100_000):
        self.kernel = kernel
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise DegenerateDataError("training data contains a single class")
        self.estimators_ = []
        for c in self.classes_:
            binary = SmoSvmClassifier(self.kernel, self.C, self.gamma, self.tol, self.max_passes)
            binary.fit(X, (y == c).astype(np.int64))
            self.estimators_.append(binary)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "estimators_")
        return np.stack([est.decision_function(X) for est in self.estimators_], axis=1)

    def predict(self, X) -> np.ndarray:
        d = self.decision_function(X)
        return self.classes_[np.argmax(d, axis=1)]


@dataclass(frozen=True)
class SearchSpace:
    """Seeded hyperparameter search over C and gamma candidates."""

    c_candidates: tuple[float, ...]
    gamma_candidates: tuple[float | None, ...] = (None,)
    trials: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.c_candidates or not self.gamma_candidates:
            raise ValidationError("candidate sets must be non-empty")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")


def _score(objective: str, pred, truth) -> float:
    if objective == "balanced_accuracy":
        k = int(max(np.max(truth), np.max(pred))) + 1
        if k <= 2:
            return balanced_accuracy_binary(pred, truth)
        return balanced_accuracy_multiclass(pred, truth, k)
    if objective == "accuracy":
        return accuracy(pred, truth)
    raise ParameterError(f"unknown tuning objective {objective!r}")


def tune(
    X_train, y_train, X_dev, y_dev,
    space: SearchSpace,
    kernel: str = "rbf",
    objective: str = "balanced_accuracy",
    multiclass: bool = False,
) -> tuple[float, float | None, float]:
    """Pick (C, gamma) maximizing the objective on the dev split.

    Candidates are the C-by-gamma grid; when ``trials`` is smaller than the
    grid, a seeded sample without replacement is evaluated. Returns
    (C, gamma, dev score); ties keep the earliest candidate in grid order.
    """
    grid = [(c, g) for c in space.c_candidates for g in space.gamma_candidates]
    if space.trials < len(grid):
        rng = np.random.default_rng(space.seed)
        picked = sorted(rng.choice(len(grid), size=space.trials, replace=False).tolist())
        grid = [grid[i] for i in picked]
    best = None
    for c, gamma in grid:
        cls = OneVsRestSvmClassifier if multiclass else SmoSvmClassifier
        model = cls(kernel=kernel, C=c, gamma=gamma).fit(X_train, y_train)
        score = _score(objective, model.predict(X_dev), y_dev)
        if best is None or score > best[2]:
            best = (c, gamma, score)
    return best


# --- serialization: JSON manifest + float64 support-vector blob --------------

def _binary_entry(model: SmoSvmClassifier) -> dict:
    return {
        "kernel": model.kernel,
        "C": model.C,
        "gamma": model.gamma_,
        "tol": model.tol,
        "intercept": model.intercept_,
        "dual_coef": model.dual_coef_.tolist(),
        "classes": model.classes_.tolist(),
        "n_support": int(model.support_vectors_.shape[0]),
        "n_features": model.n_features_in_,
    }


def _binary_from_entry(entry: dict, sv: np.ndarray) -> SmoSvmClassifier:
    model = SmoSvmClassifier(kernel=entry["kernel"], C=entry["C"], gamma=entry["gamma"], tol=entry["tol"])
    model.classes_ = np.asarray(entry["classes"])
    model.gamma_ = entry["gamma"]
    model.support_vectors_ = sv
    model.dual_coef_ = np.asarray(entry["dual_coef"], dtype=np.float64)
    model.intercept_ = float(entry["intercept"])
    model.alpha_ = np.abs(model.dual_coef_)
    model.support_ = np.arange(sv.shape[0])
    model.n_features_in_ = int(entry["n_features"])
    return model


def save_svm(model: SmoSvmClassifier | OneVsRestSvmClassifier, base_path: str | Path) -> tuple[Path, Path]:
    base = Path(base_path)
    manifest_path, blob_path = base.with_suffix(".json"), base.with_suffix(".bin")
    estimators = model.estimators_ if isinstance(model, OneVsRestSvmClassifier) else [model]
    entries = []
    offset = 0
    with blob_path.open("wb") as fh:
        for est in estimators:
            sv = np.ascontiguousarray(est.support_vectors_, dtype="<f8")
            fh.write(sv.tobytes())
            entry = _binary_entry(est)
            entry["sv_offset"] = offset
            offset += sv.size
            entries.append(entry)
    manifest = {
        "kind": "one_vs_rest" if isinstance(model, OneVsRestSvmClassifier) else "binary",
        "classes": model.classes_.tolist(),
        "estimators": entries,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path, blob_path


def load_svm(base_path: str | Path) -> SmoSvmClassifier | OneVsRestSvmClassifier:
    base = Path(base_path)
    manifest = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    blob = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8")
    estimators = []
    for entry in manifest["estimators"]:
        n_sv, n_feat = entry["n_support"], entry["n_features"]
        sv = blob[entry["sv_offset"]:entry["sv_offset"] + n_sv * n_feat].reshape(n_sv, n_feat).copy()
        estimators.append(_binary_from_entry(entry, sv))
    if manifest["kind"] == "binary":
        return estimators[0]
    first = manifest["estimators"][0]
    ovr = OneVsRestSvmClassifier(kernel=first["kernel"], C=first["C"], gamma=first["gamma"], tol=first["tol"])
    ovr.classes_ = np.asarray(manifest["classes"])
    ovr.estimators_ = estimators
    ovr.n_features_in_ = first["n_features"]
    return ovr
