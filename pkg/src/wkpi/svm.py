"""Kernel SVM on precomputed Gram matrices.

A small SMO solver with maximal-violating-pair working-set selection,
which is deterministic for fixed inputs, plus a one-vs-rest wrapper for
multiclass problems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SvmModel:
    """Binary dual solution; ``dual_coefficients`` are alpha_i * y_i."""

    support_indices: np.ndarray
    dual_coefficients: np.ndarray
    bias: float
    regularization: float
    train_size: int


def train_svm(gram: np.ndarray, labels, C: float, tol: float = 1e-6) -> SvmModel:
    """Solve the soft-margin dual on a precomputed kernel matrix.

    ``labels`` must be a +/-1 vector with both signs present; the Gram
    matrix must be symmetric.  The working pair is always the maximal
    violating pair, so the solution is deterministic.
    """
    gram = np.asarray(gram, dtype=float)
    y = np.asarray(labels, dtype=float)
    n = y.shape[0]
    if gram.shape != (n, n):
        raise ValueError("gram matrix shape does not match label count")
    if not np.allclose(gram, gram.T, rtol=0.0, atol=1e-8 * max(1.0, np.abs(gram).max())):
        raise ValueError("gram matrix is not symmetric")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.all(y == y[0]):
        raise ValueError("both label signs must be present")
    if C <= 0:
        raise ValueError("C must be positive")

    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a^T Q a - e^T a at a = 0
    diag = np.diag(gram).copy()

    max_iters = max(10_000, 200 * n)
    for _ in range(max_iters):
        crit = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            break
        i = int(np.flatnonzero(up)[crit[up].argmax()])
        j = int(np.flatnonzero(low)[crit[low].argmin()])
        if crit[i] - crit[j] <= tol:
            break
        quad = diag[i] + diag[j] - 2.0 * gram[i, j]
        quad = max(quad, 1e-12)
        delta = (crit[i] - crit[j]) / quad
        # keep both variables in the box; the pair move preserves y^T a = 0
        delta = min(delta, C - alpha[i] if y[i] > 0 else alpha[i])
        delta = min(delta, alpha[j] if y[j] > 0 else C - alpha[j])
        alpha[i] += y[i] * delta
        alpha[j] -= y[j] * delta
        grad += delta * y * (gram[i] - gram[j])

    crit = -y * grad
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y < 0) & (alpha < C)) | ((y > 0) & (alpha > 0))
    hi = crit[up].max() if up.any() else 0.0
    lo = crit[low].min() if low.any() else 0.0
    bias = 0.5 * (hi + lo)

    support = np.flatnonzero(alpha > 0)
    return SvmModel(
        support_indices=support,
        dual_coefficients=alpha[support] * y[support],
        bias=float(bias),
        regularization=float(C),
        train_size=n,
    )


def decision_value(model: SvmModel, kernel_row: np.ndarray) -> float:
    row = np.asarray(kernel_row, dtype=float)
    if row.shape != (model.train_size,):
        raise ValueError(
            f"kernel row length {row.shape} does not match training size {model.train_size}"
        )
    return float(model.dual_coefficients @ row[model.support_indices] + model.bias)


def predict(model: SvmModel, kernel_row: np.ndarray):
    """(label, margin) for one kernel row over the training set; ties go to +1."""
    margin = decision_value(model, kernel_row)
    return (1 if margin >= 0.0 else -1), margin


@dataclass
class MulticlassModel:
    """One-vs-rest ensemble; prediction is the argmax margin, ties to the smaller id."""

    models: list
    class_count: int


def one_vs_rest(gram: np.ndarray, labels, C: float, tol: float = 1e-6) -> MulticlassModel:
    labels = np.asarray(labels, dtype=np.intp)
    k = int(labels.max()) + 1
    if k < 2:
        raise ValueError("need at least two classes")
    models = []
    for t in range(k):
        mask = labels == t
        if not mask.any():
            raise ValueError(f"class {t} is empty")
        y = np.where(mask, 1.0, -1.0)
        models.append(train_svm(gram, y, C, tol))
    return MulticlassModel(models=models, class_count=k)


def predict_multiclass(model: MulticlassModel, kernel_rows: np.ndarray) -> np.ndarray:
    """Predicted class ids for a (n_test, n_train) block of kernel rows."""
    rows = np.atleast_2d(np.asarray(kernel_rows, dtype=float))
    margins = np.empty((rows.shape[0], model.class_count))
    for t, m in enumerate(model.models):
        margins[:, t] = [decision_value(m, row) for row in rows]
    return margins.argmax(axis=1)
