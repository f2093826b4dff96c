"""Weighted persistence-image kernels, distances, and the trace-form cost.

The kernel between two images compares pixels through a Gaussian and
weighs each pixel by a learnable weight function evaluated at the pixel
center.  Squared kernel distances feed a clustering-style cost whose
matrix form (k - Tr(H L H^T) with H G H^T = I) is minimized to learn the
weight; both the direct and the matrix form are implemented and checked
against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .weights import GaussianMixtureWeight, eval_weight, weight_jacobian

_VARIANTS = ("wkpi", "alt-wkpi")


class DegenerateClassError(ValueError):
    """A class whose total squared distance to the batch is zero."""


class GridMismatchError(ValueError):
    """Kernel operands live on different grids."""


@dataclass(frozen=True)
class WkpiParams:
    """Kernel bandwidth, weight function, and kernel variant.

    ``kernel_variant="wkpi"`` weighs each pixel's Gaussian term by the
    weight function; ``"alt-wkpi"`` moves the weight inside the exponent.
    """

    kernel_sigma: float
    weight: GaussianMixtureWeight
    kernel_variant: str = "wkpi"

    def __post_init__(self):
        if self.kernel_sigma <= 0:
            raise ValueError("kernel_sigma must be positive")
        if self.kernel_variant not in _VARIANTS:
            raise ValueError(f"kernel_variant must be one of {_VARIANTS}")


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("persistence images live on different grids")


def image_matrix(images):
    """Stack images sharing one grid into an (n, N) matrix; returns (matrix, grid)."""
    if not images:
        raise ValueError("no images given")
    grid = images[0].grid
    for img in images[1:]:
        if img.grid != grid:
            raise GridMismatchError("persistence images live on different grids")
    return np.array([img.pixels for img in images]), grid


def wkpi_kernel(a, b, p: WkpiParams) -> float:
    """Weighted kernel  sum_s w(p_s) * exp(-(PI(s) - PI'(s))^2 / (2 sigma^2))."""
    _check_same_grid(a, b)
    omega = eval_weight(p.weight, a.grid.centers)
    diff2 = (a.pixels - b.pixels) ** 2
    return float(omega @ np.exp(-diff2 / (2.0 * p.kernel_sigma**2)))


def alt_wkpi_kernel(a, b, p: WkpiParams) -> float:
    """Variant with the weight inside the exponent:
    sum_s exp(-w(p_s) (PI(s) - PI'(s))^2 / (2 sigma^2))."""
    _check_same_grid(a, b)
    omega = eval_weight(p.weight, a.grid.centers)
    diff2 = (a.pixels - b.pixels) ** 2
    return float(np.exp(-omega * diff2 / (2.0 * p.kernel_sigma**2)).sum())


def kernel_value(a, b, p: WkpiParams) -> float:
    if p.kernel_variant == "wkpi":
        return wkpi_kernel(a, b, p)
    return alt_wkpi_kernel(a, b, p)


def _squared_distance_rows(pixmat, i, omega, p: WkpiParams) -> np.ndarray:
    """Row i of the squared-distance matrix, computed in the cancellation-free form."""
    delta2 = (pixmat - pixmat[i]) ** 2
    if p.kernel_variant == "wkpi":
        return 2.0 * ((-np.expm1(-delta2 / (2.0 * p.kernel_sigma**2))) @ omega)
    return -2.0 * np.expm1(-omega * delta2 / (2.0 * p.kernel_sigma**2)).sum(axis=1)


def wkpi_distance(a, b, p: WkpiParams) -> float:
    """Kernel-induced pseudo-metric sqrt(k(a,a) + k(b,b) - 2 k(a,b)).

    Evaluated in the equivalent form 2 * sum_s w_s (1 - e^...) which cannot
    go negative; a radicand below -1e-12 would indicate an internal error.
    """
    _check_same_grid(a, b)
    omega = eval_weight(p.weight, a.grid.centers)
    delta2 = (a.pixels - b.pixels) ** 2
    if p.kernel_variant == "wkpi":
        radicand = 2.0 * float((-np.expm1(-delta2 / (2.0 * p.kernel_sigma**2))) @ omega)
    else:
        radicand = -2.0 * float(
            np.expm1(-omega * delta2 / (2.0 * p.kernel_sigma**2)).sum()
        )
    if radicand < -1e-12:
        raise RuntimeError(f"negative squared distance {radicand}")
    return float(np.sqrt(max(radicand, 0.0)))


def gram_matrix(images, p: WkpiParams) -> np.ndarray:
    """Kernel matrix of a list of images on a shared grid.

    Symmetric with all diagonal entries equal to sum_s w(p_s) (wkpi) or N
    (alt variant); positive semi-definite for non-negative weights.
    """
    pixmat, grid = image_matrix(images)
    omega = eval_weight(p.weight, grid.centers)
    n = pixmat.shape[0]
    gram = np.empty((n, n))
    inv = 1.0 / (2.0 * p.kernel_sigma**2)
    for i in range(n):
        delta2 = (pixmat[i:] - pixmat[i]) ** 2
        if p.kernel_variant == "wkpi":
            row = np.exp(-delta2 * inv) @ omega
        else:
            row = np.exp(-omega * delta2 * inv).sum(axis=1)
        gram[i, i:] = row
        gram[i:, i] = row
    return gram


def squared_distance_matrix(images, p: WkpiParams) -> np.ndarray:
    pixmat, grid = image_matrix(images)
    omega = eval_weight(p.weight, grid.centers)
    n = pixmat.shape[0]
    lam = np.empty((n, n))
    for i in range(n):
        lam[i] = _squared_distance_rows(pixmat, i, omega, p)
        lam[i, i] = 0.0
    return lam


def _class_masks(labels, class_count=None):
    labels = np.asarray(labels, dtype=np.intp)
    k = int(labels.max()) + 1 if class_count is None else class_count
    masks = [labels == t for t in range(k)]
    for t, mask in enumerate(masks):
        if not mask.any():
            raise ValueError(f"class {t} is empty")
    return labels, k, masks


@dataclass(frozen=True, eq=False)
class CostMatrices:
    """The four matrices of the trace-form cost for one labelled batch.

    lambda_ holds squared kernel distances, g its diagonal row sums,
    l = g - lambda_ the Laplacian, and h the k x n class-indicator matrix
    scaled by 1/sqrt(cost(t, .)).
    """

    lambda_: np.ndarray
    g: np.ndarray
    l: np.ndarray
    h: np.ndarray


def build_cost_matrices(images, labels, p: WkpiParams) -> CostMatrices:
    lam = squared_distance_matrix(images, p)
    labels, k, masks = _class_masks(labels)
    n = lam.shape[0]
    if n < 2:
        raise ValueError("need at least two images")
    row_sums = lam.sum(axis=1)
    g = np.diag(row_sums)
    laplacian = g - lam
    h = np.zeros((k, n))
    for t, mask in enumerate(masks):
        cost_to_all = row_sums[mask].sum()
        if cost_to_all <= 0.0:
            raise DegenerateClassError(
                f"class {t} has zero total squared distance to the batch"
            )
        h[t, mask] = 1.0 / np.sqrt(cost_to_all)
    return CostMatrices(lambda_=lam, g=g, l=laplacian, h=h)


def total_cost_direct(images, labels, p: WkpiParams) -> float:
    """Total cost straight from its definition: sum_t cost(t,t) / cost(t,.)."""
    lam = squared_distance_matrix(images, p)
    labels, k, masks = _class_masks(labels)
    tc = 0.0
    for t, mask in enumerate(masks):
        cost_tt = lam[np.ix_(mask, mask)].sum()
        cost_to_all = lam[mask].sum()
        if cost_to_all <= 0.0:
            raise DegenerateClassError(
                f"class {t} has zero total squared distance to the batch"
            )
        tc += cost_tt / cost_to_all
    return float(tc)


def total_cost_matrix(cm: CostMatrices, k: int) -> float:
    """Matrix form of the total cost: k - Tr(H L H^T)."""
    if cm.h.shape[0] != k:
        raise ValueError("class count does not match the indicator matrix")
    return float(k - np.trace(cm.h @ cm.l @ cm.h.T))


def mixture_penalty(weight: GaussianMixtureWeight, c: float) -> float:
    """Soft barrier c * sum_r exp(-w_r) keeping coefficients non-negative."""
    return float(c * np.exp(-weight.coefficients).sum())


def mixture_penalty_gradient(weight: GaussianMixtureWeight, c: float) -> np.ndarray:
    grad = np.zeros(4 * weight.component_count)
    grad[3::4] = -c * np.exp(-weight.coefficients)
    return grad


class CostModel:
    """Per-batch workspace for evaluating the total cost and its gradient.

    For the wkpi variant the squared distances are linear in the weight
    values at the pixel centers, so per-class per-pixel sums are
    accumulated once (the O(batch^2 N) step); every cost or gradient
    evaluation afterwards is O((m + k) N).  The alt variant is not linear
    in the weight and pays the pairwise pass per evaluation.
    """

    def __init__(self, pixmat, labels, centers, kernel_sigma, variant="wkpi", class_count=None):
        if kernel_sigma <= 0:
            raise ValueError("kernel_sigma must be positive")
        if variant not in _VARIANTS:
            raise ValueError(f"kernel_variant must be one of {_VARIANTS}")
        self.pixmat = np.asarray(pixmat, dtype=float)
        self.labels, self.class_count, self.masks = _class_masks(labels, class_count)
        if self.pixmat.shape[0] != self.labels.shape[0]:
            raise ValueError("image and label counts disagree")
        if self.pixmat.shape[0] < 2:
            raise ValueError("need at least two images")
        self.centers = np.asarray(centers, dtype=float)
        self.kernel_sigma = float(kernel_sigma)
        self.variant = variant
        if variant == "wkpi":
            self._within, self._to_all = self._accumulate_linear()

    def _accumulate_linear(self):
        """Class-pair pixel sums of 2(1 - exp(-dPI^2 / 2 sigma^2))."""
        n, npix = self.pixmat.shape
        k = self.class_count
        within = np.zeros((k, npix))
        to_all = np.zeros((k, npix))
        inv = 1.0 / (2.0 * self.kernel_sigma**2)
        for i in range(n):
            u = -2.0 * np.expm1(-((self.pixmat - self.pixmat[i]) ** 2) * inv)
            t = self.labels[i]
            to_all[t] += u.sum(axis=0)
            within[t] += u[self.masks[t]].sum(axis=0)
        return within, to_all

    def _alt_sums(self, omega, with_gradient):
        """Per-class sums (and per-pixel gradient factors) for the alt variant."""
        n, npix = self.pixmat.shape
        k = self.class_count
        inv = 1.0 / (2.0 * self.kernel_sigma**2)
        n_vec = np.zeros(k)
        m_vec = np.zeros(k)
        within = np.zeros((k, npix)) if with_gradient else None
        to_all = np.zeros((k, npix)) if with_gradient else None
        for i in range(n):
            delta = ((self.pixmat - self.pixmat[i]) ** 2) * inv
            expterm = np.exp(-delta * omega[None, :])
            lam_rows = -2.0 * np.expm1(-delta * omega[None, :]).sum(axis=1)
            t = self.labels[i]
            m_vec[t] += lam_rows.sum()
            n_vec[t] += lam_rows[self.masks[t]].sum()
            if with_gradient:
                dfac = 2.0 * delta * expterm
                to_all[t] += dfac.sum(axis=0)
                within[t] += dfac[self.masks[t]].sum(axis=0)
        return n_vec, m_vec, within, to_all

    def _class_terms(self, omega):
        if self.variant == "wkpi":
            return self._within @ omega, self._to_all @ omega
        n_vec, m_vec, _, _ = self._alt_sums(omega, with_gradient=False)
        return n_vec, m_vec

    def total_cost(self, weight: GaussianMixtureWeight) -> float:
        omega = eval_weight(weight, self.centers)
        n_vec, m_vec = self._class_terms(omega)
        if np.any(m_vec <= 0.0):
            raise DegenerateClassError("a class has zero total squared distance")
        return float((n_vec / m_vec).sum())

    def total_cost_and_gradient(self, weight: GaussianMixtureWeight, penalty_c: float = 0.0):
        """Returns (total cost, objective with penalty, gradient of the objective)."""
        omega = eval_weight(weight, self.centers)
        jac = weight_jacobian(weight, self.centers)  # (4m, N)
        if self.variant == "wkpi":
            n_vec, m_vec = self._within @ omega, self._to_all @ omega
            within, to_all = self._within, self._to_all
        else:
            n_vec, m_vec, within, to_all = self._alt_sums(omega, with_gradient=True)
        if np.any(m_vec <= 0.0):
            raise DegenerateClassError("a class has zero total squared distance")
        tc = float((n_vec / m_vec).sum())
        n_dot = jac @ within.T  # (4m, k)
        m_dot = jac @ to_all.T
        grad = ((n_dot * m_vec - n_vec * m_dot) / m_vec**2).sum(axis=1)
        objective = tc + mixture_penalty(weight, penalty_c)
        grad = grad + mixture_penalty_gradient(weight, penalty_c)
        if not np.isfinite(objective) or not np.all(np.isfinite(grad)):
            raise RuntimeError("non-finite cost or gradient (collapsing spread?)")
        return tc, objective, grad


def cost_gradient(images, labels, p: WkpiParams, penalty_c: float = 0.0) -> np.ndarray:
    """Analytic gradient of the total cost plus coefficient penalty.

    Length-4m vector in the flat parameter order (x_r, y_r, sigma_r, w_r)
    per component.
    """
    pixmat, grid = image_matrix(images)
    model = CostModel(pixmat, labels, grid.centers, p.kernel_sigma, p.kernel_variant)
    _, _, grad = model.total_cost_and_gradient(p.weight, penalty_c)
    return grad
