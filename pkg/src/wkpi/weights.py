"""The learnable weight function: a mixture of spherical 2D bumps.

A weight of ``m`` components holds 4m parameters (x_r, y_r, sigma_r, w_r)
and evaluates as  sum_r  w_r * exp(-((x - x_r)^2 + (y - y_r)^2) / sigma_r^2).
Note the spread enters squared without a factor 2.  Coefficients w_r are
kept non-negative, which is exactly what makes the class-indicator
constraint of the metric-learning cost hold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class GaussianMixtureWeight:
    """Non-negative mixture of spherical Gaussians on the birth-persistence plane."""

    centers: np.ndarray  # (m, 2)
    spreads: np.ndarray  # (m,)
    coefficients: np.ndarray  # (m,)

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).reshape(-1, 2)
        spreads = np.asarray(self.spreads, dtype=float).ravel()
        coeffs = np.asarray(self.coefficients, dtype=float).ravel()
        m = centers.shape[0]
        if m < 1:
            raise ValueError("mixture needs at least one component")
        if spreads.shape != (m,) or coeffs.shape != (m,):
            raise ValueError("component array lengths disagree")
        if np.any(spreads <= 0):
            raise ValueError("spreads must be positive")
        if np.any(coeffs < 0):
            raise ValueError("coefficients must be non-negative")
        for arr in (centers, spreads, coeffs):
            arr.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "spreads", spreads)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def component_count(self) -> int:
        return self.centers.shape[0]

    def as_parameters(self) -> np.ndarray:
        """Flat parameter vector of length 4m, grouped (x, y, sigma, w) per component."""
        return np.column_stack(
            [self.centers[:, 0], self.centers[:, 1], self.spreads, self.coefficients]
        ).ravel()

    @classmethod
    def from_parameters(cls, params: np.ndarray) -> "GaussianMixtureWeight":
        p = np.asarray(params, dtype=float).reshape(-1, 4)
        return cls(p[:, :2], p[:, 2], p[:, 3])


def eval_weight(weight: GaussianMixtureWeight, points) -> np.ndarray:
    """Evaluate the mixture at one point or an (n, 2) array of points."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    d2 = (pts[:, None, 0] - weight.centers[None, :, 0]) ** 2
    d2 += (pts[:, None, 1] - weight.centers[None, :, 1]) ** 2
    vals = np.exp(-d2 / weight.spreads[None, :] ** 2) @ weight.coefficients
    return float(vals[0]) if single else vals


def weight_jacobian(weight: GaussianMixtureWeight, points: np.ndarray) -> np.ndarray:
    """Partials of the mixture value at each point w.r.t. all 4m parameters.

    Returns a (4m, n) array in the flat parameter order of
    :meth:`GaussianMixtureWeight.as_parameters`.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    cx = weight.centers[:, 0][:, None]
    cy = weight.centers[:, 1][:, None]
    sig = weight.spreads[:, None]
    w = weight.coefficients[:, None]
    dx = pts[None, :, 0] - cx  # (m, n)
    dy = pts[None, :, 1] - cy
    d2 = dx**2 + dy**2
    e = np.exp(-d2 / sig**2)
    we = w * e
    m, n = e.shape
    jac = np.empty((m, 4, n))
    jac[:, 0] = we * 2.0 * dx / sig**2
    jac[:, 1] = we * 2.0 * dy / sig**2
    jac[:, 2] = we * 2.0 * d2 / sig**3
    jac[:, 3] = e
    return jac.reshape(4 * m, n)


def init_random(points_bbox, m: int, seed: int) -> GaussianMixtureWeight:
    """Centers drawn uniformly from the bounding box of the transformed points.

    ``points_bbox`` is (x_min, x_max, y_min, y_max).  Spreads are the box
    diagonal divided by m, coefficients start at 1.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    x_min, x_max, y_min, y_max = points_bbox
    rng = np.random.default_rng(seed)
    xs = rng.uniform(x_min, x_max, size=m)
    ys = rng.uniform(y_min, y_max, size=m)
    diag = float(np.hypot(x_max - x_min, y_max - y_min))
    spread = diag / m if diag > 0 else 1.0
    return GaussianMixtureWeight(
        np.column_stack([xs, ys]), np.full(m, spread), np.ones(m)
    )


def _lloyd(points: np.ndarray, m: int, rng: np.random.Generator, iters: int = 100):
    """Plain Lloyd iteration; empty clusters re-seed at the farthest point."""
    unique = np.unique(points, axis=0)
    if unique.shape[0] <= m:
        # fewer distinct points than centers: use them all, duplicating to fill
        reps = np.concatenate([np.arange(unique.shape[0])] * m)[:m]
        return unique[np.sort(reps)]
    start = rng.choice(unique.shape[0], size=m, replace=False)
    centers = unique[np.sort(start)].astype(float)
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        new_centers = centers.copy()
        for r in range(m):
            mask = assign == r
            if mask.any():
                new_centers[r] = points[mask].mean(axis=0)
            else:
                new_centers[r] = points[d2.min(axis=1).argmax()]
        if np.allclose(new_centers, centers, rtol=0.0, atol=1e-12):
            centers = new_centers
            break
        centers = new_centers
    return centers


def init_kmeans(points, m: int, seed: int, min_spread: float) -> GaussianMixtureWeight:
    """Lloyd's algorithm on the transformed diagram points.

    Component spreads are the per-cluster RMS radius floored at
    ``min_spread`` (one pixel width in the pipeline); coefficients start
    at 1.  With fewer distinct points than m, surplus components duplicate
    existing centers.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("needs at least one point")
    rng = np.random.default_rng(seed)
    centers = _lloyd(pts, m, rng)
    d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    spreads = np.empty(m)
    for r in range(m):
        mask = assign == r
        rms = np.sqrt(d2[mask, r].mean()) if mask.any() else 0.0
        spreads[r] = max(rms, min_spread)
    return GaussianMixtureWeight(centers, spreads, np.ones(m))


def init_kcenter(points, m: int, seed: int, min_spread: float) -> GaussianMixtureWeight:
    """Greedy farthest-point centers with a seeded first pick.

    Spreads are the distance to the nearest other center (for m = 1, the
    farthest point from the center), floored at ``min_spread``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("needs at least one point")
    rng = np.random.default_rng(seed)
    first = int(rng.integers(pts.shape[0]))
    chosen = [first]
    dist = np.sqrt(((pts - pts[first]) ** 2).sum(axis=1))
    while len(chosen) < m:
        nxt = int(dist.argmax())
        chosen.append(nxt)
        dist = np.minimum(dist, np.sqrt(((pts - pts[nxt]) ** 2).sum(axis=1)))
    centers = pts[chosen]
    spreads = np.empty(m)
    if m == 1:
        spreads[0] = max(float(dist.max()), min_spread)
    else:
        for r in range(m):
            others = np.delete(np.arange(m), r)
            d = np.sqrt(((centers[others] - centers[r]) ** 2).sum(axis=1))
            spreads[r] = max(float(d.min()), min_spread)
    return GaussianMixtureWeight(centers, spreads, np.ones(m))


def save_weight(weight: GaussianMixtureWeight, path: str) -> None:
    """Text format: a header line with m, then m lines of ``x y sigma w``."""
    with open(path, "w") as fh:
        fh.write(f"{weight.component_count}\n")
        for (x, y), s, w in zip(weight.centers, weight.spreads, weight.coefficients):
            fh.write(f"{float(x)!r} {float(y)!r} {float(s)!r} {float(w)!r}\n")


def load_weight(path: str) -> GaussianMixtureWeight:
    with open(path, "r") as fh:
        try:
            m = int(fh.readline().split()[0])
        except (ValueError, IndexError):
            raise ValueError(f"bad weight file header in {path}") from None
        rows = []
        for _ in range(m):
            parts = fh.readline().split()
            if len(parts) != 4:
                raise ValueError(f"bad weight file row in {path}: {parts}")
            rows.append([float(p) for p in parts])
    arr = np.array(rows)
    return GaussianMixtureWeight(arr[:, :2], arr[:, 2], arr[:, 3])


def sample_heatmap(weight: GaussianMixtureWeight, grid) -> np.ndarray:
    """Weight function sampled at the pixel centers of a single grid.

    Returns a (y_resolution, x_resolution) array, y increasing with row
    index.
    """
    vals = eval_weight(weight, grid.centers)
    return vals.reshape(grid.y_resolution, grid.x_resolution)


def heatmap_to_csv(heatmap: np.ndarray, path: str) -> None:
    with open(path, "w") as fh:
        for row in heatmap:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def heatmap_to_pgm(heatmap: np.ndarray, path: str, sidecar_path: str | None = None) -> None:
    """16-bit binary PGM of a min-max scaled heatmap, top row = largest y.

    The scale is recorded in a sidecar text file (default: path + '.scale')
    with the original minimum and maximum.
    """
    lo, hi = float(heatmap.min()), float(heatmap.max())
    if hi > lo:
        scaled = np.round((heatmap - lo) / (hi - lo) * 65535.0)
    else:
        scaled = np.zeros_like(heatmap)
    img = scaled.astype(">u2")[::-1]  # flip so the top image row is y_max
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(img.tobytes())
    if sidecar_path is None:
        sidecar_path = path + ".scale"
    with open(sidecar_path, "w") as fh:
        fh.write(f"min {lo!r}\nmax {hi!r}\n")
