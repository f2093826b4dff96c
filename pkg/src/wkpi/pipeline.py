"""End-to-end glue: descriptor -> diagrams -> images -> learned kernel -> SVM.

The pieces are reusable on their own; this module wires them the way the
classification experiments run them, keeping every data-dependent fit
(grid bounds, weight initialization, metric training) on training splits
only.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .crossval import CvConfig, nested_cv
from .graphs import (
    Dataset,
    Graph,
    RicciConfig,
    degree_function,
    extend_edge_to_node,
    extend_node_to_edge,
    jaccard_index,
    ricci_curvature,
    superlevel_simplex_values,
)
from .images import (
    PiConfig,
    PersistenceImage,
    compute_persistence_image,
    concatenate_images,
    fit_grid,
    piecewise_linear_weight,
    transformed_points,
)
from .kernel import CostModel, WkpiParams, gram_matrix, image_matrix
from .persistence import (
    PersistenceDiagram,
    build_sublevel_filtration,
    compute_0dim_sublevel,
    compute_0dim_superlevel,
    compute_extended_persistence,
    merge_diagrams,
)
from .svm import one_vs_rest, predict_multiclass
from .training import TrainConfig, train_metric
from .weights import eval_weight, init_kcenter, init_kmeans, init_random

DESCRIPTORS = ("degree", "ricci", "jaccard")
INIT_METHODS = ("kmeans", "kcenter", "random")


@dataclass(frozen=True)
class PipelineConfig:
    """Settings shared by the library pipeline and the command line.

    ``tau=None`` uses one pixel width of each dimension's fitted grid;
    ``surface_weight`` is "const" or "pl" (persistence-linear ramp whose
    width ``pl_b`` defaults to the largest training persistence).
    """

    descriptor: str = "ricci"
    dimensions: tuple = (0, 1)
    use_extended: bool = True
    drop_essentials: bool = False
    ricci_laziness: float = 0.5
    y_resolution: int = 40
    tau: float | None = None
    surface_weight: str = "const"
    pl_b: float | None = None
    kernel_variant: str = "wkpi"
    kernel_sigma: float = 1.0
    mixture_size: int = 5
    init_method: str = "kmeans"
    svm_c: float = 10.0
    svm_tol: float = 1e-6
    minibatch_size: int | None = None
    max_iterations: int = 2000
    cost_tolerance: float = 1e-4
    penalty_constant: float = 1.0
    ls_initial_step: float = 1.0
    ls_backtrack: float = 0.5
    ls_sufficient_decrease: float = 1e-4
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.descriptor not in DESCRIPTORS:
            raise ValueError(f"descriptor must be one of {DESCRIPTORS}")
        if self.init_method not in INIT_METHODS:
            raise ValueError(f"init_method must be one of {INIT_METHODS}")
        dims = tuple(sorted(set(self.dimensions)))
        if dims not in ((0,), (1,), (0, 1)):
            raise ValueError("dimensions must be {0}, {1} or {0,1}")
        object.__setattr__(self, "dimensions", dims)
        if 1 in dims and not self.use_extended:
            raise ValueError("dimension-1 points require extended persistence")
        if self.surface_weight not in ("const", "pl"):
            raise ValueError("surface_weight must be 'const' or 'pl'")

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            minibatch_size=self.minibatch_size,
            max_iterations=self.max_iterations,
            cost_tolerance=self.cost_tolerance,
            penalty_constant=self.penalty_constant,
            ls_initial_step=self.ls_initial_step,
            ls_backtrack=self.ls_backtrack,
            ls_sufficient_decrease=self.ls_sufficient_decrease,
            rng_seed=self.seed if seed is None else seed,
        )


def descriptor_values(g: Graph, cfg: PipelineConfig):
    if cfg.descriptor == "degree":
        return degree_function(g)
    if cfg.descriptor == "jaccard":
        return jaccard_index(g)
    return ricci_curvature(g, RicciConfig(cfg.ricci_laziness))


def graph_diagram(g: Graph, cfg: PipelineConfig) -> PersistenceDiagram:
    """Persistence diagram of one graph under the configured descriptor.

    With extended persistence the diagram holds ordinary, extended, and
    relative points of dimensions 0 and 1; otherwise it is the union of
    the bottom-up and top-down 0-dimensional sweeps.
    """
    f = descriptor_values(g, cfg)
    if f.kind == "node":
        sub = extend_node_to_edge(g, f)
    else:
        sub = extend_edge_to_node(g, f)
    sup = superlevel_simplex_values(g, f)
    if cfg.use_extended:
        diagram = compute_extended_persistence(g, sub, superlevel_values=sup)
        diagram = PersistenceDiagram(
            tuple(p for p in diagram.points if p.dim in cfg.dimensions)
        )
    else:
        up = compute_0dim_sublevel(build_sublevel_filtration(g, sub))
        down = compute_0dim_superlevel(g, sup)
        diagram = merge_diagrams(up, down)
    if cfg.drop_essentials:
        diagram = diagram.without_essential_dim0()
    return diagram


def dataset_diagrams(dataset: Dataset, cfg: PipelineConfig) -> list:
    """Diagrams for every graph, optionally across a thread pool."""
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(lambda g: graph_diagram(g, cfg), dataset.graphs))
    return [graph_diagram(g, cfg) for g in dataset.graphs]


@dataclass(frozen=True)
class ImageLayout:
    """Per-dimension grids and rasterization settings fitted on training data."""

    grids: tuple  # ((dim, GridSpec), ...)
    pi_configs: tuple  # ((dim, PiConfig), ...)

    @property
    def min_pixel_size(self) -> float:
        return min(g.pixel_size for _, g in self.grids)


def fit_image_layout(train_diagrams, cfg: PipelineConfig) -> ImageLayout:
    """Fit one grid per requested dimension over the training diagrams.

    When ``tau`` is not set it becomes one pixel width of the fitted grid
    for that dimension.  The persistence-linear ramp width defaults to the
    largest training persistence.
    """
    grids = []
    pi_configs = []
    pl_b = cfg.pl_b
    if cfg.surface_weight == "pl" and pl_b is None:
        pers = [
            abs(p.death - p.birth) for d in train_diagrams for p in d.points
        ]
        pl_b = max(pers) if pers else 1.0
        if pl_b <= 0:
            pl_b = 1.0
    for dim in cfg.dimensions:
        sub = [d.of_dim(dim) for d in train_diagrams]
        grid = fit_grid(sub, y_resolution=cfg.y_resolution, tau=cfg.tau)
        tau = cfg.tau if cfg.tau is not None else grid.pixel_size
        weight = None if cfg.surface_weight == "const" else piecewise_linear_weight(pl_b)
        grids.append((dim, grid))
        pi_configs.append((dim, PiConfig(tau=tau, surface_weight=weight)))
    return ImageLayout(grids=tuple(grids), pi_configs=tuple(pi_configs))


def diagrams_to_images(diagrams, layout: ImageLayout) -> list:
    """Rasterize diagrams onto a fitted layout, concatenating dimensions."""
    images = []
    for d in diagrams:
        per_dim = {}
        for (dim, grid), (_, pi_cfg) in zip(layout.grids, layout.pi_configs):
            per_dim[dim] = compute_persistence_image(d.of_dim(dim), grid, pi_cfg)
        images.append(concatenate_images(per_dim))
    return images


def all_transformed_points(diagrams) -> np.ndarray:
    pts = [transformed_points(d) for d in diagrams]
    pts = [p for p in pts if p.size]
    if not pts:
        raise ValueError("no persistence points in the training diagrams")
    return np.vstack(pts)


def initial_weight(train_diagrams, layout: ImageLayout, m: int, cfg: PipelineConfig, seed: int):
    pts = all_transformed_points(train_diagrams)
    floor = layout.min_pixel_size
    if cfg.init_method == "kmeans":
        return init_kmeans(pts, m, seed, min_spread=floor)
    if cfg.init_method == "kcenter":
        return init_kcenter(pts, m, seed, min_spread=floor)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    return init_random((lo[0], hi[0], lo[1], hi[1]), m, seed)


@dataclass
class FittedClassifier:
    """Everything needed to score unseen diagrams."""

    layout: ImageLayout
    params: WkpiParams
    svm: object
    train_images: list
    train_pixmat: np.ndarray

    def kernel_rows(self, images) -> np.ndarray:
        test_pix = np.array([img.pixels for img in images])
        omega = eval_weight(self.params.weight, self.train_images[0].grid.centers)
        inv = 1.0 / (2.0 * self.params.kernel_sigma**2)
        rows = np.empty((test_pix.shape[0], self.train_pixmat.shape[0]))
        for i, x in enumerate(test_pix):
            delta2 = (self.train_pixmat - x) ** 2
            if self.params.kernel_variant == "wkpi":
                rows[i] = np.exp(-delta2 * inv) @ omega
            else:
                rows[i] = np.exp(-omega * delta2 * inv).sum(axis=1)
        return rows


def fit_classifier(
    train_diagrams,
    train_labels,
    cfg: PipelineConfig,
    m: int | None = None,
    sigma: float | None = None,
    svm_c: float | None = None,
    seed: int | None = None,
):
    """Fit grid, initialize and train the weight, build the Gram, train SVM."""
    m = cfg.mixture_size if m is None else m
    sigma = cfg.kernel_sigma if sigma is None else sigma
    svm_c = cfg.svm_c if svm_c is None else svm_c
    seed = cfg.seed if seed is None else seed

    layout = fit_image_layout(train_diagrams, cfg)
    train_images = diagrams_to_images(train_diagrams, layout)
    init = initial_weight(train_diagrams, layout, m, cfg, seed)
    params = WkpiParams(kernel_sigma=sigma, weight=init, kernel_variant=cfg.kernel_variant)
    result = train_metric(
        train_images, train_labels, init, cfg.train_config(seed), params
    )
    params = replace(params, weight=result.weight)
    gram = gram_matrix(train_images, params)
    labels = np.asarray(train_labels, dtype=np.intp)
    svm = one_vs_rest(gram, labels, C=svm_c, tol=cfg.svm_tol)
    pixmat, _ = image_matrix(train_images)
    return (
        FittedClassifier(
            layout=layout,
            params=params,
            svm=svm,
            train_images=train_images,
            train_pixmat=pixmat,
        ),
        result,
    )


def classify_diagrams(clf: FittedClassifier, diagrams) -> np.ndarray:
    images = diagrams_to_images(diagrams, clf.layout)
    rows = clf.kernel_rows(images)
    return predict_multiclass(clf.svm, rows)


def fit_classifier_batch(train_diagrams, train_labels, cfg: PipelineConfig, hypers, seed):
    """Fit one classifier per hyperparameter triple, sharing common work.

    The image layout and pixel matrix are independent of the triple, the
    cost workspace depends only on the bandwidth, the trained weight and
    Gram matrix on (m, bandwidth); only the SVM varies with C.  Results
    match per-triple :func:`fit_classifier` calls.
    """
    labels = np.asarray(train_labels, dtype=np.intp)
    layout = fit_image_layout(train_diagrams, cfg)
    train_images = diagrams_to_images(train_diagrams, layout)
    pixmat, grid = image_matrix(train_images)
    inits = {
        m: initial_weight(train_diagrams, layout, m, cfg, seed)
        for m in sorted({h.m for h in hypers})
    }
    out = {}
    for sigma in sorted({h.sigma for h in hypers}):
        model = CostModel(pixmat, labels, grid.centers, sigma, cfg.kernel_variant)
        for m in sorted({h.m for h in hypers if h.sigma == sigma}):
            init = inits[m]
            params = WkpiParams(
                kernel_sigma=sigma, weight=init, kernel_variant=cfg.kernel_variant
            )
            result = train_metric(
                train_images, labels, init, cfg.train_config(seed), params,
                cost_model=model,
            )
            params = replace(params, weight=result.weight)
            gram = gram_matrix(train_images, params)
            for hyper in hypers:
                if hyper.sigma != sigma or hyper.m != m:
                    continue
                svm = one_vs_rest(gram, labels, C=hyper.C, tol=cfg.svm_tol)
                out[hyper] = FittedClassifier(
                    layout=layout,
                    params=params,
                    svm=svm,
                    train_images=train_images,
                    train_pixmat=pixmat,
                )
    return out


def make_wkpi_hooks(cfg: PipelineConfig):
    """(fit, predict, fit_batch) hooks for :func:`wkpi.crossval.nested_cv`."""

    def fit(train_diagrams, train_labels, hyper, seed):
        clf, _ = fit_classifier(
            train_diagrams,
            train_labels,
            cfg,
            m=hyper.m,
            sigma=hyper.sigma,
            svm_c=hyper.C,
            seed=seed,
        )
        return clf

    def predict(clf, test_diagrams):
        return classify_diagrams(clf, test_diagrams)

    def fit_batch(train_diagrams, train_labels, hypers, seed):
        return fit_classifier_batch(train_diagrams, train_labels, cfg, hypers, seed)

    return fit, predict, fit_batch


def run_nested_cv(diagrams, labels, cv_cfg: CvConfig, pipe_cfg: PipelineConfig):
    fit, predict, fit_batch = make_wkpi_hooks(pipe_cfg)
    return nested_cv(diagrams, labels, cv_cfg, fit, predict, fit_batch=fit_batch)
