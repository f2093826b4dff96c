"""Persistence-diagram summaries of graphs with a learnable weighted kernel.

The package covers the full classification pipeline: loading benchmark
graph datasets, computing descriptor-driven (extended) persistence
diagrams, rasterizing them into persistence images, learning a weight
function on the birth-persistence plane by minimizing a trace-form
clustering cost, and classifying with a kernel SVM under nested
cross-validation.
"""

from .crossval import CvConfig, CvReport, Hyper, assign_folds, nested_cv
from .graphs import (
    Dataset,
    DatasetFormatError,
    DescriptorValues,
    Graph,
    RicciConfig,
    SimplexValues,
    degree_function,
    extend_edge_to_node,
    extend_node_to_edge,
    jaccard_index,
    load_tu_dataset,
    ricci_curvature,
    superlevel_simplex_values,
    write_tu_dataset,
)
from .images import (
    CompositeGrid,
    GridSpec,
    PersistenceImage,
    PiConfig,
    birth_persistence_transform,
    compute_persistence_image,
    concatenate_images,
    fit_grid,
    images_to_csv,
    pl_weight,
    piecewise_linear_weight,
    read_image_container,
    transformed_points,
    write_image_container,
)
from .kernel import (
    CostMatrices,
    CostModel,
    DegenerateClassError,
    GridMismatchError,
    WkpiParams,
    alt_wkpi_kernel,
    build_cost_matrices,
    cost_gradient,
    gram_matrix,
    squared_distance_matrix,
    total_cost_direct,
    total_cost_matrix,
    wkpi_distance,
    wkpi_kernel,
)
from .persistence import (
    Filtration,
    MonotonicityError,
    PersistenceDiagram,
    PersistencePoint,
    build_sublevel_filtration,
    compute_0dim_sublevel,
    compute_0dim_superlevel,
    compute_extended_persistence,
    diagram_from_csv,
    diagram_to_csv,
    merge_diagrams,
)
from .pipeline import (
    PipelineConfig,
    classify_diagrams,
    dataset_diagrams,
    diagrams_to_images,
    fit_classifier,
    fit_classifier_batch,
    fit_image_layout,
    graph_diagram,
    make_wkpi_hooks,
    run_nested_cv,
)
from .svm import (
    MulticlassModel,
    SvmModel,
    one_vs_rest,
    predict,
    predict_multiclass,
    train_svm,
)
from .training import TrainConfig, TrainResult, train_metric
from .weights import (
    GaussianMixtureWeight,
    eval_weight,
    init_kcenter,
    init_kmeans,
    init_random,
    load_weight,
    sample_heatmap,
    save_weight,
)

__version__ = "0.1.0"
