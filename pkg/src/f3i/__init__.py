"""Iterative KNN imputation guided by online learning.

Public surface: the data model (core), missingness simulators (synthgen),
the spatial index (neighbors), the objective and its derivatives (objective),
the AdaHedge learner (learner), the imputers (imputer), joint training
(joint), metrics and bounds (evaluation), and the command line (cli).
"""
from .core import (
    Config,
    DataMatrix,
    GaussianParams,
    SimplexWeights,
    l2_normalize_rows,
    project_to_simplex,
)
from .imputer import (
    f3i_run,
    impute_step,
    knn_distance_impute,
    knn_initial_impute,
    mean_impute,
    out_of_sample_impute,
)
from .joint import JointConfig, SigmoidClassifier, pcgrad_f3i_run
from .kernels import BACKEND as KERNEL_BACKEND
from .synthgen import (
    MissingnessSpec,
    apply_mcar,
    apply_mar_logistic,
    apply_mnar_gsm,
    generate_complete,
    make_classification_labels,
)

__version__ = "0.1.0"

__all__ = [
    "Config",
    "DataMatrix",
    "GaussianParams",
    "SimplexWeights",
    "MissingnessSpec",
    "JointConfig",
    "SigmoidClassifier",
    "KERNEL_BACKEND",
    "project_to_simplex",
    "l2_normalize_rows",
    "generate_complete",
    "apply_mcar",
    "apply_mar_logistic",
    "apply_mnar_gsm",
    "make_classification_labels",
    "knn_initial_impute",
    "knn_distance_impute",
    "mean_impute",
    "impute_step",
    "f3i_run",
    "out_of_sample_impute",
    "pcgrad_f3i_run",
    "__version__",
]
