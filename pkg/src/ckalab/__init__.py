"""ckalab: CKA similarity estimators, subset-translation sensitivity
analysis, and a representation-level manipulation engine."""

__version__ = "0.1.0"

from .core import (
    RepresentationMatrix,
    SeededRng,
    SpectrumSummary,
    center_columns,
    covariance_spectrum,
    gram,
    sample_unit_direction,
)
from .manipulate import (
    CkaMap,
    LambdaSchedulerState,
    ManipulationConfig,
    lambda_step,
    linear_cka_gradient,
    log_cosh_map_loss,
    manipulate_to_target,
)
from .similarity import (
    CkaResult,
    KernelMatrix,
    KernelSpec,
    cka,
    hsic_biased,
    hsic_unbiased,
    kernel_matrix,
    minibatch_cka,
    rbf_bandwidth,
)
from .synthetic import TwoCubeConfig, gaussian_cloud, two_cubes
from .theory import (
    LimitPrediction,
    gamma,
    participation_ratio,
    predict_limit,
    predict_limit_outlier,
)
from .transforms import (
    Hyperplane,
    TranslationSpec,
    apply_linear,
    check_separation,
    margin_preserving_direction,
    random_invertible_gaussian,
    subset_translate,
)

__all__ = [
    "RepresentationMatrix",
    "SeededRng",
    "SpectrumSummary",
    "center_columns",
    "covariance_spectrum",
    "gram",
    "sample_unit_direction",
    "KernelSpec",
    "KernelMatrix",
    "CkaResult",
    "rbf_bandwidth",
    "kernel_matrix",
    "hsic_biased",
    "hsic_unbiased",
    "cka",
    "minibatch_cka",
    "LimitPrediction",
    "gamma",
    "participation_ratio",
    "predict_limit",
    "predict_limit_outlier",
    "TranslationSpec",
    "Hyperplane",
    "subset_translate",
    "margin_preserving_direction",
    "check_separation",
    "random_invertible_gaussian",
    "apply_linear",
    "TwoCubeConfig",
    "two_cubes",
    "gaussian_cloud",
    "CkaMap",
    "LambdaSchedulerState",
    "ManipulationConfig",
    "log_cosh_map_loss",
    "lambda_step",
    "linear_cka_gradient",
    "manipulate_to_target",
]
