"""Simulator and verification harness for federated training under noisy
model exchange: regularized and sampling-based robust schemes, baselines,
and numerical checks of their convergence behavior."""

from .channel import (
    NoiseSpec,
    RngStream,
    combined_noise_param,
    corrupt_downlink,
    corrupt_uplink,
    sample_boundary_noise,
    sample_gaussian_noise,
)
from .data import (
    LabeledDataset,
    PartitionPlan,
    SyntheticSpec,
    generate_synthetic,
    ingest_mnist,
    partition_iid,
)
from .losses import (
    evaluate_accuracy,
    hessian_vector_product,
    loss_gradient,
    loss_value,
    smoothness_bound,
)
from .training import (
    RoundMetrics,
    TrainerConfig,
    TrainingDiverged,
    TrainingResult,
    aggregate,
    run_training,
)

__version__ = "0.1.0"

__all__ = [
    "LabeledDataset",
    "NoiseSpec",
    "PartitionPlan",
    "RngStream",
    "RoundMetrics",
    "SyntheticSpec",
    "TrainerConfig",
    "TrainingDiverged",
    "TrainingResult",
    "aggregate",
    "combined_noise_param",
    "corrupt_downlink",
    "corrupt_uplink",
    "evaluate_accuracy",
    "generate_synthetic",
    "hessian_vector_product",
    "ingest_mnist",
    "loss_gradient",
    "loss_value",
    "partition_iid",
    "run_training",
    "sample_boundary_noise",
    "sample_gaussian_noise",
    "smoothness_bound",
]
