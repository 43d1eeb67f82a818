"""flatopt: perturbed-gradient optimizers and a flatness verification toolkit."""

__version__ = "0.1.0"

from .covariance import (
    Diagonal,
    FisherAdaptive,
    Isotropic,
    MuAdaptive,
    resolve_sigma,
    sigma_half_apply,
)
from .datasets import Dataset, export_csv, import_csv, make_blobs, make_two_moons, split_dataset
from .objectives import (
    HESSIAN_LIMIT,
    MLPObjective,
    Objective,
    QuadraticObjective,
    ToyLandscape2D,
    mlp_objective,
    quadratic_objective,
    toy_landscape,
)
from .optimizers import (
    KLPenalty,
    L2Penalty,
    NoPenalty,
    OptimizerConfig,
    OptimizerState,
    StepSchedule,
    apply_schedule,
    init_state,
    make_config,
    mfvi_step,
    random_sam_step,
    sam_perturbation,
    sam_step,
    sgd_step,
    step,
    vsam_step,
)
from .estimator import PerturbedGradientClassifier
from .pacbayes import BoundInputs, gamma_radius, gaussian_kl, pac_bound
from .rng import GaussianSample, philox_generator, sample_eta
from .training import run_training

__all__ = [
    "BoundInputs",
    "Dataset",
    "Diagonal",
    "FisherAdaptive",
    "GaussianSample",
    "HESSIAN_LIMIT",
    "Isotropic",
    "KLPenalty",
    "L2Penalty",
    "MLPObjective",
    "MuAdaptive",
    "NoPenalty",
    "Objective",
    "OptimizerConfig",
    "OptimizerState",
    "PerturbedGradientClassifier",
    "QuadraticObjective",
    "StepSchedule",
    "ToyLandscape2D",
    "apply_schedule",
    "export_csv",
    "gamma_radius",
    "gaussian_kl",
    "import_csv",
    "init_state",
    "make_blobs",
    "make_config",
    "make_two_moons",
    "mfvi_step",
    "mlp_objective",
    "pac_bound",
    "philox_generator",
    "quadratic_objective",
    "random_sam_step",
    "resolve_sigma",
    "run_training",
    "sam_perturbation",
    "sam_step",
    "sample_eta",
    "sgd_step",
    "sigma_half_apply",
    "split_dataset",
    "step",
    "toy_landscape",
    "vsam_step",
]
