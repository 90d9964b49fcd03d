"""Distributionally robust learning under Wasserstein perturbations.

The package trains linear and small nonlinear models so that their
loss stays controlled on every data distribution within a transport
budget of the empirical one, and ships the attacks, federated
protocol, and file formats used to exercise those guarantees.
"""

from .attacks import (AttackConfig, evaluate_under_attack, fgsm, ifgsm, pgd,
                      run_attack, wrm_attack)
from .config import ExperimentConfig, build_experiment, load_experiment, parse_config
from .data import Dataset, gen_synthetic, load_csv, load_idx, write_csv, write_idx
from .errors import (BadMagicError, ConfigurationError, CountMismatchError,
                     CsvFormatError, DataError, InstabilityError,
                     ProtocolError, TruncatedFileError)
from .estimators import WassersteinRobustClassifier
from .experiment import load_params, run_experiment, save_params
from .federated import (Broadcast, Report, ServerState, WorkerState,
                        drfl_train, fedavg_train, partition, server_aggregate,
                        worker_round)
from .metrics import MetricsRow, read_metrics, write_metrics
from .models import (L1, GammaIndicator, LinearLeastSquares, Lipschitz,
                     LogisticModel, LossModel, ModelParams, NoReg, Regularizer,
                     SquaredL2, TinyMLP, linear_lipschitz, logistic_lipschitz,
                     make_regularizer)
from .robust import (RobustConfig, danskin_gradient, dual_objective,
                     duality_gap, inner_max_batch, inner_max_oracle,
                     minimize_dual_gamma, robust_objective,
                     stationarity_distance)
from .trainers import TrainerConfig, train
from .transport import (Coupling, DiscreteDistribution, TransportCost,
                        transport_plan, wasserstein, worst_case_primal)

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "evaluate_under_attack", "fgsm", "ifgsm", "pgd",
    "run_attack", "wrm_attack",
    "ExperimentConfig", "build_experiment", "load_experiment", "parse_config",
    "Dataset", "gen_synthetic", "load_csv", "load_idx", "write_csv",
    "write_idx",
    "BadMagicError", "ConfigurationError", "CountMismatchError",
    "CsvFormatError", "DataError", "InstabilityError", "ProtocolError",
    "TruncatedFileError",
    "WassersteinRobustClassifier",
    "load_params", "run_experiment", "save_params",
    "Broadcast", "Report", "ServerState", "WorkerState", "drfl_train",
    "fedavg_train", "partition", "server_aggregate", "worker_round",
    "MetricsRow", "read_metrics", "write_metrics",
    "L1", "GammaIndicator", "LinearLeastSquares", "Lipschitz",
    "LogisticModel", "LossModel", "ModelParams", "NoReg", "Regularizer",
    "SquaredL2", "TinyMLP", "linear_lipschitz", "logistic_lipschitz",
    "make_regularizer",
    "RobustConfig", "danskin_gradient", "dual_objective", "duality_gap",
    "inner_max_batch", "inner_max_oracle", "minimize_dual_gamma",
    "robust_objective", "stationarity_distance",
    "TrainerConfig", "train",
    "Coupling", "DiscreteDistribution", "TransportCost", "transport_plan",
    "wasserstein", "worst_case_primal",
    "__version__",
]
