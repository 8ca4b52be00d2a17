"""Lipschitz-adaptive learning rates for MAE and quantile regression networks.

The training losses here (mean absolute error and the check loss of quantile
regression) have closed-form Lipschitz constants in the network output, built
from the largest activation feeding the output layer. Setting the learning
rate to the reciprocal of that constant at the start of every epoch gives an
adaptive schedule that starts large and decays as the network's activations
grow, typically reaching a fixed loss target in a fraction of the epochs a
constant rate needs. The package bundles the dense-network engine, the rate
computation, a deterministic trainer, linear baselines, benchmark datasets,
and a paired-comparison harness behind the ``lalr`` command.
"""

from .baselines import AicReport, LinearModel, aic_ald, linear_qr_fit, min_loss_threshold, ols_fit, ols_threshold
from .bench import ComparisonRecord, CoverageRecord, ExperimentSpec, coverage, epochs_to_threshold, paired_run, report
from .data import Dataset, ScalerStats, gen_heteroscedastic, load_builtin, load_csv, save_csv, split, standardize, subsample
from .lipschitz import (
    LipschitzInputs,
    LrPolicy,
    UnsupportedLossError,
    constant_policy,
    lalr_policy,
    learning_rate,
    lipschitz_constant,
    penultimate_max,
)
from .losses import LossSpec, check_grad, check_loss, mae, mae_grad, mse, mse_grad
from .nn import (
    LEAKY_RELU,
    LINEAR,
    RELU,
    SOFTPLUS,
    SOFTSIGN,
    Activation,
    ForwardTrace,
    Gradients,
    LayerSpec,
    Network,
    NetworkSpec,
    activation_eval,
    apply_update,
    backward,
    forward,
    init_network,
    mlp_spec,
)
from .training import DivergenceError, RunRecord, TrainConfig, batches, evaluate, train

__version__ = "0.1.0"
