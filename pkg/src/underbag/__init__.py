"""Sharp asymptotics and finite-size simulation of under-bagging,
under-sampling, and weighted ridge-logistic classification on
two-component mixture data."""

import os as _os

# cap BLAS pools before numpy spins them up; oversubscription on small
# factorizations dominates the trainer otherwise
_cpus = str(min(_os.cpu_count() or 1, 8))
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, _cpus)

from .config import (BernoulliScheme, BiasMode, DeltaScheme, HatOrderParams,
                     OrderParams, PoissonScheme, ProblemConfig,
                     make_bootstrap_config, make_subsampling_config,
                     make_weighting_config)
from .errors import (ConfigurationError, DivergenceError, EvaluationFault,
                     NoRootError, NonConvergenceError, SchemaError,
                     UnderbagError)
from .metrics import (FMeasure, PredictionLaw, VariancePeak, f_measure,
                      find_variance_peak, gaussian_tail, prediction_law,
                      relative_variance)
from .prox import (CrossEntropyLoss, LossSide, prox_loss, prox_loss_dh,
                   prox_loss_with_dh, prox_ridge)
from .quadrature import (CoeffSupport, QuadratureRule, coeff_support,
                         gauss_hermite, nested_mean_var)
from .saddle import (SolveReport, SolverOptions, bias_residual, solve_full,
                     solve_us, sweep_theta, sweep_theta_hat, verify_residual)
from .simulate import (Dataset, EnsembleStats, TrainedClassifier,
                       concentration_probe, draw_coeffs, gen_dataset,
                       probe_separability, run_ensemble, train_weighted)
from .tuner import (WeightSearchSpec, find_bias_zero_rate, naive_weights,
                    optimize_weights)

__version__ = "0.1.0"
