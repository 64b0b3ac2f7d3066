"""Bivariate Brownian semistationary processes and their realised covariation.

Quadrature of kernel quantities, limiting variances, exact simulation of
Gaussian-core and BSS increments, estimators and Monte Carlo checks of the
law of large numbers and the central limit theorem.
"""

__version__ = "0.1.0"

from .errors import (
    BssError,
    ConfigError,
    DomainError,
    FactorizationError,
    MatrixSizeError,
    QuadratureError,
)
from .kernels import (
    CustomKernel,
    GammaKernel,
    KernelPair,
    QuadratureConfig,
    c_of_x,
    eval_g,
    h_gamma,
    rbar,
    tau_n,
)
from .covariance import IncrementCovariance, build_increment_cov, flip_lag, r_n
from .asymptotics import LimitSpec, c11, mu_n, rho_theta
from .simulate import PathConfig, Panel, VolatilitySpec, sample_bss_increments, sample_core_increments
from .estimators import (
    clt_statistic_bss,
    clt_statistic_core,
    covariation_series,
    lln_estimator,
    realised_covariation,
)
from .harness import ExperimentReport, ks_statistic, run_clt_experiment, run_lln_experiment
