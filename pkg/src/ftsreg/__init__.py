"""Local regularity and adaptive mean/autocovariance estimation for functional time series."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    BandwidthGrid,
    Design,
    DomainInterval,
    FunctionalSample,
    ObservedCurve,
    default_bandwidth_grid,
    epanechnikov,
    nw_weights,
    pi_indicator,
)
from .errors import (  # noqa: E402
    ConfigError,
    DataError,
    DegenerateIncrementsError,
    EmptyWindowError,
    FtsregError,
    InvalidBandwidthError,
    NoFeasibleBandwidthError,
    NumericalError,
    RunFailedError,
)
from .io import read_sample_csv, write_long_csv, write_wide_csv  # noqa: E402
from .simulate import (  # noqa: E402
    HurstFunction,
    MeanFunction,
    Model,
    SimConfig,
    far1_generate,
    observe,
    simulate_sample,
)
from .presmooth import cv_bandwidth, presmooth, presmooth_derivative, sigma2_hat  # noqa: E402
from .locreg import RegularityEstimate, estimate_alpha, estimate_regularity  # noqa: E402
from .mean import MeanEstimate, mu_hat, mu_hat_adaptive, risk_bound_mu, select_h_mu  # noqa: E402
from .autocov import (  # noqa: E402
    AutocovEstimate,
    gamma_hat,
    gamma_hat_adaptive,
    risk_bound_gamma,
    select_h_gamma,
)
from .harness import (  # noqa: E402
    ExperimentSpec,
    ReportTable,
    emit_reports,
    gamma_truth_oracle,
    ingest_common_csv,
    run_experiment,
)
