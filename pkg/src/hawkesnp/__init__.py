"""Nonparametric kernel estimation for marked multivariate Hawkes processes.

The estimation route: empirical conditional-law densities (module
``condlaw``), cross-validated bandwidth selection (``bandwidth``), Nystrom
inversion of the Wiener-Hopf systems (``whsolver``), and time-rescaling
goodness of fit (``gof``).  Ground truth for validation comes from the
Neumann-series oracle (``oracle``) and the thinning simulator (``simulate``).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DivergenceError,
    EventFormatError,
    HawkesError,
    IllConditionedError,
    NormDivergenceError,
    NumericalError,
    StabilityError,
)
from .events import EventSeries, MarkBins, empirical_rates, load_events, mark_bin_probabilities, save_events
from .model import (
    ConstantMark,
    EmpiricalMarks,
    ExponentialKernel,
    ExponentialMarks,
    HawkesModel,
    IdentityMark,
    MarkSpec,
    NormMatrix,
    PiecewiseConstantMark,
    PiecewiseLinearKernel,
    PowerLawKernel,
    SampledKernel,
    ZeroKernel,
    kernel_norm,
    mean_rate,
    norm_matrix,
    spectral_radius,
)
from .simulate import SimConfig, simulate
from .condlaw import (
    CondLawEstimate,
    CondLawTable,
    SmoothingKernel,
    estimate_G_marked,
    estimate_all,
    estimate_g,
    negative_time_g,
    smoothing_kernel,
)
from .bandwidth import BandwidthScan, contrast, select_bandwidth
from .whsolver import (
    NystromSolution,
    Quadrature,
    assemble,
    finalize,
    gauss_nodes,
    resample,
    select_Q,
    solve,
    solve_all,
)
from .oracle import OracleGrid, marked_equivalent, neumann_psi, oracle_g
from .gof import ResidualReport, ResidualSet, reconstruct_intensity, rescale
from .pipeline import EstimationConfig, EstimationResult, run_estimation
