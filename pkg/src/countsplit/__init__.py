"""Count splitting: inference after latent variable estimation for count data."""

__version__ = "0.1.0"

from ._backend import NUMBA_AVAILABLE, get_backend, set_backend, use_backend
from .count_matrix import (
    CountMatrix,
    SizeFactors,
    estimate_size_factors,
    load_matrix,
    log_normalize,
    save_matrix,
)
from .errors import (
    ConfigError,
    CountSplitError,
    MatrixIOError,
    MatrixParseError,
    NumericalError,
)
from .glm import (
    BatchFit,
    ConfidenceInterval,
    GlmFit,
    WaldResult,
    fit_negbin_batch,
    fit_negbin_glm,
    fit_poisson_batch,
    fit_poisson_glm,
    target_parameter,
    wald_ci,
    wald_test,
)
from .latent import (
    LatentEstimate,
    abs_correlation,
    adjusted_rand_index,
    first_pc,
    kmeans,
    permute,
)
from .pipelines import (
    DeReport,
    GeneResult,
    MethodConfig,
    cluster_mean_test,
    compare,
    de_cell_split,
    de_count_split,
    de_double_dip,
    de_gene_split,
    de_test_double_dip,
    jackstraw,
    pseudotime_de,
    run_method,
)
from .simulation import (
    CalibrationSummary,
    PowerCoverageSummary,
    ScenarioConfig,
    estimate_overdispersion_profile,
    generate,
    run_calibration,
    run_overdispersion_sweep,
    run_power_coverage,
)
from .splitting import (
    CellSplit,
    GeneSplit,
    McvConfig,
    SplitPair,
    cell_split,
    count_split,
    gene_split,
    mcv_split,
)
