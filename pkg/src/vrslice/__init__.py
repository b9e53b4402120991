"""vrslice: quasi-CBR VR traffic modeling and predictive network slicing.

Submodules
----------
traces      frame-size trace model, CSV/JSON ingestion, synthetic generation
stats       rate distributions, overflow percentiles, (rolling) autocorrelation
regression  OLS and quantile linear frame-size predictors (GM/CM/CRM scopes)
laplace     Laplace residual model, scale regression, sums of Laplace variables
slicing     latency budget and the IF/IO/AF/AO bandwidth allocation rules
simulation  frame-synchronous multi-user slicing simulator and KPI collection
pareto      strict-dominance Pareto frontiers of (latency, bandwidth) points
cli         `vrslice` command line: analyze / fit / simulate / pareto
"""

__version__ = "0.1.0"

from .errors import VrsliceError
from .traces import (
    FrameTrace,
    NormalizedTrace,
    TraceMeta,
    load_trace,
    moving_average_rate,
    normalize,
    surrogate_trace,
    synthesize_trace,
    write_trace,
)
from .stats import (
    AutocorrResult,
    EmpiricalDistribution,
    autocorrelation,
    empirical_quantile,
    overflow_rate,
    rolling_autocorrelation,
)
from .regression import (
    LinearModel,
    PredictionSpec,
    ResidualSeries,
    build_design,
    fit_ols,
    fit_quantile,
    fit_scoped,
    predict,
    residual_std_surface,
    residuals,
    target_average,
)
from .laplace import (
    LaplaceMixture,
    LaplaceParams,
    ScaleModel,
    aggregate_distribution,
    fit_laplace_mle,
    fit_scale_model,
    laplace_quantile,
    mixture_cdf,
    mixture_pdf,
    mixture_quantile,
)
from .slicing import (
    LatencyBudget,
    allocate_af,
    allocate_ao,
    allocate_if,
    allocate_io,
    check_stability,
    compute_t_tx,
)
from .simulation import (
    KpiSummary,
    PredictorBank,
    Scenario,
    SimResult,
    UserLink,
    collect_kpis,
    fit_predictor_bank,
    need_based_share,
    run,
    scenario_from_config,
    write_kpi_csvs,
)
from .pareto import ParetoPoint, matched_latency_reduction, pareto_frontier
