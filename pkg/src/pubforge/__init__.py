"""pubforge: piecewise-Poisson modelling and forecasting of researcher
publication productivity."""

from .cohort import (
    INACTIVE,
    OVERFLOW,
    CohortMatrix,
    assign_cohort,
    cumulative_count,
    productivity_matrix,
)
from .corpus import (
    AuthorHistory,
    DatasetSplit,
    IngestStats,
    PublicationRecord,
    build_histories,
    make_split,
    parse_dblp_xml,
    parse_tabular,
)
from .creativity import (
    CohortFit,
    CreativityModel,
    build_model,
    fit_cohort,
    glm_poisson,
    trend_significance,
)
from .evaluate import (
    EvaluationReport,
    acf_profile,
    autocorrelation,
    fit_simonton,
    ks_poisson_test,
    ks_two_sample,
    simonton_curve,
    trend_correlations,
    trend_tables,
)
from .forecast import (
    ForecastEnsemble,
    derive_rng,
    expected_trajectory,
    simulate_group,
    simulate_many,
    simulate_researcher,
)
from .synth import GeneratorSpec, generate_corpus

__version__ = "0.1.0"
