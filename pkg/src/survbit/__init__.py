"""Binomial interval tests for parametric survival models.

Compare a fitted parametric survival model against right-censored data by
counting events within time intervals, computing exact (sum of) binomial
p-values, and combining them into Bonferroni, TFT and PAVSI verdicts.
"""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    DataError,
    KaplanMeierCurve,
    SurvivalDataset,
    SurvivalRecord,
    at_risk_table,
    kaplan_meier,
    load_dataset,
)
from .intervals import (  # noqa: E402
    Interval,
    IntervalScheme,
    SpecifiedGrid,
    build_censor_scheme,
    build_specified_scheme,
    default_ten_interval_grid,
)
from .models import (  # noqa: E402
    FAMILIES,
    FAMILY_NAMES,
    DegenerateIntervalError,
    FitError,
    FittedModel,
    ModelFamily,
    cdf,
    fit,
    get_family,
    information_criteria,
    interval_prob,
    load_model,
)
from .pvalues import (  # noqa: E402
    DiscreteDistribution,
    PValue,
    binomial_pmf,
    chi_square_sf,
    midpoint_pvalue,
    randomized_pvalue,
    sum_of_binomials_pmf,
)
from .testsuite import (  # noqa: E402
    IntervalTestResult,
    IntervalVerdict,
    bonferroni_test,
    individual_flags,
    pavsi,
    run_full_test,
    tft,
)
