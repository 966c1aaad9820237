"""Equivalence testing of laboratories in multi-level proficiency studies.

Fits a multivariate ultrastructural measurement-error model by EM and tests
every participant's additive and multiplicative bias against a reference lab.
"""

import types as _types

from .em import EmSettings, FitResult, e_step, fit_em, m_step
from .errors import (
    DimensionError,
    DomainError,
    InputError,
    NumericalError,
    NumericOverflowError,
    ProftestError,
    RankError,
    SingularDesignError,
    SingularInformationError,
)
from .inference import (
    EllipseSpec,
    WaldReport,
    WaldResult,
    adjust_pvalues,
    confidence_ellipse,
    wald_composite,
    wald_global,
    wald_individual,
    wald_report,
)
from .information import limit_matrix, observed_information, score
from .io import bundled_path, emit_report, parse_design, parse_measurements, write_measurements
from .model import Measurements, ParameterVector, StudyDesign, log_likelihood
from .simulation import StudyConfig, StudyResult, empirical_size_study, power_study, simulate_dataset
from .special import chi2_cdf, chi2_quantile, chi2_sf

__version__ = "0.1.0"

__all__ = [name for name, obj in globals().items() if not name.startswith("_") and not isinstance(obj, _types.ModuleType)]
