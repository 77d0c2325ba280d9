"""Nested reduced-rank regression for multivariate functional data.

Pipeline: build B-spline bases (:mod:`nrrr.basis`), integrate observed curves
into design matrices (:mod:`nrrr.integrate`), fit nested or classical
reduced-rank estimators (:mod:`nrrr.estimators`), select ranks by BIC or
cross validation (:mod:`nrrr.rank_select`), and benchmark on synthetic data
(:mod:`nrrr.sim`). The ``nrrr`` command line wraps all of it.
"""

from .errors import ConfigError, DataError, NumericalError, NumericsWarning
from .basis import BasisSpec, GramMatrix, make_bspline, eval_basis, gram, inv_sqrt
from .integrate import FunctionalSample, IntegratedDesign, integrate_x, \
    integrate_y, assemble_design
from .estimators import NrrrConfig, NrrrFit, RrrFit, ols_fit, rrr_fit, \
    rrs_fit, nrrr_init, nrrr_fit, nrrs_fit, nrrr_x_fit, coef_surface, predict
from .rank_select import RankLimits, RankSearchResult, df_hat, bic, \
    select_ranks_bic, select_ranks_cv
from .sim import ScenarioSpec, GeneratedData, generate, mspe, msfpe, rmspe, \
    run_replications, setting_1, setting_2

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "NumericalError", "NumericsWarning",
    "BasisSpec", "GramMatrix", "make_bspline", "eval_basis", "gram",
    "inv_sqrt",
    "FunctionalSample", "IntegratedDesign", "integrate_x", "integrate_y",
    "assemble_design",
    "NrrrConfig", "NrrrFit", "RrrFit", "ols_fit", "rrr_fit", "rrs_fit",
    "nrrr_init", "nrrr_fit", "nrrs_fit", "nrrr_x_fit", "coef_surface",
    "predict",
    "RankLimits", "RankSearchResult", "df_hat", "bic", "select_ranks_bic",
    "select_ranks_cv",
    "ScenarioSpec", "GeneratedData", "generate", "mspe", "msfpe", "rmspe",
    "run_replications", "setting_1", "setting_2",
    "__version__",
]
