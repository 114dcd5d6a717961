"""Dynamic Bayesian predictive synthesis of multivariate forecast densities."""
from .errors import BpsError, ConfigError, DataError, NumericalError
from .densities import Empirical, Normal, StudentT
from .dlm_ffbs import DiscountConfig, backward_sample_theta, forward_filter_step, sample_theta_path
from .discount_volatility import (backward_sample_volatility, sample_discount_wishart,
                                  sample_volatility_path, sample_wishart, volatility_filter_step)
from .agent_states import (AgentPriors, sample_phi, sample_states_empirical, sample_states_normal,
                           sample_states_t)
from .synthesizer import (BpsPrior, ForecastDistribution, McmcConfig, PosteriorDraws,
                          forecast_one_step, gibbs_sweep, initialize_states, run_mcmc)
from .agents import (ForecastArchive, LagSpec, TvpVarState, agent_forecast, build_forecast_target,
                     fit_tvpvar_filter, parse_lag_spec)
from .evaluation import bma_baseline, kl_gaussian, kl_mc, lpdr, msfe, predictive_logpdf
from .panel import TimeSeriesPanel, load_panel, save_panel, synth_generate
from .config import RunConfig, load_config, parse_config
from .pipeline import align_one_step, build_bps_k_dataset, fit_agents, sequential_run

__version__ = "0.1.0"
