"""Bayesian shape reconstruction of sound-soft obstacles from phaseless far-field data."""

from .bayes import ExactForward, GaussianPrior, PosteriorContext, hastings_ratio, log_prior, misfit
from .errors import ConfigError, GeometryError, ParameterError, PriorMismatchError, SolverError
from .forward import ScatteringSetup, far_field_matrix, forward_map, solve_far_field
from .geometry import BoundaryCurve, Family, ObstacleParams, is_valid, make_curve, sample_boundary
from .mcmc import Algorithm, ChainConfig, ChainResult, run_chain
from .observe import NoiseCovariance, NoiseModel, ObservationMatrix, covariance, pre_between, synthesize

__version__ = "0.1.0"
