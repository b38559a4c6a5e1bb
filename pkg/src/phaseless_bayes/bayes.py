"""Gaussian prior, data misfit and the Metropolis-Hastings acceptance ratio.

Only differences of log-densities are ever formed, so the posterior
normalisation constant is never needed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, SolverError
from .forward import ScatteringSetup, forward_map
from .geometry import Family, ObstacleParams, is_valid, make_curve
from .observe import NoiseCovariance, ObservationMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaussianPrior:
    """Isotropic Gaussian ``N(mean, variance * I)``."""

    mean: np.ndarray = field(repr=False)
    variance: float = 1.0

    def __post_init__(self):
        m = np.array(self.mean, dtype=float).reshape(-1)
        m.setflags(write=False)
        object.__setattr__(self, "mean", m)
        if not self.variance > 0:
            raise ValueError("prior variance must be positive")

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.mean + self.std * rng.standard_normal(shape)

    def standardize(self, z) -> np.ndarray:
        return (np.asarray(z, dtype=float) - self.mean) / self.std


def _values(z) -> np.ndarray:
    return z.values if isinstance(z, ObstacleParams) else np.asarray(z, dtype=float)


def log_prior(z, prior: GaussianPrior) -> float:
    """``-|z - m|^2 / (2 sigma_pr)`` with the normalising constant dropped."""
    d = _values(z) - prior.mean
    return -float(d @ d) / (2.0 * prior.variance)


def log_prior_gradient(z, prior: GaussianPrior) -> np.ndarray:
    return -(_values(z) - prior.mean) / prior.variance


def hastings_ratio(phi_current: float, phi_candidate: float) -> float:
    """``min(1, exp(phi_current - phi_candidate))`` with infinite misfits handled."""
    if math.isinf(phi_candidate):
        return 1.0 if math.isinf(phi_current) else 0.0
    if math.isinf(phi_current):
        return 1.0
    d = phi_current - phi_candidate
    return 1.0 if d >= 0 else math.exp(d)


class ExactForward:
    """Phaseless forward map ``Z -> (M, L)`` backed by the boundary-integral solver."""

    def __init__(self, setup: ScatteringSetup, family: Family | str, r_min=None, d_min=None,
                 check_simple: bool = True):
        self.setup = setup
        self.family = Family(family)
        self._valid_kw = {"check_simple": check_simple}
        if r_min is not None:
            self._valid_kw["r_min"] = r_min
        if d_min is not None:
            self._valid_kw["d_min"] = d_min

    def curve(self, values):
        return make_curve(ObstacleParams(self.family, values))

    def is_valid(self, values) -> bool:
        return is_valid(self.curve(values), self.setup.sources, **self._valid_kw)

    def __call__(self, values) -> np.ndarray:
        curve = self.curve(values)
        if not is_valid(curve, self.setup.sources, **self._valid_kw):
            raise GeometryError("invalid geometry")
        return forward_map(curve, self.setup, check=False)


class PosteriorContext:
    """Observations, noise covariance, forward evaluator and prior.

    ``forward`` maps a raw parameter vector to an ``(M, L)`` array and raises
    :class:`GeometryError` or :class:`SolverError` when it cannot.
    """

    def __init__(self, observations, noise: NoiseCovariance, forward, prior: GaussianPrior):
        data = observations.data if isinstance(observations, ObservationMatrix) else observations
        self.data = np.asarray(data, dtype=float)
        self.noise = noise
        self.precision = noise.precision
        self.forward = forward
        self.prior = prior
        if self.precision.shape != self.data.shape:
            raise ValueError("covariance and observation shapes differ")
        self.n_forward = 0

    @property
    def dim(self) -> int:
        return self.prior.dim

    def misfit_from_prediction(self, pred) -> float | np.ndarray:
        """Sum over sources of ``0.5 |Y - G|^2_Sigma`` for one or many predictions."""
        r = self.data - pred
        return 0.5 * np.sum(r * r * self.precision, axis=(-2, -1))

    def misfit(self, z) -> float:
        """Data misfit, or ``+inf`` when the geometry is invalid or the solve fails."""
        values = _values(z)
        self.n_forward += 1
        try:
            pred = self.forward(values)
        except (GeometryError, SolverError) as exc:
            logger.debug("misfit sentinel for %s: %s", values, exc)
            return math.inf
        return float(self.misfit_from_prediction(pred))

    def misfit_batch(self, values) -> np.ndarray:
        values = np.atleast_2d(values)
        batch = getattr(self.forward, "batch", None)
        if batch is not None:
            self.n_forward += len(values)
            return np.asarray(self.misfit_from_prediction(batch(values)), dtype=float)
        return np.array([self.misfit(v) for v in values])

    def misfit_component(self, z, n: int, component_values) -> np.ndarray:
        """Misfits of ``z`` with component ``n`` replaced by each entry of ``component_values``."""
        component_values = np.asarray(component_values, dtype=float)
        cond = getattr(self.forward, "conditional", None)
        if cond is not None:
            self.n_forward += component_values.size
            pred = cond(z, n).evaluate(component_values)
            return np.asarray(self.misfit_from_prediction(pred), dtype=float)
        cand = np.repeat(np.asarray(z, dtype=float)[None, :], component_values.size, axis=0)
        cand[:, n] = component_values
        return self.misfit_batch(cand)


def misfit(z, ctx: PosteriorContext) -> float:
    return ctx.misfit(z)


def log_posterior(z, ctx: PosteriorContext) -> float:
    """Unnormalised log-posterior ``-Phi(z) + log_prior(z)``."""
    return -ctx.misfit(z) + log_prior(z, ctx.prior)
