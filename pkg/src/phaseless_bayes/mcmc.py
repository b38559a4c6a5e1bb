"""Component-wise pCN samplers.

Three drivers share one random stream layout:

* ``alg1``: Gibbs sweep with a Metropolis-Hastings accept step and a
  per-component random proposal variance ``beta_n``;
* ``alg3``: multi-candidate Gibbs, best of ``J_hat_1`` true-misfit candidates;
* ``alg2-surrogate``: the same pool ranked by a surrogate misfit, with only the
  ``J_hat_2`` most promising candidates re-evaluated by the true forward map.

Chains store ``Z_0 .. Z_J0`` (``J0 + 1`` states, ``Z_0`` the initial draw);
selection indices are 0-based into that array.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bayes import PosteriorContext, hastings_ratio
from .errors import ConfigError, PriorMismatchError

logger = logging.getLogger(__name__)

MAX_INIT_DRAWS = 10000


class Algorithm(str, enum.Enum):
    GIBBS = "alg1"
    MULTI = "alg3"
    SURROGATE = "alg2-surrogate"


class Selection(str, enum.Enum):
    BEST = "best"
    HASTINGS = "hastings"


@dataclass(frozen=True)
class ChainConfig:
    """Iteration counts and proposal settings.

    ``J3`` must equal ``(J0 - J1) // J2 + 1`` so that the selected states
    ``J1, J1 + J2, ..., J0`` end exactly at the last state.

    ``selection`` controls how the multi-candidate drivers adopt the best
    candidate: ``"best"`` takes it unconditionally, ``"hastings"`` passes it
    through the Metropolis-Hastings test.  ``include_mean=False`` uses the
    mean-free proposal ``sqrt(1 - beta^2) z + beta w`` in those drivers.
    ``keep_current=True`` keeps the current value when no candidate improves
    on it, which makes the misfit trace non-increasing.
    """

    J0: int = 20000
    J1: int = 10000
    J2: int = 100
    J3: int = 101
    gamma: float = 0.1
    beta0: float = 0.5
    J_hat_1: int = 1000
    J_hat_2: int = 100
    seed: int = 0
    selection: Selection = Selection.BEST
    include_mean: bool = True
    keep_current: bool = False

    def __post_init__(self):
        object.__setattr__(self, "selection", Selection(self.selection))
        if min(self.J0, self.J2, self.J3) < 1 or self.J1 < 0:
            raise ConfigError("J0, J2, J3 must be positive and J1 non-negative")
        if not self.J1 < self.J0:
            raise ConfigError(f"burn-in J1={self.J1} must be below J0={self.J0}")
        expected = (self.J0 - self.J1) // self.J2 + 1
        if self.J3 != expected:
            raise ConfigError(
                f"J3={self.J3} inconsistent with J0={self.J0}, J1={self.J1}, J2={self.J2}; "
                f"expected {expected}"
            )
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.beta0 <= 1.0:
            raise ConfigError("gamma and beta0 must lie in [0, 1]")
        if self.J_hat_1 < 1 or not 1 <= self.J_hat_2 <= self.J_hat_1:
            raise ConfigError("need 1 <= J_hat_2 <= J_hat_1")

    def selection_indices(self) -> np.ndarray:
        return self.J1 + self.J2 * np.arange(self.J3)

    def replace(self, **changes) -> "ChainConfig":
        return replace(self, **changes)


@dataclass
class ChainState:
    z: np.ndarray
    beta: np.ndarray
    misfit: float
    iteration: int = 0
    accepted: int = 0
    true_evals: int = 0

    def copy(self) -> "ChainState":
        return ChainState(self.z.copy(), self.beta.copy(), self.misfit, self.iteration,
                          self.accepted, self.true_evals)


def chain_generator(seed: int) -> np.random.Generator:
    """Random stream of the sampler, independent of the noise stream for the same seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(1,))))


def pcn_propose(z_n, m_n, beta_n, omega_n):
    """``m + sqrt(1 - beta^2) (z - m) + beta * omega``; vectorises over ``omega_n``."""
    return m_n + math.sqrt(1.0 - beta_n * beta_n) * (z_n - m_n) + beta_n * omega_n


def beta_update(beta_n: float, gamma: float, omega_beta: float) -> float:
    """Random-walk update of the proposal coefficient, folded back into ``[0, 1]``."""
    b = math.sqrt(1.0 - gamma * gamma) * beta_n + gamma * (omega_beta - 0.5)
    if b < 0.0:
        b = -b
    elif b > 1.0:
        b -= 1.0
    return min(1.0, max(0.0, b))


def gibbs_sweep(state: ChainState, ctx: PosteriorContext, cfg: ChainConfig,
                rng: np.random.Generator) -> ChainState:
    """One Metropolis-within-Gibbs sweep over all components."""
    s = state.copy()
    mean = ctx.prior.mean
    std = ctx.prior.std
    for n in range(s.z.size):
        omega = std * rng.standard_normal()
        cand = s.z.copy()
        cand[n] = pcn_propose(s.z[n], mean[n], s.beta[n], omega)
        phi = ctx.misfit(cand)
        s.true_evals += 1
        if rng.random() <= hastings_ratio(s.misfit, phi):
            s.z, s.misfit = cand, phi
            s.accepted += 1
        s.beta[n] = beta_update(s.beta[n], cfg.gamma, rng.random())
    s.iteration += 1
    return s


def _candidates(s: ChainState, n: int, ctx, cfg: ChainConfig, rng) -> np.ndarray:
    omega = ctx.prior.std * rng.standard_normal(cfg.J_hat_1)
    m_n = ctx.prior.mean[n] if cfg.include_mean else 0.0
    return pcn_propose(s.z[n], m_n, s.beta[n], omega)


def _adopt(s: ChainState, n: int, value: float, phi: float, cfg: ChainConfig, rng) -> None:
    if cfg.selection is Selection.HASTINGS:
        take = rng.random() <= hastings_ratio(s.misfit, phi)
    else:
        take = math.isfinite(phi)
    if take and cfg.keep_current and phi > s.misfit:
        take = False
    if take and math.isfinite(phi):
        s.z[n] = value
        s.misfit = float(phi)
        s.accepted += 1


def multi_candidate_step(state: ChainState, ctx: PosteriorContext, cfg: ChainConfig,
                         rng: np.random.Generator) -> ChainState:
    """Sweep in which each component takes the best of ``J_hat_1`` true-misfit candidates."""
    s = state.copy()
    for n in range(s.z.size):
        cand = _candidates(s, n, ctx, cfg, rng)
        phi = ctx.misfit_component(s.z, n, cand)
        s.true_evals += cand.size
        best = int(np.argsort(phi, kind="stable")[0])
        _adopt(s, n, cand[best], phi[best], cfg, rng)
        s.beta[n] = beta_update(s.beta[n], cfg.gamma, rng.random())
    s.iteration += 1
    return s


def surrogate_screen_step(state: ChainState, ctx_true: PosteriorContext,
                          ctx_surrogate: PosteriorContext, cfg: ChainConfig,
                          rng: np.random.Generator) -> ChainState:
    """Sweep that ranks the pool by surrogate misfit and re-ranks a shortlist exactly."""
    s = state.copy()
    for n in range(s.z.size):
        cand = _candidates(s, n, ctx_true, cfg, rng)
        approx = ctx_surrogate.misfit_component(s.z, n, cand)
        short = np.argsort(approx, kind="stable")[: cfg.J_hat_2]
        phi = ctx_true.misfit_component(s.z, n, cand[short])
        s.true_evals += short.size
        best = int(short[np.argsort(phi, kind="stable")[0]])
        _adopt(s, n, cand[best], float(np.min(phi)), cfg, rng)
        s.beta[n] = beta_update(s.beta[n], cfg.gamma, rng.random())
    s.iteration += 1
    return s


def select_states(chain, cfg: ChainConfig) -> np.ndarray:
    """States at indices ``J1, J1 + J2, ..., J1 + (J3 - 1) J2`` as a ``(J3, N)`` array."""
    if isinstance(chain, ChainResult):
        states = chain.states
    elif len(chain) and isinstance(chain[0], ChainState):
        states = np.array([c.z for c in chain])
    else:
        states = np.asarray(chain, dtype=float)
    idx = cfg.selection_indices()
    if idx[-1] >= len(states):
        raise ConfigError(f"selection index {idx[-1]} beyond chain of length {len(states)}")
    return states[idx]


def point_estimate(selected) -> np.ndarray:
    """Component-wise mean of the selected states."""
    sel = np.asarray(selected, dtype=float)
    if sel.ndim != 2 or sel.shape[0] == 0:
        raise ValueError("need a non-empty (n, N) array of states")
    return sel.mean(axis=0)


@dataclass
class ChainResult:
    algorithm: Algorithm
    config: ChainConfig
    states: np.ndarray = field(repr=False)
    misfits: np.ndarray = field(repr=False)
    betas: np.ndarray = field(repr=False)
    accepted: int = 0
    true_evals: int = 0
    elapsed: float = 0.0

    @property
    def selected(self) -> np.ndarray:
        return select_states(self.states, self.config)

    @property
    def estimate(self) -> np.ndarray:
        return point_estimate(self.selected)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / max(1, self.config.J0 * self.states.shape[1])

    def write_csv(self, path) -> None:
        N = self.states.shape[1]
        header = (["iteration"] + [f"z_{i + 1}" for i in range(N)] + ["misfit"]
                  + [f"beta_{i + 1}" for i in range(N)])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j in range(self.states.shape[0]):
                w.writerow([j] + [repr(float(v)) for v in self.states[j]]
                           + [repr(float(self.misfits[j]))]
                           + [repr(float(v)) for v in self.betas[j]])


def initial_state(ctx: PosteriorContext, cfg: ChainConfig, rng: np.random.Generator,
                  init=None) -> ChainState:
    """Prior draw with finite misfit (redrawn as needed), or ``init`` if given."""
    N = ctx.dim
    beta = np.full(N, cfg.beta0)
    if init is not None:
        z = np.array(init, dtype=float)
        return ChainState(z, beta, ctx.misfit(z), true_evals=1)
    for tries in range(1, MAX_INIT_DRAWS + 1):
        z = ctx.prior.sample(rng)
        phi = ctx.misfit(z)
        if math.isfinite(phi):
            return ChainState(z, beta, phi, true_evals=tries)
    raise PriorMismatchError(f"no valid initial state in {MAX_INIT_DRAWS} prior draws")


def run_chain(ctx: PosteriorContext, cfg: ChainConfig, algorithm: Algorithm | str = Algorithm.GIBBS,
              surrogate_ctx: PosteriorContext | None = None, init=None,
              progress_every: int = 0) -> ChainResult:
    """Run ``J0`` sweeps of the chosen driver and record the full trace."""
    algorithm = Algorithm(algorithm)
    if algorithm is Algorithm.SURROGATE and surrogate_ctx is None:
        raise ConfigError("the surrogate driver needs a surrogate posterior context")
    rng = chain_generator(cfg.seed)
    t0 = time.perf_counter()
    state = initial_state(ctx, cfg, rng, init)
    N = state.z.size
    states = np.empty((cfg.J0 + 1, N))
    misfits = np.empty(cfg.J0 + 1)
    betas = np.empty((cfg.J0 + 1, N))
    states[0], misfits[0], betas[0] = state.z, state.misfit, state.beta
    for j in range(1, cfg.J0 + 1):
        if algorithm is Algorithm.GIBBS:
            state = gibbs_sweep(state, ctx, cfg, rng)
        elif algorithm is Algorithm.MULTI:
            state = multi_candidate_step(state, ctx, cfg, rng)
        else:
            state = surrogate_screen_step(state, ctx, surrogate_ctx, cfg, rng)
        states[j], misfits[j], betas[j] = state.z, state.misfit, state.beta
        if progress_every and j % progress_every == 0:
            logger.info("%s sweep %d/%d misfit %.4g", algorithm.value, j, cfg.J0, state.misfit)
    elapsed = time.perf_counter() - t0
    return ChainResult(algorithm, cfg, states, misfits, betas, state.accepted,
                       state.true_evals, elapsed)
