import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaseless_bayes import (
    ConfigError, ExactForward, GaussianPrior, PosteriorContext, PriorMismatchError, ScatteringSetup,
    covariance,
)
from phaseless_bayes.geometry import KITE_EXACT, unit_circle
from phaseless_bayes.mcmc import (
    ChainConfig, ChainState, beta_update, chain_generator, gibbs_sweep, multi_candidate_step,
    pcn_propose, point_estimate, run_chain, select_states, surrogate_screen_step,
)
from phaseless_bayes.observe import NoiseCovariance


class QuadForward:
    """Cheap smooth forward map ``Z -> (M, L)`` for sampler tests."""

    def __init__(self, M=3, L=2, invalid=None):
        self.M, self.L, self.invalid = M, L, invalid
        self.calls = 0

    def __call__(self, z):
        from phaseless_bayes import GeometryError
        self.calls += 1
        z = np.asarray(z, dtype=float)
        if self.invalid is not None and self.invalid(z):
            raise GeometryError("invalid")
        base = np.outer(np.arange(1, self.M + 1), np.arange(1, self.L + 1)) * 0.1
        return base * (1.0 + z.sum()) + z[0] ** 2


def quad_ctx(N=3, var=1.0, invalid=None, target=None):
    fw = QuadForward(invalid=invalid)
    prior = GaussianPrior(np.zeros(N), 1.0)
    y = fw(np.zeros(N) if target is None else target)
    fw.calls = 0
    return PosteriorContext(y, NoiseCovariance(np.full(y.shape, var)), fw, prior)


class FrozenRng:
    """Zero Gaussian draws and constant uniforms."""

    def __init__(self, u=1.0):
        self.u = u

    def standard_normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)

    def random(self, size=None):
        return self.u if size is None else np.full(size, self.u)


# -- proposals and beta

def test_pcn_examples():
    assert pcn_propose(1.7, 0.3, 0.0, 5.0) == 1.7
    assert pcn_propose(1.7, 0.3, 1.0, 0.4) == pytest.approx(0.7)
    assert pcn_propose(0.3, 0.3, 0.6, 0.5) == pytest.approx(0.3 + 0.6 * 0.5)


def test_beta_update_examples():
    assert beta_update(0.37, 0.0, 0.9) == 0.37
    assert beta_update(0.0, 0.1, 0.2) == pytest.approx(0.03)
    # above one wraps by subtracting one
    b = math.sqrt(1 - 0.01) * 1.0 + 0.1 * 0.5
    assert beta_update(1.0, 0.1, 1.0) == pytest.approx(b - 1.0)


def test_beta_update_range_sweep():
    rng = np.random.default_rng(0)
    b = 0.5
    out = np.empty(1_000_000)
    for i, (g, w) in enumerate(zip(rng.uniform(0, 1, out.size), rng.uniform(0, 1, out.size))):
        b = beta_update(b, g, w)
        out[i] = b
    assert out.min() >= 0.0 and out.max() <= 1.0


@settings(max_examples=500, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_beta_update_stays_in_unit_interval(beta, gamma, w):
    assert 0.0 <= beta_update(beta, gamma, w) <= 1.0


# -- configuration and selection

def test_config_validation():
    ChainConfig()  # the default settings are consistent
    ChainConfig(J0=100, J1=50, J2=1, J3=51)
    for bad in (dict(J3=100), dict(J1=20000), dict(gamma=1.5), dict(J_hat_2=2000), dict(beta0=-0.1)):
        with pytest.raises(ConfigError):
            ChainConfig(**bad)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 5000), st.data())
def test_selection_identity(J0, data):
    J1 = data.draw(st.integers(0, J0 - 1))
    J2 = data.draw(st.integers(1, J0))
    J3 = (J0 - J1) // J2 + 1
    cfg = ChainConfig(J0=J0, J1=J1, J2=J2, J3=J3)
    idx = cfg.selection_indices()
    assert len(idx) == J3 and idx[0] == J1 and idx[-1] <= J0 and idx[-1] + J2 > J0


def test_select_states_examples():
    cfg = ChainConfig()
    chain = np.arange(20001, dtype=float)[:, None]
    sel = select_states(chain, cfg)
    assert sel.shape == (101, 1) and sel[0, 0] == 10000 and sel[1, 0] == 10100 and sel[-1, 0] == 20000
    tail = ChainConfig(J0=100, J1=50, J2=1, J3=51)
    np.testing.assert_array_equal(select_states(np.arange(101.0)[:, None], tail)[:, 0], np.arange(50, 101))
    with pytest.raises(ConfigError):
        select_states(np.arange(50.0)[:, None], tail)


def test_point_estimate_examples(rng):
    s = rng.normal(size=(1, 4))
    np.testing.assert_array_equal(point_estimate(s), s[0])
    two = rng.normal(size=(2, 4))
    np.testing.assert_allclose(point_estimate(two), 0.5 * (two[0] + two[1]))
    many = rng.normal(size=(9, 4))
    np.testing.assert_allclose(point_estimate(many[::-1]), point_estimate(many), rtol=1e-15)
    with pytest.raises(ValueError):
        point_estimate(np.zeros((0, 4)))


# -- Gibbs sweep

def test_zero_information_accepts_everything():
    ctx = quad_ctx(var=1e300)
    cfg = ChainConfig(J0=50, J1=0, J2=1, J3=51)
    res = run_chain(ctx, cfg)
    assert res.accepted == 50 * 3


def test_frozen_randomness_contracts_to_mean():
    ctx = quad_ctx(target=np.zeros(3))
    state = ChainState(np.array([0.8, -0.4, 0.2]), np.full(3, 0.5), 0.0)
    state.misfit = ctx.misfit(state.z)
    cfg = ChainConfig(J0=10, J1=0, J2=1, J3=11)
    new = gibbs_sweep(state, ctx, cfg, FrozenRng(1.0))
    # omega = 0 pulls a component towards m = 0; with U = 1 only non-increasing moves survive
    shrunk = state.z * math.sqrt(1 - 0.25)
    moved = 0
    for a, old, s in zip(new.z, state.z, shrunk):
        assert a == old or a == pytest.approx(s, rel=1e-15)
        moved += a != old
    assert moved >= 1 and new.accepted == moved
    assert new.misfit <= state.misfit
    # with the optimum at the current point every contraction raises the misfit and is refused
    ctx2 = quad_ctx(target=state.z)
    state.misfit = ctx2.misfit(state.z)
    same = gibbs_sweep(state, ctx2, cfg, FrozenRng(1.0))
    np.testing.assert_array_equal(same.z, state.z)


def test_cached_misfit_matches_fresh():
    ctx = quad_ctx(target=np.array([0.3, -0.2, 0.1]))
    res = run_chain(ctx, ChainConfig(J0=40, J1=20, J2=10, J3=3, seed=4))
    for z, phi in zip(res.states[::7], res.misfits[::7]):
        assert ctx.misfit(z) == phi


def test_flat_misfit_preserves_prior():
    m = np.array([0.5, -1.0])
    prior = GaussianPrior(m, 1.0)
    y = np.zeros((1, 1))
    ctx = PosteriorContext(y, NoiseCovariance(np.ones((1, 1))), lambda z: y, prior)
    # four independent 50k-sweep chains; one chain alone leaves the variance with a ~5% standard error
    x = np.concatenate([run_chain(ctx, ChainConfig(J0=50000, J1=0, J2=1, J3=50001, seed=s)).states[1:]
                        for s in range(4)])
    # batch means give a standard error that accounts for autocorrelation
    batches = x.reshape(200, 1000, 2).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / math.sqrt(200)
    assert np.all(np.abs(x.mean(axis=0) - m) <= 3 * se)
    assert np.all(np.abs(x.var(axis=0) - 1.0) <= 0.1)


def test_betas_stay_in_range():
    res = run_chain(quad_ctx(target=np.array([1.0, 0.0, -1.0])), ChainConfig(J0=300, J1=100, J2=100, J3=3))
    assert res.betas.min() >= 0.0 and res.betas.max() <= 1.0


def test_seed_reproducibility_exact_forward():
    setup = ScatteringSetup(k=2.0, R=6.0, L=6, M=6, n_quad=32)
    fw = ExactForward(setup, "kite")
    y = fw(np.array(KITE_EXACT))
    ctx = PosteriorContext(y, covariance(y, "multiplicative", 0.03), fw, GaussianPrior(unit_circle().values))
    cfg = ChainConfig(J0=20, J1=10, J2=5, J3=3, seed=8)
    a, b = run_chain(ctx, cfg), run_chain(ctx, cfg)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.misfits, b.misfits)
    np.testing.assert_array_equal(a.betas, b.betas)
    c = run_chain(ctx, cfg.replace(seed=9))
    assert not np.array_equal(a.states, c.states)


def test_no_valid_initial_state():
    ctx = quad_ctx()
    ctx.forward.invalid = lambda z: True
    with pytest.raises(PriorMismatchError):
        run_chain(ctx, ChainConfig(J0=2, J1=0, J2=1, J3=3))


def test_invalid_proposals_are_rejected():
    ctx = quad_ctx(invalid=lambda z: z[0] > 0.5)
    res = run_chain(ctx, ChainConfig(J0=200, J1=0, J2=1, J3=201, seed=2), init=np.zeros(3))
    assert np.all(res.states[:, 0] <= 0.5) and np.all(np.isfinite(res.misfits))


# -- multi-candidate and surrogate drivers

def _state(ctx, z):
    z = np.asarray(z, dtype=float)
    return ChainState(z, np.full(z.size, 0.5), ctx.misfit(z))


def test_single_candidate_pool_takes_candidate():
    ctx = quad_ctx(target=np.array([0.2, 0.1, -0.3]))
    cfg = ChainConfig(J0=1, J1=0, J2=1, J3=2, J_hat_1=1, J_hat_2=1)
    s0 = _state(ctx, [0.1, 0.1, 0.1])
    out = multi_candidate_step(s0, ctx, cfg, chain_generator(5))
    rng = chain_generator(5)
    z = s0.z.copy()
    beta = s0.beta.copy()
    for n in range(3):
        z[n] = pcn_propose(z[n], 0.0, beta[n], rng.standard_normal(1))[0]
        beta[n] = beta_update(beta[n], cfg.gamma, rng.random())
    np.testing.assert_allclose(out.z, z, rtol=0, atol=0)


def test_all_invalid_pool_keeps_state():
    ctx = quad_ctx(invalid=lambda z: abs(z[0]) > 1e-12)
    cfg = ChainConfig(J0=1, J1=0, J2=1, J3=2, J_hat_1=20, J_hat_2=5)
    s0 = _state(ctx, [0.0, 0.2, 0.1])
    out = multi_candidate_step(s0, ctx, cfg, chain_generator(0))
    assert out.z[0] == 0.0


def test_keep_current_gives_monotone_trace():
    ctx = quad_ctx(target=np.array([0.5, -0.5, 0.25]))
    cfg = ChainConfig(J0=40, J1=20, J2=20, J3=2, J_hat_1=5, J_hat_2=5, keep_current=True)
    res = run_chain(ctx, cfg, "alg3")
    assert np.all(np.diff(res.misfits) <= 0)
    plain = run_chain(ctx, cfg.replace(keep_current=False, J_hat_1=1, J_hat_2=1), "alg3")
    assert np.any(np.diff(plain.misfits) > 0)


def test_best_of_pool_not_worse_than_best_candidate():
    ctx = quad_ctx(target=np.array([0.5, -0.5, 0.25]))
    cfg = ChainConfig(J0=1, J1=0, J2=1, J3=2, J_hat_1=200, J_hat_2=10)
    s0 = _state(ctx, [0.4, -0.4, 0.2])
    rng = chain_generator(3)
    out = multi_candidate_step(s0, ctx, cfg, rng)
    assert out.misfit <= s0.misfit + 1e-12


def test_perfect_surrogate_matches_multi_candidate():
    ctx = quad_ctx(target=np.array([0.5, -0.5, 0.25]))
    sur = quad_ctx(target=np.array([0.5, -0.5, 0.25]))
    cfg = ChainConfig(J0=15, J1=5, J2=5, J3=3, J_hat_1=50, J_hat_2=7, seed=11)
    a = run_chain(ctx, cfg, "alg3")
    b = run_chain(ctx, cfg, "alg2-surrogate", surrogate_ctx=sur)
    np.testing.assert_array_equal(a.states, b.states)


def test_full_shortlist_ignores_surrogate_order():
    ctx = quad_ctx(target=np.array([0.5, -0.5, 0.25]))
    bad = PosteriorContext(ctx.data, ctx.noise, lambda z: np.full(ctx.data.shape, float(np.sum(z))), ctx.prior)
    cfg = ChainConfig(J0=10, J1=5, J2=5, J3=2, J_hat_1=30, J_hat_2=30, seed=2)
    a = run_chain(ctx, cfg, "alg3")
    b = run_chain(ctx, cfg, "alg2-surrogate", surrogate_ctx=bad)
    np.testing.assert_array_equal(a.states, b.states)


def test_surrogate_step_true_evaluation_budget():
    ctx = quad_ctx(target=np.array([0.5, -0.5, 0.25]))
    sur = quad_ctx(target=np.array([0.4, -0.5, 0.2]))
    cfg = ChainConfig(J0=1, J1=0, J2=1, J3=2, J_hat_1=100, J_hat_2=7)
    s0 = _state(ctx, [0.1, 0.1, 0.1])
    before = ctx.n_forward
    out = surrogate_screen_step(s0, ctx, sur, cfg, chain_generator(1))
    assert ctx.n_forward - before == 3 * 7
    assert out.true_evals - s0.true_evals == 3 * 7


def test_surrogate_driver_needs_context():
    with pytest.raises(ConfigError):
        run_chain(quad_ctx(), ChainConfig(J0=2, J1=0, J2=1, J3=3), "alg2-surrogate")


def test_chain_csv(tmp_path):
    res = run_chain(quad_ctx(), ChainConfig(J0=6, J1=2, J2=2, J3=3))
    res.write_csv(tmp_path / "chain.csv")
    rows = list(csv.reader(open(tmp_path / "chain.csv")))
    assert rows[0] == ["iteration", "z_1", "z_2", "z_3", "misfit", "beta_1", "beta_2", "beta_3"]
    assert len(rows) == 8 and rows[-1][0] == "6"
    assert res.selected.shape == (3, 3)
