import numpy as np
import pytest

from regime_bidask.asset_dynamics import simulate_paths
from regime_bidask.chain_sim import ChainPath, simulate_chain
from regime_bidask.measure import (DensityError, girsanov_density, lambda1_pathwise, lambda1_sde,
                                   lambda2_esscher, lambda2_exact, reweighted_rate_check,
                                   stochastic_exponential_check)
from regime_bidask.model_core import esscher_theta

from conftest import single_regime, standard_model

A = np.array([[-1.0, 2.0], [1.0, -2.0]])


def test_identity_change_is_one():
    p = simulate_chain(A, 0, 2.0, seed=1)
    assert lambda1_pathwise(p, A, A).lambda1 == pytest.approx(1.0, abs=1e-15)


def test_no_jump_path_against_sde():
    B = A * np.array([1.7, 0.6])
    p = ChainPath(1, np.array([]), np.array([], dtype=int), 1.3, 2)
    closed = lambda1_pathwise(p, A, B).lambda1
    assert closed == pytest.approx(np.exp((B[1, 1] - A[1, 1]) * 1.3), rel=1e-14)
    assert abs(lambda1_sde(p, A, B) - closed) <= 1e-10 * closed


def test_closed_form_matches_sde_on_random_paths(rng):
    for k in range(100):
        u = rng.uniform(0.5, 2.0, 2)
        B = A * u
        p = simulate_chain(A, int(rng.integers(2)), 1.0, seed=k)
        closed = lambda1_pathwise(p, A, B).lambda1
        assert lambda1_sde(p, A, B) == pytest.approx(closed, rel=1e-8)


def test_zero_rate_jump_undefined():
    A3 = np.array([[-1.0, 0.0], [1.0, 0.0]])
    p = ChainPath(1, np.array([0.5]), np.array([0]), 1.0, 2)
    with pytest.raises(DensityError, match="zero rate"):
        lambda1_pathwise(p, A3, A3)


def test_reweighting_recovers_controlled_rates():
    rec, B = reweighted_rate_check(standard_model(), [1.6, 0.7], 0, 1.0, 100_000, seed=2)
    assert abs(rec.density_mean - 1.0) <= 3 * rec.density_se
    for i, j in [(0, 1), (1, 0)]:
        assert abs(rec.rates[j, i] - B[j, i]) / B[j, i] < 0.05
        assert abs(rec.holding_means[i] - 1 / -B[i, i]) * -B[i, i] < 0.05


def test_lambda2_trivial_and_single_interval():
    assert lambda2_esscher([0.3, -0.1], [0.0, 0.0], 0.5).lambda2 == 1.0
    d = lambda2_esscher([0.4], [1.5], 0.25)
    assert d.log_lambda2 == pytest.approx(1.5 * 0.4 - 0.5 * 1.5 ** 2 * 0.25)
    assert d.value == pytest.approx(d.lambda1 * d.lambda2, rel=1e-12)


def test_lambda2_shape_mismatch():
    with pytest.raises(DensityError):
        lambda2_esscher([0.1, 0.2], [1.0], 0.1)


def test_lambda2_grid_sum_matches_exact_for_regime_kernel():
    m = standard_model((1.0, 1.2))
    paths = simulate_paths(m, 0, 100.0, 1.0, 20, 200, seed=3, record_steps=True)
    theta = esscher_theta(m, [1.0, 1.0])
    # per-step kernel held at the left state matches the exact result when no jump occurs in a step
    calm = paths.jumps_steps.sum(axis=(1, 2)) == 0
    kern = theta[paths.states[:, :-1]]
    grid = lambda2_esscher(paths.dW, kern, 1.0 / 20).log_lambda2
    np.testing.assert_allclose(grid[calm], lambda2_exact(paths, theta)[calm], rtol=1e-10, atol=1e-12)


def test_density_means_are_one():
    m = standard_model((1.0, 1.2))
    u = np.array([1.8, 0.6])
    paths = simulate_paths(m, 0, 100.0, 1.0, 10, 100_000, seed=9)
    d = girsanov_density(paths, m, u)
    for w in (d.lambda1, d.lambda2, d.value):
        w = np.asarray(w)
        assert abs(w.mean() - 1.0) <= 3 * w.std(ddof=1) / np.sqrt(w.size)


def test_density_needs_p_paths():
    m = standard_model()
    paths = simulate_paths(m, 0, 100.0, 1.0, 5, 10, seed=1, measure="Q", control=np.ones(2))
    with pytest.raises(DensityError):
        girsanov_density(paths, m, np.ones(2))


def test_stochastic_exponential_mean_and_bound():
    rep = stochastic_exponential_check(standard_model(), np.ones(2), 0, 1.0, 100_000, seed=4)
    assert rep.mean_ok
    assert rep.second_moment <= rep.bound * (1 + 3 * rep.second_moment_se / rep.second_moment)


def test_stochastic_exponential_trivial():
    m = single_regime(mu=0.02, rate=0.02)
    rep = stochastic_exponential_check(m, [1.0], 0, 1.0, 100, seed=0)
    assert rep.mean == 1.0 and rep.mean_se == 0.0
