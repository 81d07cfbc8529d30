import warnings

import numpy as np
import pytest

from regime_bidask.bidask_control import (Basis, BsdeError, ConsistencyError, StepSizeWarning,
                                          bid_ask, bsde_lsmc, flip_controls, hjb_solve,
                                          j_functional_mc, optimize_affine, optimize_driver,
                                          verify_optimality, vertex_choice)
from regime_bidask.bidask_control import bidask as bidask_mod
from regime_bidask.homotopy_pricer import GridSpec, bs_call, fd_price
from regime_bidask.model_core import ControlBox, driver_F, jump_integrand

from conftest import single_regime, standard_model

K, T = 100.0, 1.0
BS = float(bs_call(100.0, 100.0, 0.02, 0.2, 1.0))


@pytest.fixture(scope="module")
def grid():
    return GridSpec.around(100.0, T, 0.3)


@pytest.fixture(scope="module")
def hjb_pair(grid):
    m = standard_model()
    box = ControlBox.uniform(2, 0.5, 2.0)
    return m, box, {d: hjb_solve(m, box, K, T, grid, d) for d in ("inf", "sup")}


# ---------------------------------------------------------------- driver

def test_vertex_tie_break_takes_lower_bound():
    np.testing.assert_array_equal(vertex_choice(np.array([0.0, 1e-13, -1.0]), 0.5, 2.0, "inf"),
                                  [0.5, 0.5, 2.0])
    np.testing.assert_array_equal(vertex_choice(np.array([0.0, -1e-13, 1.0]), 0.5, 2.0, "sup"),
                                  [0.5, 0.5, 2.0])


def test_singleton_box_inf_equals_sup(scaled_model, rng):
    box = ControlBox.singleton([1.0, 1.0])
    phi2 = jump_integrand(rng.normal(size=2), 0)
    u1, lo = optimize_driver(0.0, 0, 0.7, phi2, scaled_model, box, "inf")
    u2, hi = optimize_driver(0.0, 0, 0.7, phi2, scaled_model, box, "sup")
    assert lo == hi == pytest.approx(driver_F(0.0, 0, [1.0, 1.0], 0.7, phi2, scaled_model))


def test_alpha_one_zero_phi2_is_constant_in_u(model, box):
    _, lo = optimize_driver(0.0, 1, 1.3, np.zeros(2), model, box, "inf")
    _, hi = optimize_driver(0.0, 1, 1.3, np.zeros(2), model, box, "sup")
    assert lo == pytest.approx(hi, abs=1e-14)


def test_vertex_matches_dense_grid(scaled_model, box, rng):
    axis = np.linspace(0.5, 2.0, 101)
    for _ in range(10):
        x = int(rng.integers(2))
        phi1 = rng.normal()
        phi2 = jump_integrand(rng.normal(size=2), x)
        vals = np.array([[driver_F(0.0, x, [a, b], phi1, phi2, scaled_model) for b in axis] for a in axis])
        for d, ref in (("inf", vals.min()), ("sup", vals.max())):
            _, v = optimize_driver(0.0, x, phi1, phi2, scaled_model, box, d)
            assert v == pytest.approx(ref, abs=1e-10)


def test_grid_fallback_for_custom_rate_map(model, box):
    rate_map = lambda u: model.generator * u[None, :] ** 2
    u, v = optimize_driver(0.0, 0, 0.0, np.array([0.0, 1.0]), model, box, "sup", rate_map=rate_map)
    assert v == pytest.approx(1.0 * 4.0 - 1.0)  # phi2 . (B - A) e_1 with b_21 = u_1^2
    assert u[0] == pytest.approx(2.0)


def test_optimize_affine_vectorised(box):
    f0 = np.array([0.0, 1.0])
    g = np.array([[1.0, 0.0], [0.0, -2.0]])
    u, v = optimize_affine(f0, g, box, "inf")
    np.testing.assert_array_equal(u, [[0.5, 0.5], [0.5, 2.0]])
    np.testing.assert_allclose(v, [0.5, -3.0])


# ---------------------------------------------------------------- HJB

def test_singleton_hjb_matches_fd(grid):
    m = standard_model()
    fd = fd_price(m, np.ones(2), K, T, grid)
    box = ControlBox.singleton([1.0, 1.0])
    for d in ("inf", "sup"):
        sol = hjb_solve(m, box, K, T, grid, d)
        assert sol.value(100.0, 0) == pytest.approx(fd.price(100.0, 0), rel=1e-3)


def test_single_regime_hjb_is_black_scholes(grid):
    m = single_regime()
    for box in (ControlBox.uniform(1, 0.5, 2.0), ControlBox.uniform(1, 0.1, 10.0)):
        for d in ("inf", "sup"):
            assert hjb_solve(m, box, K, T, grid, d).value(100.0, 0) == pytest.approx(BS, rel=1e-3)


def test_hjb_brackets_matched_fd_prices(grid, hjb_pair):
    m, box, sols = hjb_pair
    tol = 1e-6 * K
    for u in ([0.5, 0.5], [2.0, 0.5], [1.0, 1.7]):
        fd = fd_price(m, np.array(u), K, T, grid).values
        assert np.all(sols["inf"].values <= fd + tol)
        assert np.all(sols["sup"].values >= fd - tol)


def test_hjb_terminal_slice_is_payoff(hjb_pair):
    _, _, sols = hjb_pair
    x = sols["inf"].x
    payoff = np.maximum(np.exp(x) - K, 0.0)
    np.testing.assert_allclose(sols["inf"].values[-1], np.broadcast_to(payoff, (2, x.size)))


def test_imex_scheme_agrees_and_guards_step(grid):
    m = standard_model()
    box = ControlBox.uniform(2, 0.5, 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", StepSizeWarning)
        v = hjb_solve(m, box, K, T, grid, "inf", scheme="imex").value(100.0, 0)
    assert v == pytest.approx(hjb_solve(m, box, K, T, grid, "inf").value(100.0, 0), rel=2e-3)
    coarse = GridSpec(grid.x_min, grid.x_max, 101, 2)
    with pytest.warns(StepSizeWarning):
        hjb_solve(m, box, K, T, coarse, "inf", scheme="imex")


def test_hjb_rejects_bad_arguments(grid):
    m = standard_model()
    with pytest.raises(ValueError):
        hjb_solve(m, ControlBox.uniform(2, 0.5, 2.0), K, T, grid, "mid")
    with pytest.raises(ValueError):
        hjb_solve(m, ControlBox.uniform(3, 0.5, 2.0), K, T, grid)


def test_literal_and_consistent_coupling_coincide_for_unit_alpha(grid):
    m = standard_model()
    box = ControlBox.uniform(2, 0.5, 2.0)
    a = hjb_solve(m, box, K, T, grid, "sup", coupling="literal").value(100.0, 0)
    b = hjb_solve(m, box, K, T, grid, "sup", coupling="consistent").value(100.0, 0)
    assert a == pytest.approx(b, rel=1e-10)


# ---------------------------------------------------------------- objective

def test_constant_payoff_is_exact(model):
    rep = j_functional_mc(model, [1.0, 1.0], K, T, 1000, seed=1, g=lambda z, x: 3.5)
    assert rep.estimate == 3.5 and rep.se == 0.0


def test_objective_matches_fd(model, grid):
    u = np.array([1.6, 0.6])
    rep = j_functional_mc(model, u, K, T, 60_000, seed=2)
    assert rep.agrees_with(fd_price(model, u, K, T, grid).price(100.0, 0), slack=2e-3)


def test_objective_rejects_control_outside_box(model, box):
    with pytest.raises(ValueError):
        j_functional_mc(model, [3.0, 1.0], K, T, 10, seed=0, box=box)


def test_feedback_control_attains_value(hjb_pair):
    m, box, sols = hjb_pair
    for d in ("inf", "sup"):
        rep = j_functional_mc(m, sols[d].feedback(), K, T, 40_000, seed=3, n_steps=100)
        assert rep.agrees_with(sols[d].value(100.0, 0), slack=0.02)


# ---------------------------------------------------------------- optimality

def test_own_controls_have_no_violations(hjb_pair):
    m, box, sols = hjb_pair
    for d in ("inf", "sup"):
        assert verify_optimality(sols[d].controls, sols[d], m).n_violations == 0


def test_flipped_controls_detected_exactly(hjb_pair, rng):
    m, box, sols = hjb_pair
    sol = sols["sup"]
    mask = np.zeros(sol.controls.shape, dtype=bool)
    mask[:-1, :, 1:-1] = rng.random(mask[:-1, :, 1:-1].shape) < 0.1
    rep = verify_optimality(flip_controls(sol.controls, box, mask), sol, m)
    expected = mask[:-1, :, 1:-1] & rep.active
    assert expected.sum() > 0
    np.testing.assert_array_equal(rep.violations, expected)


def test_singleton_box_never_violates(grid):
    m = standard_model((1.0, 1.2))
    box = ControlBox.singleton([1.3, 0.7])
    sol = hjb_solve(m, box, K, T, grid, "inf")
    field = np.broadcast_to(np.array([1.3, 0.7])[None, :, None], sol.controls.shape)
    assert verify_optimality(field, sol, m).n_violations == 0


def test_verify_rejects_wrong_shape(hjb_pair):
    m, box, sols = hjb_pair
    with pytest.raises(ValueError):
        verify_optimality(np.ones((2, 2)), sols["inf"], m)


# ---------------------------------------------------------------- bid/ask

def test_singleton_bid_equals_ask(grid):
    res = bid_ask(standard_model(), ControlBox.singleton([1.0, 1.0]), K, T, grid)
    assert res.spread == pytest.approx(0.0, abs=1e-10)
    assert res.mid == pytest.approx(res.bid)


def test_single_regime_bid_ask_is_black_scholes(grid):
    res = bid_ask(single_regime(), ControlBox.uniform(1, 0.5, 2.0), K, T, grid)
    assert res.bid == pytest.approx(BS, rel=1e-3) and res.ask == pytest.approx(BS, rel=1e-3)


def test_spread_grows_with_box(grid):
    m = standard_model()
    spreads = [bid_ask(m, ControlBox.uniform(2, lo, hi), K, T, grid).spread
               for lo, hi in ((1.0, 1.0), (0.5, 2.0), (0.25, 4.0))]
    assert spreads[0] <= spreads[1] <= spreads[2]


def test_crossed_quotes_raise(grid, monkeypatch):
    class Fake:
        def __init__(self, v):
            self.v = v

        def value(self, *a):
            return self.v

    monkeypatch.setattr(bidask_mod, "hjb_solve", lambda m, b, K, T, g, d, **kw: Fake(2.0 if d == "inf" else 1.0))
    with pytest.raises(ConsistencyError):
        bid_ask(standard_model(), ControlBox.uniform(2, 0.5, 2.0), K, T, grid)


def test_summary_format():
    res = bidask_mod.BidAsk(1.0, 3.0)
    assert res.summary() == "bid=1.000000, ask=3.000000, mid=2.000000, spread=2.000000"


# ---------------------------------------------------------------- BSDE

def test_bsde_single_regime(rng):
    sol = bsde_lsmc(single_regime(), ControlBox.uniform(1, 0.5, 2.0), K, T, 40_000, 25, seed=5)
    assert sol.agrees_with(BS)
    assert sol.terminal.shape == (40_000,)


def test_bsde_singleton_matches_fd(grid):
    m = standard_model()
    fd = fd_price(m, np.ones(2), K, T, grid).price(100.0, 0)
    sol = bsde_lsmc(m, ControlBox.singleton([1.0, 1.0]), K, T, 40_000, 25, seed=6)
    assert sol.agrees_with(fd)


def test_bsde_rank_deficiency_raises():
    with pytest.raises(BsdeError, match="rank-deficient"):
        bsde_lsmc(standard_model(), ControlBox.uniform(2, 0.5, 2.0), K, T, 6, 5, seed=0,
                  basis=Basis(degree=8))


def test_bsde_reproducible():
    m = standard_model()
    box = ControlBox.uniform(2, 0.5, 2.0)
    a = bsde_lsmc(m, box, K, T, 5000, 10, seed=3, direction="sup")
    b = bsde_lsmc(m, box, K, T, 5000, 10, seed=3, direction="sup")
    assert a.value == b.value and a.se == b.se
