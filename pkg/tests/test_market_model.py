import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobswitch.market_model import (Arrival, BookState, ModelParams,
                                    binomial_transitions, parse_intensity,
                                    simulate_book, step_continuous)


def test_parse_intensity_linear_and_table():
    lin = parse_intensity("linear:0.5")
    assert lin(2) == 1.0 and lin(4) == 2.0
    tab = parse_intensity("table:[0.1,0.2,0.7]")
    assert tab(1) == 0.1 and tab(3) == 0.7
    assert tab(9) == 0.7  # clamps to the last entry
    assert parse_intensity("table:[0.25]")(5) == 0.25


def test_arrival_intensity_vanishes_at_one_tick():
    theta = parse_intensity("linear:0.5", zero_at_one=True)
    assert theta(1) == 0.0
    assert theta(2) == 1.0


@pytest.mark.parametrize("spec", ["nope:1", "table:1,2", "linear:"])
def test_parse_intensity_rejects_malformed(spec):
    with pytest.raises(ValueError):
        parse_intensity(spec)


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(delta_a=0)
    with pytest.raises(ValueError):
        ModelParams(pa_bar=12, pb_under=12)
    with pytest.raises(ValueError):
        ModelParams(pa0=15, pb0=15)
    with pytest.raises(ValueError):
        ModelParams(epsilon=-0.1)


def test_book_state_invariants():
    with pytest.raises(ValueError):
        BookState(qa=-1, qb=0, pa=16, pb=15)
    with pytest.raises(ValueError):
        BookState(qa=1, qb=1, pa=15, pb=15)
    s = BookState(qa=1, qb=1, pa=16, pb=14)
    assert s.spread == 2 and s.mid == 15.0


def test_step_continuous_zero_noise_is_identity():
    params = ModelParams(sigma_a=0, sigma_b=0,
                         theta_a=parse_intensity("table:[0.0]", True),
                         theta_b=parse_intensity("table:[0.0]", True),
                         lambda_a=parse_intensity("table:[0.0]"),
                         lambda_b=parse_intensity("table:[0.0]"))
    state = BookState(qa=5, qb=5, pa=16, pb=15)
    out = step_continuous(state, params, 0.5, np.random.default_rng(0))
    assert out.next == state
    assert out.hidden_fills == (0, 0)


def test_step_continuous_depletion_resets_level():
    params = ModelParams(sigma_a=0, sigma_b=0,
                         theta_a=parse_intensity("table:[0.0]", True),
                         theta_b=parse_intensity("table:[0.0]", True))
    state = BookState(qa=0, qb=5, pa=16, pb=15)
    out = step_continuous(state, params, 0.5, np.random.default_rng(0))
    assert out.next.pa == 17
    assert out.next.qa == params.delta_a


def test_step_continuous_no_arrivals_at_spread_one():
    # arrival probability would be theta*dt = 1 if the spread admitted it
    params = ModelParams(sigma_a=0, sigma_b=0,
                         theta_a=parse_intensity("linear:10"),
                         theta_b=parse_intensity("linear:10"))
    state = BookState(qa=5, qb=5, pa=16, pb=15)
    for seed in range(20):
        out = step_continuous(state, params, 1.0, np.random.default_rng(seed))
        assert out.next.arrival is Arrival.NONE
        assert out.next.pa == 16 and out.next.pb == 15


def test_step_continuous_rejects_bad_dt():
    params = ModelParams()
    state = BookState(qa=5, qb=5, pa=16, pb=15)
    with pytest.raises(ValueError):
        step_continuous(state, params, 0.0, np.random.default_rng(0))


def test_binomial_transitions_spread_one_has_no_arrivals():
    params = ModelParams(delta_a=5, delta_b=5)
    state = BookState(qa=5, qb=5, pa=16, pb=15)
    outs = binomial_transitions(state, (0, 0), params)
    assert all(o.next.arrival is Arrival.NONE for o in outs)
    assert abs(sum(o.prob for o in outs) - 1.0) < 1e-12


def test_binomial_transitions_spread_three_has_36_branches():
    params = ModelParams(delta_a=5, delta_b=5)
    state = BookState(qa=5, qb=5, pa=18, pb=15)
    outs = binomial_transitions(state, (0, 0), params)
    assert len(outs) == 36
    assert abs(sum(o.prob for o in outs) - 1.0) < 1e-12
    # p_N = 0.3: each arrival side carries 0.15 in total
    p_ask = sum(o.prob for o in outs if o.next.arrival is Arrival.ASK)
    assert abs(p_ask - 0.15) < 1e-12


def test_binomial_transitions_depletion_moves_price():
    params = ModelParams(delta_a=5, delta_b=5)
    state = BookState(qa=1, qb=5, pa=16, pb=15)
    outs = binomial_transitions(state, (0, 0), params)
    depleted = [o for o in outs if o.next.pa == 17]
    assert depleted and all(o.next.qa == 5 for o in depleted)
    assert abs(sum(o.prob for o in depleted) - 0.5) < 1e-12


def test_binomial_transitions_rejects_inadmissible_hidden():
    params = ModelParams(pa_bar=16, pb_under=12)
    state = BookState(qa=5, qb=5, pa=17, pb=16)
    with pytest.raises(ValueError):
        binomial_transitions(state, (1, 0), params)  # bid at the buy bound
    with pytest.raises(ValueError):
        binomial_transitions(state, (1, 1), params)


@settings(max_examples=60, deadline=None)
@given(qa=st.integers(0, 10), qb=st.integers(0, 10),
       pa=st.integers(13, 18), spread=st.integers(1, 5))
def test_binomial_probabilities_always_sum_to_one(qa, qb, pa, spread):
    params = ModelParams(delta_a=5, delta_b=5)
    state = BookState(qa=qa, qb=qb, pa=pa, pb=pa - spread)
    outs = binomial_transitions(state, (0, 1), params)
    assert abs(sum(o.prob for o in outs) - 1.0) < 1e-12


def _quiet_params():
    return ModelParams(sigma_a=0, sigma_b=0,
                       theta_a=parse_intensity("table:[0.0]", True),
                       theta_b=parse_intensity("table:[0.0]", True),
                       horizon=10.0, pa0=20, pb0=15, q0_a=5, q0_b=5)


def test_simulate_book_constant_without_noise():
    traj = simulate_book(_quiet_params(), 10.0, 0.5, seed=1)
    assert np.all(traj.pa == 20) and np.all(traj.pb == 15)
    assert np.all(traj.qa == 5.0) and np.all(traj.qb == 5.0)
    assert traj.na.max() == 0 and traj.la.max() == 0


def test_simulate_book_price_counter_identity():
    params = ModelParams(pa_bar=100, pb_under=0, horizon=120.0,
                         pa0=20, pb0=15)
    traj = simulate_book(params, 120.0, 0.5, seed=7, n_paths=32)
    assert np.all(traj.pa - traj.pa[:, :1] == traj.la - traj.na)
    assert np.all(traj.pb - traj.pb[:, :1] == traj.nb - traj.lb)
    assert np.all(traj.pa - traj.pb >= 1)
    assert traj.na.max() > 0  # arrivals actually happened


def test_simulate_book_deterministic_per_seed():
    params = ModelParams(pa_bar=100, pb_under=0, horizon=50.0, pa0=20, pb0=15)
    a = simulate_book(params, 50.0, 0.5, seed=9, n_paths=4)
    b = simulate_book(params, 50.0, 0.5, seed=9, n_paths=4)
    for name in ("qa", "qb", "pa", "pb", "la", "lb", "na", "nb"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = simulate_book(params, 50.0, 0.5, seed=10, n_paths=4)
    assert not np.array_equal(a.pa, c.pa)


def test_simulate_book_rejects_non_dividing_dt():
    with pytest.raises(ValueError):
        simulate_book(_quiet_params(), 10.0, 0.3, seed=0)
