import numpy as np
import pytest

from impacthedge import (
    ConfigError,
    Grid,
    ImpactSpec,
    MarketParams,
    Payoff,
    ResilienceSpec,
    SimConfig,
    path_wealth_decomposition,
    simulate_bs_strategy,
    simulate_replication,
    solve_bs,
    solve_exponential_constrained,
    solve_general,
    terminal_surface,
)

H1 = ResilienceSpec.linear(1.0)
PARAMS = MarketParams(sigma=0.3)
GRID = Grid(Nt=1000, Ns=201, Ny=41)


@pytest.fixture(scope="module")
def exp_call():
    spec = ImpactSpec.exponential(1.0)
    pay = Payoff.cash_call(50)
    sol = solve_exponential_constrained(1.0, 1.0, H1, PARAMS, terminal_surface(pay, spec, GRID), GRID)
    return spec, pay, sol


@pytest.fixture(scope="module")
def arctan_call():
    spec = ImpactSpec.arctan(0.1)
    pay = Payoff.cash_call(50)
    sol = solve_general(spec, H1, PARAMS, terminal_surface(pay, spec, GRID), GRID)
    return spec, pay, sol


def test_sim_config_validation():
    for bad in (dict(n_paths=0), dict(n_steps=5), dict(epsilon_capital=-1), dict(scheme="milstein"),
                dict(threads=0), dict(seed=-1)):
        with pytest.raises(ConfigError):
            SimConfig(**bad)


def test_same_seed_same_report_regardless_of_threads(arctan_call):
    spec, pay, sol = arctan_call
    base = dict(n_paths=300, n_steps=50, seed=11, chunk_size=64)
    a = simulate_replication(sol, spec, H1, PARAMS, pay, SimConfig(threads=1, **base))
    b = simulate_replication(sol, spec, H1, PARAMS, pay, SimConfig(threads=3, **base))
    np.testing.assert_array_equal(a.V_T, b.V_T)
    assert a.to_dict() == b.to_dict()
    c = simulate_replication(sol, spec, H1, PARAMS, pay, SimConfig(n_paths=300, n_steps=50, seed=12))
    assert not np.array_equal(a.V_T, c.V_T)


def test_zero_payoff_always_succeeds():
    spec = ImpactSpec.arctan(0.1)
    g = Grid(Nt=300, Ns=101, Ny=21)
    z = Payoff.zero()
    sol = solve_general(spec, H1, PARAMS, terminal_surface(z, spec, g), g)
    r = simulate_replication(sol, spec, H1, PARAMS, z, SimConfig(n_paths=200, n_steps=50, epsilon_capital=0.3))
    assert r.success_fraction == 1.0
    np.testing.assert_allclose(r.V_T, 0.3, atol=1e-10)


@pytest.mark.parametrize("scheme", ["feedback", "sde"])
def test_exponential_replication_is_a_martingale(exp_call, scheme):
    spec, pay, sol = exp_call
    cfg = SimConfig(n_paths=4000, n_steps=200, compensate_drift=True, scheme=scheme)
    r = simulate_replication(sol, spec, H1, PARAMS, pay, cfg)
    assert abs(r.terminal_wealth_mean - r.price) <= 3 * r.terminal_wealth_se
    assert r.escape_fraction == 0.0


def test_wealth_decomposition_adds_up(exp_call, arctan_call):
    for (spec, pay, sol), source_zero in ((exp_call, True), (arctan_call, False)):
        r = simulate_replication(sol, spec, H1, PARAMS, pay, SimConfig(n_paths=5, n_steps=100, record_paths=2))
        assert len(r.records) == 2
        rec = r.records[0]
        diffusion, drift, source = path_wealth_decomposition(rec)
        np.testing.assert_allclose(diffusion + drift + source, rec.increment, atol=1e-12)
        if source_zero:
            assert np.max(np.abs(source)) <= 1e-12 * np.max(rec.S_eff)
        else:
            assert np.max(np.abs(source)) > 0


def test_report_fields(arctan_call):
    spec, pay, sol = arctan_call
    r = simulate_replication(sol, spec, H1, PARAMS, pay, SimConfig(n_paths=100, n_steps=20, epsilon_capital=0.2))
    d = r.to_dict()
    assert set(d["shortfall_quantiles"]) == {"50%", "95%", "99%", "max"}
    assert d["initial_capital"] == pytest.approx(d["price"] + 0.2)
    ok = r.V_T >= r.H_T - 1e-9
    assert r.success_fraction == pytest.approx(ok.mean())


def test_replication_input_checks(arctan_call):
    spec, pay, _ = arctan_call
    g = Grid(Nt=100, Ns=51, Ny=3)
    v_bs = solve_bs(0.3, pay.g0(g.s), g)
    with pytest.raises(ConfigError):
        simulate_replication(v_bs, spec, H1, PARAMS, pay, SimConfig(n_paths=10, n_steps=10))
    with pytest.raises(ConfigError):
        simulate_bs_strategy(v_bs, spec, H1, PARAMS, Payoff.physical_call(50), SimConfig(n_paths=10, n_steps=10))


@pytest.fixture(scope="module")
def spread_bs():
    spread = Payoff.bull_spread(40, 60, 5.0, notional=20.0)
    g = Grid(Nt=2000, Ns=401, Ny=3)
    return spread, solve_bs(0.3, spread.g0(g.s), g)


def test_bs_strategy_with_large_initial_impact(spread_bs):
    spread, v_bs = spread_bs
    spec = ImpactSpec.arctan(0.1)
    r, stats = simulate_bs_strategy(v_bs, spec, H1, MarketParams(sigma=0.3, y0=8.0), spread,
                                    SimConfig(n_paths=1000, n_steps=500))
    assert stats.negative_fraction > 0.95
    assert stats.negative_fraction + stats.positive_fraction + stats.zero_fraction == pytest.approx(1.0)
    # the correction integral is what the trader gains over the payoff
    gain = r.V_T - r.H_T
    assert -stats.integral_mean == pytest.approx(gain.mean(), abs=3 * gain.std() / np.sqrt(gain.size) + 0.05)


def test_bs_strategy_success_improves_with_steps(spread_bs):
    spread, v_bs = spread_bs
    spec = ImpactSpec.arctan(0.1)
    fr = []
    for n in (125, 250, 500, 1000):
        r, _ = simulate_bs_strategy(v_bs, spec, H1, MarketParams(sigma=0.3, y0=8.0), spread,
                                    SimConfig(n_paths=1500, n_steps=n))
        fr.append((r.success_fraction, r.success_se))
    for (a, sa), (b, sb) in zip(fr, fr[1:]):
        assert b >= a - 2 * np.hypot(sa, sb)
