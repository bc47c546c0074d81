from types import SimpleNamespace

import numpy as np
import pytest
from scipy.stats import norm

from impacthedge import (
    Grid,
    ImpactSpec,
    MarketParams,
    Payoff,
    ResilienceSpec,
    solve_bs,
    solve_general,
    terminal_surface,
)


def bs_call(s, k, sigma, tau):
    """Zero-rate Black-Scholes call, used as an independent oracle."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore"):
        d1 = (np.log(s / k) + 0.5 * sigma**2 * tau) / (sigma * np.sqrt(tau))
    return s * norm.cdf(d1) - k * norm.cdf(d1 - sigma * np.sqrt(tau))


@pytest.fixture(scope="session")
def arctan_study():
    """Arctan impact c = 0.1, sigma = 0.3, smoothed physical call K = 50 on the default grid."""
    spec = ImpactSpec.arctan(0.1)
    params = MarketParams(sigma=0.3)
    payoff = Payoff.physical_call(50.0, 0.5)
    grid = Grid()
    terminal = terminal_surface(payoff, spec, grid, strict=True)
    g1 = Grid(grid.T, grid.Nt, grid.Ns, 3, grid.s_min, grid.s_max)
    return SimpleNamespace(
        spec=spec,
        params=params,
        payoff=payoff,
        grid=grid,
        terminal=terminal,
        resilient=solve_general(spec, ResilienceSpec.linear(1.0), params, terminal, grid),
        no_resilience=solve_general(spec, ResilienceSpec.zero(), params, terminal, grid),
        bs=solve_bs(0.3, payoff.frictionless(g1.s), g1),
    )


ACCEPTANCE_LINES: list = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
