"""Superhedging prices and hedges for European options under multiplicative transient price impact."""

from .covered import CoveredProblem, covered_strategy_coeffs, default_gamma_bar, solve_covered
from .estimators import BlackScholesPricer, CoveredPricer, HedgeSimulator, ImpactPricer
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DomainError,
    GridMismatchError,
    HullEscapeError,
    IllPosedError,
    ImpactHedgeError,
    InfeasiblePayoffError,
    OutOfDomainError,
    PathError,
    SingularGammaError,
    StabilityError,
)
from .grid import BoundaryConfig, Grid, PdeSolution
from .hedging import (
    HedgeReport,
    IntegrandStats,
    PathRecord,
    SimConfig,
    path_wealth_decomposition,
    simulate_bs_strategy,
    simulate_replication,
)
from .impact import (
    F_eval,
    F_inv,
    ImpactSpec,
    MarketParams,
    ResilienceSpec,
    block_trade_proceeds,
    effective_coords,
    f_eval,
    impact_step,
    lambda_eval,
    liq_wealth,
    mathfrak_F,
    proceeds_along_path,
)
from .noncovered import (
    DiffReport,
    price_diff_report,
    solve_bs,
    solve_exponential_constrained,
    solve_general,
    solve_permanent,
    theta_star,
)
from .payoff import (
    Payoff,
    TerminalSurface,
    delta_floor_slope,
    facelift_delta,
    facelift_gamma,
    solve_H,
    solve_H_batch,
    terminal_surface,
)

__version__ = "0.1.0"
