"""Estimator-style wrappers: configure with hyperparameters, ``fit`` a payoff, ``predict`` prices.

The wrappers follow scikit-learn conventions (``get_params``/``set_params``,
trailing-underscore fitted attributes, ``check_is_fitted``) so pricers can be
cloned and swept like any other estimator.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .covered import CoveredProblem, solve_covered
from .exceptions import ConfigError
from .grid import BoundaryConfig, Grid
from .hedging import SimConfig, simulate_bs_strategy, simulate_replication
from .impact import ImpactSpec, MarketParams, ResilienceSpec
from .noncovered import solve_bs, solve_exponential_constrained, solve_general, solve_permanent, theta_star
from .payoff import Payoff, TerminalSurface, terminal_surface


class _GridParams:
    def _grid(self, ny: Optional[int] = None) -> Grid:
        return Grid(
            T=self.T,
            Nt=self.Nt,
            Ns=self.Ns,
            Ny=self.Ny if ny is None else ny,
            s_min=self.s_min,
            s_max=self.s_max,
            y_min=getattr(self, "y_min", -1.0),
            y_max=getattr(self, "y_max", 1.0),
        )


class ImpactPricer(_GridParams, BaseEstimator):
    """Superhedging price of a non-covered option under transient (and permanent) impact.

    Parameters
    ----------
    impact : {"arctan", "exponential"}
    impact_param : float
        ``c`` for arctan impact, ``lambda`` for exponential impact.
    eta : float
        Permanent-impact weight.
    beta : float
        Linear resilience rate (0 switches resilience off).
    sigma : float
    kappa_short : float
        Short-selling bound for exponential impact.
    T, Nt, Ns, Ny, s_min, s_max, y_min, y_max :
        Grid.
    s_max_slope : float or None
        Neumann slope at ``s_max`` (``None`` reads it off the terminal data).

    Attributes
    ----------
    solution_ : PdeSolution
    terminal_ : TerminalSurface
    """

    def __init__(
        self,
        impact: str = "arctan",
        impact_param: float = 0.1,
        eta: float = 0.0,
        beta: float = 1.0,
        sigma: float = 0.3,
        kappa_short: float = 1.0,
        T: float = 0.5,
        Nt: int = 2000,
        Ns: int = 201,
        Ny: int = 81,
        s_min: float = 0.0,
        s_max: float = 200.0,
        y_min: float = -20.0,
        y_max: float = 20.0,
        s_max_slope: Optional[float] = None,
    ):
        self.impact = impact
        self.impact_param = impact_param
        self.eta = eta
        self.beta = beta
        self.sigma = sigma
        self.kappa_short = kappa_short
        self.T = T
        self.Nt = Nt
        self.Ns = Ns
        self.Ny = Ny
        self.s_min = s_min
        self.s_max = s_max
        self.y_min = y_min
        self.y_max = y_max
        self.s_max_slope = s_max_slope

    def _spec(self) -> ImpactSpec:
        if self.impact == "arctan":
            return ImpactSpec.arctan(self.impact_param, self.eta)
        if self.impact == "exponential":
            return ImpactSpec.exponential(self.impact_param, self.eta)
        raise ConfigError(f"unknown impact kind {self.impact!r}")

    def fit(self, X, y=None):
        """Solve the pricing equation for payoff ``X`` (a Payoff, TerminalSurface or H array)."""
        spec = self._spec()
        grid = self._grid()
        if isinstance(X, Payoff):
            terminal = terminal_surface(X, spec, grid)
        elif isinstance(X, TerminalSurface):
            terminal = X
        else:
            values = check_array(X, ensure_2d=True)
            terminal = TerminalSurface(values, np.zeros(values.shape, dtype=bool), grid.s, grid.y)
        h = ResilienceSpec.linear(self.beta)
        params = MarketParams(sigma=self.sigma)
        bc = BoundaryConfig(s_max_slope=self.s_max_slope)
        if spec.is_exponential and spec.eta == 0:
            self.solution_ = solve_exponential_constrained(spec.lam, self.kappa_short, h, params, terminal, grid, bc)
        elif spec.is_exponential:
            self.solution_ = solve_permanent(spec, h, params, terminal, grid, bc, self.kappa_short)
        else:
            self.solution_ = solve_general(spec, h, params, terminal, grid, bc)
        self.terminal_ = terminal
        self.spec_ = spec
        return self

    def predict(self, X) -> np.ndarray:
        """Prices at rows ``(t, s, y)``."""
        check_is_fitted(self, "solution_")
        X = check_array(X)
        if X.shape[1] != 3:
            raise ValueError("X must have columns (t, s, y)")
        return self.solution_.price(X[:, 0], X[:, 1], X[:, 2])

    def holdings(self, X) -> np.ndarray:
        """Optimal holdings at rows ``(t, s, y)`` of effective state."""
        check_is_fitted(self, "solution_")
        X = check_array(X)
        return theta_star(self.solution_, X[:, 0], X[:, 1], X[:, 2])


class BlackScholesPricer(_GridParams, BaseEstimator):
    """Frictionless finite-difference baseline on an s-grid."""

    def __init__(self, sigma: float = 0.3, T: float = 0.5, Nt: int = 2000, Ns: int = 201,
                 s_min: float = 0.0, s_max: float = 200.0, scheme: str = "cn"):
        self.sigma = sigma
        self.T = T
        self.Nt = Nt
        self.Ns = Ns
        self.s_min = s_min
        self.s_max = s_max
        self.scheme = scheme

    def fit(self, X, y=None):
        """``X`` is a Payoff (its frictionless cash value is used) or terminal values on the s-grid."""
        grid = self._grid(ny=3)
        if isinstance(X, Payoff):
            values = X.frictionless(grid.s)
        else:
            values = check_array(X, ensure_2d=False)
        self.solution_ = solve_bs(self.sigma, values, grid, scheme=self.scheme)
        return self

    def predict(self, X) -> np.ndarray:
        """Prices at rows ``(t, s)``."""
        check_is_fitted(self, "solution_")
        X = check_array(X)
        return self.solution_.price(X[:, 0], X[:, 1])


class CoveredPricer(_GridParams, BaseEstimator):
    """Covered-option price at a frozen impact slope ``lambda_y``."""

    def __init__(self, lambda_y: float = 0.1, gamma_bar: Optional[float] = None, sigma: float = 0.3,
                 T: float = 0.5, Nt: int = 500, Ns: int = 201, s_min: float = 0.0, s_max: float = 200.0):
        self.lambda_y = lambda_y
        self.gamma_bar = gamma_bar
        self.sigma = sigma
        self.T = T
        self.Nt = Nt
        self.Ns = Ns
        self.s_min = s_min
        self.s_max = s_max

    def fit(self, X, y=None):
        payoff = X.frictionless if isinstance(X, Payoff) else check_array(X, ensure_2d=False)
        problem = CoveredProblem(self.lambda_y, payoff, self.sigma, self.T, self.gamma_bar,
                                 self.s_min, self.s_max, self.Ns)
        self.solution_ = solve_covered(problem, self.Nt)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "solution_")
        X = check_array(X)
        return self.solution_.price(X[:, 0], X[:, 1])


class HedgeSimulator(BaseEstimator):
    """Monte Carlo check of a fitted pricer's hedge.

    ``fit(pricer, payoff)`` runs the replication (for an :class:`ImpactPricer`)
    or the Black-Scholes-strategy experiment (for a :class:`BlackScholesPricer`,
    with ``impact_param``/``beta`` describing the market) and stores
    ``report_``.
    """

    def __init__(self, n_paths: int = 10_000, n_steps: int = 500, seed: int = 0, epsilon_capital: float = 0.0,
                 scheme: str = "feedback", mu: float = 0.0, s_bar0: float = 50.0, y0: float = 0.0,
                 impact_param: float = 0.1, beta: float = 1.0, threads: int = 1):
        self.n_paths = n_paths
        self.n_steps = n_steps
        self.seed = seed
        self.epsilon_capital = epsilon_capital
        self.scheme = scheme
        self.mu = mu
        self.s_bar0 = s_bar0
        self.y0 = y0
        self.impact_param = impact_param
        self.beta = beta
        self.threads = threads

    def fit(self, pricer, payoff: Payoff):
        check_is_fitted(pricer, "solution_")
        cfg = SimConfig(n_paths=self.n_paths, n_steps=self.n_steps, seed=self.seed,
                        epsilon_capital=self.epsilon_capital, scheme=self.scheme, threads=self.threads)
        params = MarketParams(sigma=pricer.sigma, mu=self.mu, s_bar0=self.s_bar0, y0=self.y0)
        if isinstance(pricer, ImpactPricer):
            h = ResilienceSpec.linear(pricer.beta)
            self.report_ = simulate_replication(pricer.solution_, pricer.spec_, h, params, payoff, cfg)
            self.integrand_stats_ = None
        else:
            spec = ImpactSpec.arctan(self.impact_param)
            h = ResilienceSpec.linear(self.beta)
            self.report_, self.integrand_stats_ = simulate_bs_strategy(pricer.solution_, spec, h, params, payoff, cfg)
        return self

    def score(self, X=None, y=None) -> float:
        """Success fraction of the last run."""
        check_is_fitted(self, "report_")
        return self.report_.success_fraction
