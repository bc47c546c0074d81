"""Covered options: gamma-constrained nonlinear Black-Scholes equation at a frozen impact level.

The hedger of a covered option never trades a block at inception or
maturity, so the price depends on the impact level only through the
scalar ``lambda_y`` and resilience does not enter at all.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .exceptions import ConvergenceError, IllPosedError, SingularGammaError, StabilityError
from .grid import Grid, PdeSolution, diff2_s, implicit_diffusion_banded, save_steps, solve_tridiagonal
from .payoff import _gamma_bar_values, facelift_gamma


def default_gamma_bar(lambda_y: float) -> float:
    """Constant cap keeping ``lambda_y * gamma_bar = 0.9``; 10 when there is no impact."""
    return 0.9 / lambda_y if lambda_y > 0 else 10.0


@dataclass
class CoveredProblem:
    """Data of the covered-option pricing equation.

    Parameters
    ----------
    lambda_y : float
        Impact slope ``lambda(y)`` at the frozen level.
    payoff : array or callable
        Terminal payoff ``g(s)`` on the s-nodes (or a function of s).
    sigma, T : float
        Volatility and maturity.
    gamma_bar : float, callable or None
        Upper bound on ``s * v_ss``; ``None`` picks :func:`default_gamma_bar`.
    s_min, s_max, Ns :
        Uniform s-grid.
    """

    lambda_y: float
    payoff: Union[np.ndarray, Callable]
    sigma: float = 0.3
    T: float = 0.5
    gamma_bar: Union[float, Callable, None] = None
    s_min: float = 0.0
    s_max: float = 200.0
    Ns: int = 201

    def __post_init__(self):
        if self.lambda_y < 0:
            raise ValueError("lambda_y must be nonnegative")
        if not self.sigma > 0 or not self.T > 0:
            raise ValueError("sigma and T must be positive")
        if self.gamma_bar is None:
            self.gamma_bar = default_gamma_bar(self.lambda_y)

    @property
    def s(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.Ns)

    def gamma_values(self) -> np.ndarray:
        return _gamma_bar_values(self.gamma_bar, self.s)

    def payoff_values(self) -> np.ndarray:
        g = self.payoff(self.s) if callable(self.payoff) else np.asarray(self.payoff, dtype=float)
        if g.shape != (self.Ns,):
            raise ValueError(f"payoff has shape {g.shape}, expected ({self.Ns},)")
        if not np.all(np.isfinite(g)):
            raise ValueError("payoff must be bounded")
        return g

    def validate(self):
        gb = self.gamma_values()
        if np.any(gb[1:-1] <= 0):
            raise IllPosedError("gamma_bar must be positive")
        if np.any(self.lambda_y * gb >= 1.0):
            raise IllPosedError(
                f"lambda_y * gamma_bar reaches {float(np.max(self.lambda_y * gb)):.4g} >= 1; "
                "the diffusion coefficient would be singular"
            )


def _implicit_step(v, base, lam, capped_M, dt, ds, tol, max_iter):
    """Solve ``new - dt * c(M(new)) * D2 new = v`` by damped fixed-point iteration."""
    if lam == 0:
        ab, _ = implicit_diffusion_banded(base, dt, ds, "linear")
        return solve_tridiagonal(ab, v), 1
    scale = max(1.0, float(np.max(np.abs(v))))
    used = 0
    for omega in (1.0, 0.5, 0.25):
        new = v
        M = capped_M(v)
        for it in range(max_iter):
            ab, _ = implicit_diffusion_banded(base / (1.0 - lam * M), dt, ds, "linear")
            nxt = solve_tridiagonal(ab, v)
            change = float(np.max(np.abs(nxt - new)))
            new = nxt
            M = (1.0 - omega) * M + omega * capped_M(new)
            if change <= tol * scale:
                return new, used + it + 1
        used += max_iter
    raise ConvergenceError(f"fixed-point iteration stalled (last change {change:.3g})")


def solve_covered(
    problem: CoveredProblem,
    Nt: int = 500,
    save_every: Optional[int] = None,
    picard_tol: float = 1e-12,
    max_picard: int = 200,
) -> PdeSolution:
    """Backward implicit solve of ``v_t + sigma^2 s^2 v_ss / (2 (1 - lambda_y s v_ss)) = 0``.

    Each step is fully implicit: the diffusion coefficient is evaluated at the
    new slice's capped ``M = min(s D2 v, gamma_bar)`` and refined by fixed-point
    iteration.  The slice is then projected through the gamma face-lift and
    the nodes where the cap binds are recorded in ``constraint_mask``.
    """
    problem.validate()
    grid = Grid(T=problem.T, Nt=Nt, Ns=problem.Ns, Ny=3, s_min=problem.s_min, s_max=problem.s_max)
    s, ds, dt = grid.s, grid.ds, grid.dt
    gb = problem.gamma_values()
    lam = problem.lambda_y
    base = 0.5 * problem.sigma**2 * s**2
    tol_cap = 1e-9

    def capped_M(v):
        return np.minimum(s * diff2_s(v, ds), gb)

    def binding(v):
        m = s * diff2_s(v, ds) >= gb - tol_cap
        m[[0, -1]] = False
        return m

    g = problem.payoff_values()
    v = facelift_gamma(g, s, gb)
    keep = set(save_steps(Nt, save_every).tolist())
    saved, masks = {Nt: v.copy()}, {Nt: binding(v)}
    iters_total = 0
    started = time.perf_counter()
    for n in range(Nt - 1, -1, -1):
        new, it = _implicit_step(v, base, lam, capped_M, dt, ds, picard_tol, max_picard)
        iters_total += it
        v = facelift_gamma(new, s, gb)
        if not np.all(np.isfinite(v)):
            raise StabilityError(f"non-finite values at step {n}")
        if n in keep:
            saved[n] = v.copy()
            masks[n] = binding(v)
    order = sorted(saved)
    return PdeSolution(
        values=np.stack([saved[k] for k in order]),
        t_saved=np.array([k * dt for k in order]),
        grid=grid,
        solver="covered",
        meta={
            "steps": Nt,
            "lambda_y": lam,
            "picard_iterations": iters_total,
            "runtime_s": time.perf_counter() - started,
        },
        constraint_mask=np.stack([masks[k] for k in order]),
        context={"kind": "bs", "lambda_y": lam, "gamma_bar": gb},
    )


def covered_strategy_coeffs(
    sol: PdeSolution,
    t: float,
    s: float,
    sigma: float,
    lambda_y: float,
    dlambda_y: float = 0.0,
    mu: float = 0.0,
    h_y: float = 0.0,
):
    """Drift ``a``, volatility ``b`` and holdings ``theta`` of the covered replicating strategy.

    ``dlambda_y`` is ``lambda'(y)`` and ``h_y`` the resilience at the current
    impact level.  Raises :class:`SingularGammaError` when
    ``lambda_y * s * v_ss >= 1``.
    """
    theta = float(sol.interp("w_s", t, s))
    v_ss = float(sol.interp("w_ss", t, s))
    v_sss = float(sol.interp("w_sss", t, s))
    v_ts = float(sol.interp("w_ts", t, s))
    denom = 1.0 - lambda_y * s * v_ss
    if denom <= 0:
        raise SingularGammaError(f"lambda * s * v_ss = {1 - denom:.6g} at s = {s}")
    b = sigma * s * v_ss / denom
    vol = sigma + lambda_y * b
    drift = mu - lambda_y * h_y + 0.5 * (lambda_y**2 + dlambda_y) * b * b + lambda_y * sigma * b
    a = (v_ts + v_ss * s * drift + 0.5 * v_sss * s * s * vol * vol) / denom
    return a, b, theta
