"""Pricing equations for non-covered options.

All solvers march backwards from maturity on a :class:`~impacthedge.grid.Grid`.
Each step freezes the nonlinear coefficients on the later slice, advances the
first-order (transport and source) terms explicitly with upwinding, and then
solves the s-diffusion implicitly, one tridiagonal system per y column.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import GridMismatchError, InfeasiblePayoffError, StabilityError
from .grid import (
    BoundaryConfig,
    Grid,
    PdeSolution,
    apply_diffusion,
    diff_s,
    implicit_diffusion_banded,
    save_steps,
    solve_tridiagonal,
    upwind,
)
from .impact import ImpactSpec, MarketParams, ResilienceSpec
from .payoff import TerminalSurface, delta_floor_slope, facelift_delta

logger = logging.getLogger(__name__)

CFL_LIMIT = 0.9
CLAMP_EPS = 1e-9


def _terminal_values(terminal, grid: Grid) -> np.ndarray:
    if isinstance(terminal, TerminalSurface):
        if not terminal.is_finite:
            raise InfeasiblePayoffError(
                f"{int(terminal.infinite.sum())} terminal nodes are +inf; the pricing equation needs bounded data"
            )
        values = terminal.values
    else:
        values = np.asarray(terminal, dtype=float)
    if values.shape != (grid.Ns, grid.Ny):
        raise ValueError(f"terminal data has shape {values.shape}, grid needs {(grid.Ns, grid.Ny)}")
    if not np.all(np.isfinite(values)):
        raise InfeasiblePayoffError("terminal data must be finite")
    return np.array(values, dtype=float)


def _s_max_slope(bc: BoundaryConfig, W: np.ndarray, ds: float) -> np.ndarray:
    if bc.s_max_slope is not None:
        return np.full(W.shape[1:], float(bc.s_max_slope))
    return (W[-1] - W[-2]) / ds


# coefficient callback: (w, w_s, cache) -> (h_tilde, s_velocity, source)
Coefficients = Callable[[np.ndarray, np.ndarray, dict], tuple]


def _march(
    grid: Grid,
    sigma: float,
    W_T: np.ndarray,
    coefficients: Coefficients,
    bc: BoundaryConfig,
    projection: Optional[Callable[[np.ndarray], tuple]] = None,
    save_every: Optional[int] = None,
    solver: str = "",
    context: Optional[dict] = None,
    terminal_mask: Optional[np.ndarray] = None,
) -> PdeSolution:
    dt, ds, dy = grid.dt, grid.ds, grid.dy
    s = grid.s
    slope = _s_max_slope(bc, W_T, ds)
    ab, alpha = implicit_diffusion_banded(0.5 * sigma**2 * s**2, dt, ds, bc.s_max_kind)
    keep = set(save_steps(grid.Nt, save_every).tolist())
    saved = {grid.Nt: W_T.copy()}
    masks = {grid.Nt: terminal_mask} if projection is not None else {}
    cache: dict = {}
    w = W_T.copy()
    cfl_y = cfl_s = 0.0
    n_projected = 0
    started = time.perf_counter()
    for n in range(grid.Nt - 1, -1, -1):
        w_s = diff_s(w, ds)
        w_s[-1] = slope
        h_t, v_s, src = coefficients(w, w_s, cache)
        cy = float(np.max(np.abs(h_t))) * dt / dy
        cs = float(np.max(np.abs(v_s))) * dt / ds if v_s is not None else 0.0
        cfl_y, cfl_s = max(cfl_y, cy), max(cfl_s, cs)
        if cy > CFL_LIMIT or cs > CFL_LIMIT:
            raise StabilityError(
                f"explicit transport CFL numbers (y: {cy:.3f}, s: {cs:.3f}) exceed {CFL_LIMIT}; "
                f"use more time steps (Nt > {int(grid.Nt * max(cy, cs) / CFL_LIMIT) + 1})"
            )
        rate = h_t * upwind(w, h_t, dy, axis=1)
        if v_s is not None:
            rate += v_s * upwind(w, v_s, ds, axis=0, hi_slope=slope)
        if src is not None:
            rate += src
        rhs = w - dt * rate
        rhs[0] = w[0]
        if bc.s_max_kind == "neumann":
            rhs[-1] += 2.0 * alpha[-1] * ds * slope
        else:
            rhs[-1] = w[-1]
        w = solve_tridiagonal(ab, rhs)
        mask = None
        if projection is not None:
            w, mask = projection(w)
            n_projected += int(mask.sum())
        if not np.all(np.isfinite(w)):
            raise StabilityError(f"non-finite values at step {n} (t = {n * dt:.6g})")
        if n in keep:
            saved[n] = w.copy()
            if projection is not None:
                masks[n] = mask
    order = sorted(saved)
    meta = {
        "steps": grid.Nt,
        "max_cfl_y": cfl_y,
        "max_cfl_s": cfl_s,
        "runtime_s": time.perf_counter() - started,
    }
    if projection is not None:
        meta["projected_node_steps"] = n_projected
    return PdeSolution(
        values=np.stack([saved[k] for k in order]),
        t_saved=np.array([k * dt for k in order]),
        grid=grid,
        solver=solver,
        meta=meta,
        constraint_mask=np.stack([masks[k] for k in order]) if projection is not None else None,
        context=context or {},
    )


def _general_coefficients(spec: ImpactSpec, h: ResilienceSpec, grid: Grid):
    S, Y = np.meshgrid(grid.s, grid.y, indexing="ij")
    lam_y = spec.lam_of(Y)
    k = 1.0 + spec.eta

    def coefficients(w, w_s, cache):
        block = spec.rel_F_increment_inv(Y, k * w_s, cache.get("block"))
        cache["block"] = block
        theta = block / k
        h_t = h.h(Y + theta)
        v_s = h_t * S * lam_y
        src = -S * h_t * spec.rel_f_increment(Y, block) / k
        return h_t, v_s, src

    return coefficients


def solve_general(
    spec: ImpactSpec,
    h: ResilienceSpec,
    params: MarketParams,
    terminal,
    grid: Grid,
    bc: Optional[BoundaryConfig] = None,
    save_every: Optional[int] = None,
) -> PdeSolution:
    """Semilinear pricing equation for a bounded impact function (arctan kind).

    ``spec.eta > 0`` switches on the permanent-impact coefficients.
    """
    if spec.is_exponential:
        raise ValueError("exponential impact needs the gradient-constrained solver")
    bc = bc or BoundaryConfig()
    W_T = _terminal_values(terminal, grid)
    return _march(
        grid,
        params.sigma,
        W_T,
        _general_coefficients(spec, h, grid),
        bc,
        save_every=save_every,
        solver="general" if spec.eta == 0 else "permanent",
        context={"kind": "general", "spec": spec, "h": h},
    )


def _exponential_coefficients(spec: ImpactSpec, h: ResilienceSpec, grid: Grid, kappa_short: float):
    _, Y = np.meshgrid(grid.s, grid.y, indexing="ij")
    k = 1.0 + spec.eta
    lam_eff = spec.lam * k
    floor = -delta_floor_slope(lam_eff, kappa_short) + CLAMP_EPS

    def coefficients(w, w_s, cache):
        block = spec.rel_F_increment_inv(Y, k * np.maximum(w_s, floor))
        h_t = h.h(Y + block / k)
        # the s-transport and the source cancel exactly for exponential impact
        return h_t, None, None

    return coefficients


def _solve_exponential(spec, kappa_short, h, params, terminal, grid, bc, save_every, solver):
    if not kappa_short > 0:
        raise ValueError("kappa_short must be positive")
    bc = bc or BoundaryConfig()
    lam_eff = spec.lam * (1.0 + spec.eta)
    H = _terminal_values(terminal, grid)
    W_T = facelift_delta(H, grid.s, lam_eff, kappa_short)
    c = delta_floor_slope(lam_eff, kappa_short)

    def projection(w):
        lifted = facelift_delta(w, grid.s, lam_eff, kappa_short)
        return lifted, lifted > w

    return _march(
        grid,
        params.sigma,
        W_T,
        _exponential_coefficients(spec, h, grid, kappa_short),
        bc,
        projection=projection,
        save_every=save_every,
        solver=solver,
        context={
            "kind": "exponential",
            "spec": spec,
            "h": h,
            "lam_eff": lam_eff,
            "kappa_short": kappa_short,
            "delta_floor": -c,
        },
        terminal_mask=W_T > H,
    )


def solve_exponential_constrained(
    lam: float,
    kappa_short: float,
    h: ResilienceSpec,
    params: MarketParams,
    terminal,
    grid: Grid,
    bc: Optional[BoundaryConfig] = None,
    save_every: Optional[int] = None,
) -> PdeSolution:
    """Variational inequality for exponential impact with short-selling bound ``-kappa_short``.

    The terminal slice is the delta face-lift of ``terminal``; after every
    step the slope bound is restored by raising violating nodes, and those
    nodes are recorded in ``constraint_mask``.
    """
    spec = ImpactSpec.exponential(lam)
    return _solve_exponential(spec, kappa_short, h, params, terminal, grid, bc, save_every, "exponential")


def solve_permanent(
    spec: ImpactSpec,
    h: ResilienceSpec,
    params: MarketParams,
    terminal,
    grid: Grid,
    bc: Optional[BoundaryConfig] = None,
    kappa_short: float = 1.0,
    save_every: Optional[int] = None,
) -> PdeSolution:
    """Combined transient and permanent impact (weight ``spec.eta``).

    Build ``terminal`` with the same ``spec`` so the settlement trade carries
    the permanent component too.
    """
    if spec.is_exponential:
        return _solve_exponential(spec, kappa_short, h, params, terminal, grid, bc, save_every, "permanent")
    return solve_general(spec, h, params, terminal, grid, bc, save_every)


def solve_bs(
    sigma: float,
    terminal_1d,
    grid: Grid,
    scheme: str = "cn",
    save_every: Optional[int] = None,
) -> PdeSolution:
    """Frictionless Black-Scholes baseline in s only (zero rates).

    ``scheme="cn"`` is Crank-Nicolson after four implicit half-steps
    (Rannacher start-up); ``scheme="implicit"`` is backward Euler throughout.
    The last node keeps ``w_ss = 0`` (linear extrapolation).
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    W_T = np.array(terminal_1d, dtype=float)
    if W_T.shape != (grid.Ns,):
        raise ValueError(f"terminal has shape {W_T.shape}, expected ({grid.Ns},)")
    if not np.all(np.isfinite(W_T)):
        raise ValueError("terminal data must be finite")
    dt, ds = grid.dt, grid.ds
    coef = 0.5 * sigma**2 * grid.s**2
    keep = set(save_steps(grid.Nt, save_every).tolist())
    saved = {grid.Nt: W_T.copy()}
    w = W_T.copy()

    def implicit(w, step):
        ab, _ = implicit_diffusion_banded(coef, step, ds, "linear")
        return solve_tridiagonal(ab, w)

    ab_cn, alpha = implicit_diffusion_banded(coef, dt, ds, "linear", theta=0.5)
    for n in range(grid.Nt - 1, -1, -1):
        if scheme == "implicit":
            w = implicit(w, dt)
        elif scheme == "cn":
            if n >= grid.Nt - 2:
                w = implicit(implicit(w, 0.5 * dt), 0.5 * dt)
            else:
                rhs = w + 0.5 * apply_diffusion(w, alpha, "linear", 0.0, ds)
                w = solve_tridiagonal(ab_cn, rhs)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        if not np.all(np.isfinite(w)):
            raise StabilityError(f"non-finite values at step {n}")
        if n in keep:
            saved[n] = w.copy()
    order = sorted(saved)
    return PdeSolution(
        values=np.stack([saved[k] for k in order]),
        t_saved=np.array([k * dt for k in order]),
        grid=grid,
        solver="bs",
        meta={"steps": grid.Nt, "scheme": scheme},
        context={"kind": "bs"},
    )


def theta_star(sol: PdeSolution, t, s, y=None, clamp: bool = False):
    """Optimal holdings at effective state ``(s, y)`` read off the solution's s-gradient."""
    w_s = sol.interp("w_s", t, s, y, clamp=clamp)
    kind = sol.context.get("kind")
    if kind == "bs":
        return w_s
    spec: ImpactSpec = sol.context["spec"]
    k = 1.0 + spec.eta
    y = np.broadcast_to(np.asarray(y, dtype=float), np.shape(w_s))
    if kind == "exponential":
        floor = sol.context["delta_floor"] + CLAMP_EPS
        lam_eff = sol.context["lam_eff"]
        return np.log1p(lam_eff * np.maximum(w_s, floor)) / lam_eff
    return spec.rel_F_increment_inv(y, k * w_s) / k


@dataclass
class DiffReport:
    """Nodewise ``a - b`` at a fixed time with its extrema."""

    t: float
    diff: np.ndarray
    s: np.ndarray
    y: Optional[np.ndarray]
    min: float
    max: float
    argmin: tuple
    argmax: tuple

    def summary(self) -> dict:
        return {"t": self.t, "min": self.min, "max": self.max, "argmin": self.argmin, "argmax": self.argmax}


def _as_2d(sol: PdeSolution, t: float, ny: int) -> np.ndarray:
    sl = sol.slice_at(t)
    return np.repeat(sl[:, None], ny, axis=1) if sol.is_1d else sl


def price_diff_report(sol_a: PdeSolution, sol_b: PdeSolution, t: float = 0.0) -> DiffReport:
    """Difference of two solutions on one time slice.

    A one-dimensional (s only) solution is broadcast along y when compared
    with a two-dimensional one on the same s-grid.
    """
    ga, gb = sol_a.grid, sol_b.grid
    same_s = ga.Ns == gb.Ns and ga.s_min == gb.s_min and ga.s_max == gb.s_max and ga.T == gb.T
    if not same_s:
        raise GridMismatchError("solutions live on different (t, s) grids")
    if sol_a.is_1d and sol_b.is_1d:
        d = sol_a.slice_at(t) - sol_b.slice_at(t)
        i_min, i_max = int(np.argmin(d)), int(np.argmax(d))
        s = ga.s
        return DiffReport(t, d, s, None, float(d[i_min]), float(d[i_max]), (s[i_min],), (s[i_max],))
    two_d = gb if sol_a.is_1d else ga
    if not (sol_a.is_1d or sol_b.is_1d) and ga != gb:
        raise GridMismatchError("solutions live on different grids")
    d = _as_2d(sol_a, t, two_d.Ny) - _as_2d(sol_b, t, two_d.Ny)
    s, y = two_d.s, two_d.y
    jmin = np.unravel_index(int(np.argmin(d)), d.shape)
    jmax = np.unravel_index(int(np.argmax(d)), d.shape)
    return DiffReport(
        t,
        d,
        s,
        y,
        float(d[jmin]),
        float(d[jmax]),
        (float(s[jmin[0]]), float(y[jmin[1]])),
        (float(s[jmax[0]]), float(y[jmax[1]])),
    )
