"""Option payoffs, their pure-cash equivalent ``H`` and the delta/gamma face-lifts."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .exceptions import ConvergenceError, InfeasiblePayoffError
from .impact import ImpactSpec

logger = logging.getLogger(__name__)

CASH_CALL = "cash_call"
PHYSICAL_CALL = "physical_call"
CASH_PUT = "cash_put"
BULL_SPREAD = "bull_spread"
ZERO = "zero"
PAYOFF_KINDS = (CASH_CALL, PHYSICAL_CALL, CASH_PUT, BULL_SPREAD, ZERO)

INFINITE_SENTINEL = 1e6


@dataclass(frozen=True)
class Payoff:
    """European payoff ``(g0, g1)`` depending on the price only.

    ``g0`` is paid in cash, ``g1`` is delivered in shares.  ``smooth_width``
    replaces kinks/indicators by ramps of that width (0 keeps them sharp).
    Both components are multiplied by ``notional``.
    """

    kind: str
    strike: float = 50.0
    strike2: float = 0.0
    smooth_width: float = 0.0
    notional: float = 1.0

    def __post_init__(self):
        if not self.notional > 0:
            raise ValueError("notional must be positive")
        if self.kind not in PAYOFF_KINDS:
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if self.smooth_width < 0:
            raise ValueError("smooth_width must be nonnegative")
        if self.kind == BULL_SPREAD and not self.strike2 > self.strike:
            raise ValueError("bull spread needs strike2 > strike")

    @classmethod
    def cash_call(cls, strike: float) -> "Payoff":
        return cls(CASH_CALL, float(strike))

    @classmethod
    def physical_call(cls, strike: float, smooth_width: float = 0.0) -> "Payoff":
        return cls(PHYSICAL_CALL, float(strike), smooth_width=float(smooth_width))

    @classmethod
    def cash_put(cls, strike: float) -> "Payoff":
        return cls(CASH_PUT, float(strike))

    @classmethod
    def bull_spread(cls, k1: float, k2: float, smooth_width: float = 0.0, notional: float = 1.0) -> "Payoff":
        return cls(BULL_SPREAD, float(k1), float(k2), float(smooth_width), float(notional))

    @classmethod
    def zero(cls) -> "Payoff":
        return cls(ZERO)

    @property
    def cash_settled(self) -> bool:
        return self.kind != PHYSICAL_CALL

    def indicator(self, s):
        """Exercise indicator of the physical call, ramped when smoothed."""
        s = np.asarray(s, dtype=float)
        K, w = self.strike, self.smooth_width
        if w == 0:
            return (s >= K).astype(float)
        return np.clip((s - (K - w)) / w, 0.0, 1.0)

    def g0(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == CASH_CALL:
            out = np.maximum(s - self.strike, 0.0)
        elif self.kind == CASH_PUT:
            out = np.maximum(self.strike - s, 0.0)
        elif self.kind == PHYSICAL_CALL:
            out = -self.strike * self.indicator(s)
        elif self.kind == BULL_SPREAD:
            out = _soft_plus(s - self.strike, self.smooth_width) - _soft_plus(s - self.strike2, self.smooth_width)
        else:
            return np.zeros_like(s)
        return out if self.notional == 1.0 else self.notional * out

    def g1(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == PHYSICAL_CALL:
            out = self.indicator(s)
            return out if self.notional == 1.0 else self.notional * out
        return np.zeros_like(s)

    def frictionless(self, s):
        """Cash value of the payoff when trades have no impact (``f = 1``)."""
        return self.g0(s) + np.asarray(s, dtype=float) * self.g1(s)


def _soft_plus(x, w):
    # C^1 quadratic rounding of max(x, 0) on [-w, w]
    if w == 0:
        return np.maximum(x, 0.0)
    return np.where(x <= -w, 0.0, np.where(x >= w, x, (x + w) ** 2 / (4.0 * w)))


@dataclass
class TerminalSurface:
    """``H`` on the (s, y) lattice; ``infinite`` flags nodes with no admissible trade."""

    values: np.ndarray
    infinite: np.ndarray
    s_nodes: np.ndarray
    y_nodes: np.ndarray

    @property
    def is_finite(self) -> bool:
        return not bool(self.infinite.any())

    def bounded(self, sentinel: float = INFINITE_SENTINEL) -> np.ndarray:
        """Values with +inf nodes clamped to ``sentinel``."""
        if self.is_finite:
            return self.values.copy()
        warnings.warn(
            f"{int(self.infinite.sum())} terminal nodes have H = +inf; clamped to {sentinel:g}",
            RuntimeWarning,
            stacklevel=2,
        )
        return np.where(self.infinite, sentinel, self.values)


def _fixed_point_residual(payoff, spec, s, y, theta):
    a = (1.0 + spec.eta) * theta
    s_post = s * (1.0 + spec.rel_f_increment(y, a))
    return theta - payoff.g1(s_post)


def _settlement_cost(payoff, spec, s, y, theta):
    k = 1.0 + spec.eta
    a = k * theta
    s_post = s * (1.0 + spec.rel_f_increment(y, a))
    return payoff.g0(s_post) + s * spec.rel_F_increment(y, a) / k


def solve_H_batch(
    payoff: Payoff,
    spec: ImpactSpec,
    s,
    y,
    theta_bounds: tuple[float, float] = (-20.0, 20.0),
    n_scan: int = 400,
    n_bisect: int = 60,
    return_theta: bool = False,
):
    """Vectorised :func:`solve_H` over matching arrays of ``s`` and ``y``.

    Every root of ``theta = g1(post-trade price)`` inside ``theta_bounds`` is
    bracketed by a sign-change scan and refined by bisection; the cheapest
    settlement among the roots is returned.  ``+inf`` marks nodes without roots.
    """
    s, y = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(y, dtype=float))
    shape = s.shape
    s = s.ravel()
    y = y.ravel()
    if payoff.cash_settled:
        # theta = 0 is the only root of theta = 0
        h = payoff.g0(s)
        th = np.zeros_like(s)
        return (h.reshape(shape), th.reshape(shape)) if return_theta else h.reshape(shape)

    lo, hi = map(float, theta_bounds)
    grid = np.linspace(lo, hi, n_scan + 1)
    best = np.full(s.shape, np.inf)
    best_theta = np.full(s.shape, np.nan)
    chunk = max(1, 2_000_000 // (n_scan + 1))
    for start in range(0, s.size, chunk):
        sl = slice(start, start + chunk)
        sc, yc = s[sl, None], y[sl, None]
        phi = _fixed_point_residual(payoff, spec, sc, yc, grid[None, :])
        node_idx, k_idx = np.nonzero(phi[:, :-1] * phi[:, 1:] < 0)
        a = grid[k_idx]
        b = grid[k_idx + 1]
        sb, yb = sc[node_idx, 0], yc[node_idx, 0]
        fa = phi[node_idx, k_idx]
        for _ in range(n_bisect):
            m = 0.5 * (a + b)
            fm = _fixed_point_residual(payoff, spec, sb, yb, m)
            left = np.sign(fm) == np.sign(fa)
            a = np.where(left, m, a)
            fa = np.where(left, fm, fa)
            b = np.where(left, b, m)
        roots = 0.5 * (a + b)
        # a jump of g1 produces a sign change that is not a root
        genuine = np.abs(_fixed_point_residual(payoff, spec, sb, yb, roots)) <= 1e-8
        z_node, z_k = np.nonzero(phi == 0.0)
        cand_node = np.concatenate([node_idx[genuine], z_node])
        cand_theta = np.concatenate([roots[genuine], grid[z_k]])
        if cand_node.size == 0:
            continue
        cost = _settlement_cost(payoff, spec, sc[cand_node, 0], yc[cand_node, 0], cand_theta)
        local_best = best[sl]
        local_theta = best_theta[sl]
        order = np.lexsort((cost, cand_node))
        cand_node, cost, cand_theta = cand_node[order], cost[order], cand_theta[order]
        first = np.ones(cand_node.size, dtype=bool)
        first[1:] = cand_node[1:] != cand_node[:-1]
        local_best[cand_node[first]] = cost[first]
        local_theta[cand_node[first]] = cand_theta[first]
    best = best.reshape(shape)
    if return_theta:
        return best, best_theta.reshape(shape)
    return best


def solve_H(payoff: Payoff, spec: ImpactSpec, s: float, y: float, theta_bounds=(-20.0, 20.0)) -> float:
    """Cheapest cash amount that settles ``payoff`` with one block trade at maturity.

    Returns ``inf`` if no block trade within ``theta_bounds`` meets the
    physical-delivery requirement.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    return float(solve_H_batch(payoff, spec, s, y, theta_bounds))


def terminal_surface(payoff: Payoff, spec: ImpactSpec, grid, strict: bool = False, theta_bounds=(-20.0, 20.0)):
    """Evaluate ``H`` at every (s, y) node of ``grid``.

    With ``strict=True`` any infeasible node raises :class:`InfeasiblePayoffError`;
    otherwise such nodes are only flagged.
    """
    S, Y = np.meshgrid(grid.s, grid.y, indexing="ij")
    values = solve_H_batch(payoff, spec, S, Y, theta_bounds)
    infinite = ~np.isfinite(values)
    if infinite.any():
        if strict:
            raise InfeasiblePayoffError(f"{int(infinite.sum())} nodes admit no settling block trade")
        logger.warning("terminal surface has %d infeasible nodes", int(infinite.sum()))
    return TerminalSurface(values, infinite, grid.s.copy(), grid.y.copy())


def delta_floor_slope(lam: float, kappa_short: float) -> float:
    """Most negative slope compatible with the short-selling bound ``-kappa_short``."""
    return -np.expm1(-lam * kappa_short) / lam


def facelift_delta(H_line, s_nodes, lam: float, kappa_short: float) -> np.ndarray:
    """Smallest function above ``H_line`` whose slope never drops below ``-c``.

    ``c = (1 - exp(-lam * kappa_short)) / lam``.  Works along axis 0, so a
    2-d (s, y) array is lifted column by column.
    """
    H = np.array(H_line, dtype=float, copy=True)
    if not np.all(np.isfinite(H)):
        raise ValueError("face-lift needs finite payoff values")
    c = delta_floor_slope(lam, kappa_short)
    ds = np.diff(np.asarray(s_nodes, dtype=float))
    for j in range(1, H.shape[0]):
        H[j] = np.maximum(H[j], H[j - 1] - c * ds[j - 1])
    return H


def _gamma_bar_values(gamma_bar, s_nodes):
    s = np.asarray(s_nodes, dtype=float)
    if callable(gamma_bar):
        return np.broadcast_to(np.asarray(gamma_bar(s), dtype=float), s.shape)
    return np.broadcast_to(np.asarray(gamma_bar, dtype=float), s.shape).copy()


def _convexifier(s, gb):
    # psi with s_j * D2 psi_j = gb_j at interior nodes
    n = s.size
    ds = s[1] - s[0]
    psi = np.zeros(n)
    for j in range(1, n - 1):
        psi[j + 1] = 2 * psi[j] - psi[j - 1] + ds * ds * gb[j] / s[j]
    return psi


def _upper_hull_vertices(x, v):
    hull: list[int] = []
    for j in range(x.size):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            # drop i1 if it lies on or below the chord from i0 to j
            cross = (x[i1] - x[i0]) * (v[j] - v[i0]) - (v[i1] - v[i0]) * (x[j] - x[i0])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(j)
    return np.asarray(hull)


def facelift_gamma(
    g_line,
    s_nodes,
    gamma_bar: Union[float, Callable] = 10.0,
    method: str = "hull",
    tol: float = 1e-10,
    max_sweeps: int = 100_000,
) -> np.ndarray:
    """Smallest grid function above ``g_line`` with ``s * D2 phi <= gamma_bar(s)`` inside.

    ``method="hull"`` subtracts a particular solution of the saturated
    constraint and takes the upper concave envelope of the remainder (exact).
    ``method="sweep"`` iterates ``phi_j = max(g_j, chord_j)`` to a fixed point.
    """
    g = np.asarray(g_line, dtype=float)
    s = np.asarray(s_nodes, dtype=float)
    if not np.all(np.isfinite(g)):
        raise ValueError("gamma face-lift needs a bounded payoff")
    gb = _gamma_bar_values(gamma_bar, s)
    if np.any(gb[1:-1] <= 0):
        raise ValueError("gamma_bar must be positive")
    ds = s[1] - s[0]
    if method == "hull":
        psi = _convexifier(s, gb)
        v = g - psi
        verts = _upper_hull_vertices(s, v)
        out = np.interp(s, s[verts], v[verts]) + psi
        is_vertex = np.zeros(s.size, dtype=bool)
        is_vertex[verts] = True
        out = np.where(is_vertex, g, np.maximum(out, g))
        return out
    if method != "sweep":
        raise ValueError(f"unknown method {method!r}")
    phi = g.copy()
    slack = np.zeros_like(s)
    slack[1:-1] = ds * ds * gb[1:-1] / (2.0 * s[1:-1])
    for _ in range(max_sweeps):
        old = phi.copy()
        for j in range(1, s.size - 1):
            chord = 0.5 * (phi[j - 1] + phi[j + 1]) - slack[j]
            if chord > phi[j]:
                phi[j] = chord
        if np.max(np.abs(phi - old)) <= tol:
            return phi
    raise ConvergenceError(f"gamma face-lift sweeps did not converge in {max_sweeps} sweeps")
