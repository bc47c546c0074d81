"""Multiplicative transient price impact primitives.

The marginal price is ``S = f(Y) * S_bar`` where the impact state ``Y`` follows
``dY = -h(Y) dt + dTheta``.  Everything in this module is a pure function of
immutable specs, and all maps broadcast over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DomainError, PathError

EXPONENTIAL = "exponential"
ARCTAN = "arctan"

_NEWTON_MAX_ITER = 50
_BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class ImpactSpec:
    """Impact function ``f`` together with the permanent-impact weight ``eta``.

    Parameters
    ----------
    kind : {"exponential", "arctan"}
        ``exponential``: ``f(y) = exp(lam * y)``.
        ``arctan``: ``f(y) = 1 + c * arctan(y)``.
    param : float
        ``lam`` for the exponential kind, ``c`` for the arctan kind.
    eta : float
        Permanent-impact weight (0 means purely transient impact).
    """

    kind: str
    param: float
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in (EXPONENTIAL, ARCTAN):
            raise ValueError(f"unknown impact kind {self.kind!r}")
        if not self.param > 0:
            raise ValueError("impact parameter must be positive")
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")
        if self.kind == ARCTAN and self.param * math.pi / 2 >= 1:
            # f would hit zero; the model needs f > 0
            raise ValueError("arctan impact requires c < 2/pi")

    @classmethod
    def exponential(cls, lam: float, eta: float = 0.0) -> "ImpactSpec":
        return cls(EXPONENTIAL, float(lam), float(eta))

    @classmethod
    def arctan(cls, c: float = 0.1, eta: float = 0.0) -> "ImpactSpec":
        return cls(ARCTAN, float(c), float(eta))

    @property
    def is_exponential(self) -> bool:
        return self.kind == EXPONENTIAL

    @property
    def lam(self) -> float:
        if not self.is_exponential:
            raise AttributeError("lam is only defined for exponential impact")
        return self.param

    @property
    def c(self) -> float:
        if self.is_exponential:
            raise AttributeError("c is only defined for arctan impact")
        return self.param

    def with_eta(self, eta: float) -> "ImpactSpec":
        return ImpactSpec(self.kind, self.param, float(eta))

    @property
    def f_bounds(self) -> tuple[float, float]:
        """Infimum and supremum of ``f`` over the real line."""
        if self.is_exponential:
            return 0.0, math.inf
        half = self.param * math.pi / 2
        return 1.0 - half, 1.0 + half

    # -- pointwise maps -------------------------------------------------

    def f(self, y):
        y = np.asarray(y, dtype=float)
        if self.is_exponential:
            return np.exp(self.param * y)
        return 1.0 + self.param * np.arctan(y)

    def lam_of(self, y):
        """Log-derivative ``f'/f``."""
        y = np.asarray(y, dtype=float)
        if self.is_exponential:
            return np.full_like(y, self.param)
        return self.param / ((1.0 + y * y) * self.f(y))

    def dlam(self, y):
        """Derivative of ``lam_of``."""
        y = np.asarray(y, dtype=float)
        if self.is_exponential:
            return np.zeros_like(y)
        c = self.param
        q = 1.0 + y * y
        fy = self.f(y)
        return -c * (2.0 * y * fy + c) / (q * q * fy * fy)

    def F(self, y):
        """Antiderivative of ``f`` with ``F(0) = 0``."""
        y = np.asarray(y, dtype=float)
        if self.is_exponential:
            return np.expm1(self.param * y) / self.param
        return y + self.param * (y * np.arctan(y) - 0.5 * np.log1p(y * y))

    def F_inv(self, v, x0=None):
        """Inverse of ``F``; ``x0`` optionally seeds the Newton iteration (arctan kind).

        Raises
        ------
        DomainError
            Exponential kind only, when ``v <= -1/lam`` (outside the range of F).
        """
        v = np.asarray(v, dtype=float)
        if self.is_exponential:
            lam = self.param
            if np.any(lam * v <= -1.0):
                raise DomainError("value outside the range of F: a sell of this size is impossible")
            return np.log1p(lam * v) / lam
        return _arctan_F_inv(self, v, x0)

    def rel_F_increment(self, y, a):
        """``(F(y + a) - F(y)) / f(y)``: cost of a block of size ``a`` per unit pre-trade price."""
        y = np.asarray(y, dtype=float)
        a = np.asarray(a, dtype=float)
        if self.is_exponential:
            # y drops out exactly
            return np.broadcast_to(np.expm1(self.param * a) / self.param, np.broadcast(y, a).shape).copy()
        return (self.F(y + a) - self.F(y)) / self.f(y)

    def rel_F_increment_inv(self, y, u, x0=None):
        """Block size ``a`` with ``rel_F_increment(y, a) = u``, i.e. ``F^-1(F(y) + f(y) u) - y``."""
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        if self.is_exponential:
            lam = self.param
            if np.any(lam * u <= -1.0):
                raise DomainError("value outside the range of F: a sell of this size is impossible")
            return np.broadcast_to(np.log1p(lam * u) / lam, np.broadcast(y, u).shape).copy()
        seed = None if x0 is None else y + x0
        return self.F_inv(self.F(y) + self.f(y) * u, seed) - y

    def rel_f_increment(self, y, a):
        """``(f(y + a) - f(y)) / f(y)``: relative price move caused by a block of size ``a``."""
        y = np.asarray(y, dtype=float)
        a = np.asarray(a, dtype=float)
        if self.is_exponential:
            return np.broadcast_to(np.expm1(self.param * a), np.broadcast(y, a).shape).copy()
        # atan(y+a) - atan(y) = atan(a / (1 + y(y+a))) while the denominator stays positive
        q = 1.0 + y * (y + a)
        with np.errstate(divide="ignore", invalid="ignore"):
            d_atan = np.where(q > 0, np.arctan(a / np.where(q > 0, q, 1.0)), np.arctan(y + a) - np.arctan(y))
        return self.param * d_atan / self.f(y)


def _arctan_F_inv(spec: ImpactSpec, v: np.ndarray, x0=None) -> np.ndarray:
    lo_f, hi_f = spec.f_bounds
    scale = np.maximum(1.0, np.abs(v))
    tol = 1e-12 * scale
    x = v.copy() if x0 is None else np.array(np.broadcast_to(x0, v.shape), dtype=float)
    done = np.zeros(v.shape, dtype=bool)
    for _ in range(_NEWTON_MAX_ITER):
        r = spec.F(x) - v
        done = np.abs(r) <= tol
        if done.all():
            return x
        x = np.where(done, x, x - r / spec.f(x))
    r = spec.F(x) - v
    bad = ~(np.abs(r) <= tol)
    if bad.any():
        # F is sandwiched between lo_f*x and hi_f*x on each half-line
        a = np.minimum(v / hi_f, v / lo_f)[bad]
        b = np.maximum(v / hi_f, v / lo_f)[bad]
        target = v[bad]
        for _ in range(_BISECT_MAX_ITER):
            m = 0.5 * (a + b)
            below = spec.F(m) < target
            a = np.where(below, m, a)
            b = np.where(below, b, m)
        x[bad] = 0.5 * (a + b)
    return x


@dataclass(frozen=True)
class ResilienceSpec:
    """Resilience ``h``: zero or linear ``h(y) = beta * y``."""

    beta: float = 0.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")

    @classmethod
    def zero(cls) -> "ResilienceSpec":
        return cls(0.0)

    @classmethod
    def linear(cls, beta: float) -> "ResilienceSpec":
        return cls(float(beta))

    @property
    def is_zero(self) -> bool:
        return self.beta == 0.0

    def h(self, y):
        y = np.asarray(y, dtype=float)
        if self.is_zero:
            return np.zeros_like(y)
        return self.beta * y

    def dh(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.beta)


@dataclass(frozen=True)
class MarketParams:
    """Unaffected-price dynamics and the initial state.

    ``mu`` is ignored by the PDE solvers and only drives simulations.
    """

    sigma: float
    mu: float = 0.0
    s_bar0: float = 50.0
    y0: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.s_bar0 > 0:
            raise ValueError("s_bar0 must be positive")


# -- functional surface ------------------------------------------------------


def f_eval(spec: ImpactSpec, y):
    return spec.f(y)


def lambda_eval(spec: ImpactSpec, y):
    return spec.lam_of(y)


def F_eval(spec: ImpactSpec, y):
    return spec.F(y)


def F_inv(spec: ImpactSpec, v):
    return spec.F_inv(v)


def block_trade_proceeds(spec: ImpactSpec, s_bar, y_pre, theta_pre, delta):
    """Cash received for a block trade of ``delta`` shares (negative for buys)."""
    eta = spec.eta
    base = eta * np.asarray(theta_pre, dtype=float) + np.asarray(y_pre, dtype=float)
    moved = base + (1.0 + eta) * np.asarray(delta, dtype=float)
    return -np.asarray(s_bar, dtype=float) / (1.0 + eta) * (spec.F(moved) - spec.F(base))


def effective_coords(spec: ImpactSpec, s, y, theta):
    """Price and impact that would prevail right after liquidating ``theta`` shares."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(s <= 0):
        raise ValueError("price must be positive")
    eff_y = y - theta
    if spec.is_exponential:
        return s * np.exp(-spec.param * theta), eff_y
    return s * spec.f(eff_y) / spec.f(y), eff_y


def liq_wealth(spec: ImpactSpec, beta_cash, s_bar, y, theta):
    """Cash plus the proceeds of selling all ``theta`` shares in one block."""
    eta = spec.eta
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return np.asarray(beta_cash, dtype=float) + np.asarray(s_bar, dtype=float) / (1.0 + eta) * (
        spec.F(eta * theta + y) - spec.F(y - theta)
    )


def mathfrak_F(spec: ImpactSpec, h: ResilienceSpec, s, y, theta):
    """Drift correction in the dynamics of ``V_liq - phi(t, S_eff, Y_eff)``.

    Vanishes identically for exponential impact and at ``theta = 0``.
    """
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if spec.is_exponential:
        # lam * (e^{lam a} - 1) / lam - (e^{lam a} - 1) is zero; evaluating it only adds rounding
        return np.zeros(np.broadcast(s, y, theta).shape)
    k = 1.0 + spec.eta
    a = k * theta
    bracket = (spec.lam_of(y) * spec.rel_F_increment(y, a) - spec.rel_f_increment(y, a)) / k
    out = s * h.h(y + theta) * bracket
    return np.where(theta == 0.0, 0.0, out)


def impact_step(h: ResilienceSpec, y, d_theta, dt):
    """Explicit Euler step of the impact ODE; ``dt = 0`` is a pure jump."""
    if np.any(np.asarray(dt) < 0):
        raise ValueError("dt must be nonnegative")
    y = np.asarray(y, dtype=float)
    return y - h.h(y) * dt + d_theta


def proceeds_along_path(
    spec: ImpactSpec,
    h: ResilienceSpec,
    times: Sequence[float],
    thetas: Sequence[float],
    s_bars: Sequence[float],
    y0: float = 0.0,
) -> float:
    """Left-point discretisation of the proceeds functional along a strategy path.

    Consecutive entries with equal time encode a block trade, priced exactly by
    :func:`block_trade_proceeds`.  The first entry is the state just before
    trading starts (``Theta_{0-}``, ``S_bar_0``); ``y0`` is ``Y_{0-}``.
    """
    t = np.asarray(times, dtype=float)
    th = np.asarray(thetas, dtype=float)
    sb = np.asarray(s_bars, dtype=float)
    if not (t.shape == th.shape == sb.shape) or t.ndim != 1:
        raise PathError("times, thetas and s_bars must be 1-d arrays of equal length")
    if np.any(np.diff(t) < 0):
        raise PathError("path times must be non-decreasing")
    eta = spec.eta
    k = 1.0 + eta
    y = float(y0)
    total = 0.0
    for i in range(len(t) - 1):
        dt = t[i + 1] - t[i]
        d_theta = th[i + 1] - th[i]
        if dt == 0.0:
            total += float(block_trade_proceeds(spec, sb[i + 1], y, th[i], d_theta))
            y = float(impact_step(h, y, d_theta, 0.0))
            continue
        # volume effect eta*Theta + Y carries both impact components
        x0 = eta * th[i] + y
        y_next = float(impact_step(h, y, d_theta, dt))
        x1 = eta * th[i + 1] + y_next
        inc = (
            spec.F(x0) * (sb[i + 1] - sb[i])
            - sb[i] * spec.f(x0) * h.h(y) * dt
            - (sb[i + 1] * spec.F(x1) - sb[i] * spec.F(x0))
        )
        total += float(inc) / k
        y = y_next
    return total
