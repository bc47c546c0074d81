"""Computational lattice, solution surfaces and the shared finite-difference kernels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .exceptions import OutOfDomainError


@dataclass(frozen=True)
class Grid:
    """Uniform (t, s, y) lattice on ``[0, T] x [s_min, s_max] x [y_min, y_max]``."""

    T: float = 0.5
    Nt: int = 2000
    Ns: int = 201
    Ny: int = 81
    s_min: float = 0.0
    s_max: float = 200.0
    y_min: float = -20.0
    y_max: float = 20.0

    def __post_init__(self):
        if min(self.Nt, self.Ns, self.Ny) < 3:
            raise ValueError("Nt, Ns and Ny must all be at least 3")
        if self.s_min < 0 or not self.s_max > self.s_min:
            raise ValueError("need 0 <= s_min < s_max")
        if not self.y_max > self.y_min:
            raise ValueError("need y_min < y_max")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.Nt + 1)

    @property
    def s(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.Ns)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.Ny)

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / (self.Ns - 1)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / (self.Ny - 1)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("T", "Nt", "Ns", "Ny", "s_min", "s_max", "y_min", "y_max")}


@dataclass(frozen=True)
class BoundaryConfig:
    """Boundary treatment at ``s = s_max``.

    ``s_max_slope=None`` takes the slope of the terminal data at the last two
    s-nodes (per y), which is the asymptotic slope for calls.
    """

    s_max_kind: str = "neumann"
    s_max_slope: Optional[float] = None

    def __post_init__(self):
        if self.s_max_kind not in ("neumann", "linear"):
            raise ValueError("s_max_kind must be 'neumann' or 'linear'")


def save_steps(Nt: int, save_every: Optional[int]) -> np.ndarray:
    """Time-step indices whose slices are kept (always including 0 and Nt)."""
    if save_every is None:
        save_every = max(1, Nt // 250)
    idx = np.arange(0, Nt + 1, save_every)
    if idx[-1] != Nt:
        idx = np.append(idx, Nt)
    return idx


def diff_s(w: np.ndarray, ds: float) -> np.ndarray:
    """First derivative along axis 0: central inside, one-sided at the ends."""
    out = np.empty_like(w)
    out[1:-1] = (w[2:] - w[:-2]) / (2 * ds)
    out[0] = (w[1] - w[0]) / ds
    out[-1] = (w[-1] - w[-2]) / ds
    return out


def diff2_s(w: np.ndarray, ds: float) -> np.ndarray:
    out = np.empty_like(w)
    out[1:-1] = (w[2:] - 2 * w[1:-1] + w[:-2]) / (ds * ds)
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def diff3_s(w: np.ndarray, ds: float) -> np.ndarray:
    """Third derivative with the 5-point central stencil; edges copy the nearest interior value."""
    out = np.zeros_like(w)
    if w.shape[0] >= 5:
        out[2:-2] = (w[4:] - 2 * w[3:-1] + 2 * w[1:-3] - w[:-4]) / (2 * ds**3)
        out[:2] = out[2]
        out[-2:] = out[-3]
    return out


def diff_y(w: np.ndarray, dy: float) -> np.ndarray:
    """First derivative along axis 1, central inside, zero at the ends (Neumann)."""
    out = np.zeros_like(w)
    out[:, 1:-1] = (w[:, 2:] - w[:, :-2]) / (2 * dy)
    return out


def upwind(w: np.ndarray, velocity: np.ndarray, h: float, axis: int, hi_slope=0.0) -> np.ndarray:
    """One-sided difference taken on the upwind side of ``velocity``.

    Positive velocity uses the backward difference.  The lower edge of the
    backward difference and the upper edge of the forward difference use the
    boundary slopes 0 and ``hi_slope``.
    """
    w = np.moveaxis(w, axis, 0)
    back = np.empty_like(w)
    back[1:] = (w[1:] - w[:-1]) / h
    back[0] = 0.0
    fwd = np.empty_like(w)
    fwd[:-1] = (w[1:] - w[:-1]) / h
    fwd[-1] = hi_slope
    out = np.where(np.moveaxis(velocity, axis, 0) > 0, back, fwd)
    return np.moveaxis(out, 0, axis)


def implicit_diffusion_banded(coef: np.ndarray, dt: float, ds: float, s_max_kind: str, theta: float = 1.0):
    """Banded matrix of ``I - theta*dt*A`` for ``A w = coef * w_ss``.

    Row 0 is held (the diffusion degenerates at s = 0); the last row is either
    a ghost-node Neumann row or held fixed (``linear``: ``w_ss = 0``).
    Returns ``(ab, alpha)`` with ``alpha = coef * dt / ds**2``.
    """
    alpha = np.asarray(coef, dtype=float) * dt / (ds * ds)
    n = alpha.shape[0]
    a = theta * alpha
    ab = np.zeros((3,) + alpha.shape)
    ab[1] = 1.0 + 2.0 * a
    ab[0, 1:] = -a[:-1]
    ab[2, :-1] = -a[1:]
    # row 0: identity
    ab[1, 0] = 1.0
    ab[0, 1] = 0.0
    if s_max_kind == "neumann":
        ab[2, n - 2] = -2.0 * a[n - 1]
    else:
        ab[1, n - 1] = 1.0
        ab[2, n - 2] = 0.0
    return ab, alpha


def apply_diffusion(w: np.ndarray, alpha: np.ndarray, s_max_kind: str, slope, ds: float) -> np.ndarray:
    """Explicit ``dt * A w`` on the same boundary rows as :func:`implicit_diffusion_banded`."""
    a = alpha.reshape(alpha.shape + (1,) * (w.ndim - 1))
    out = np.zeros_like(w)
    out[1:-1] = a[1:-1] * (w[2:] - 2 * w[1:-1] + w[:-2])
    if s_max_kind == "neumann":
        out[-1] = a[-1] * (2 * w[-2] - 2 * w[-1] + 2 * ds * slope)
    return out


def solve_tridiagonal(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system stored in LAPACK banded form (several RHS columns allowed)."""
    if ab.ndim == 2:
        return solve_banded((1, 1), ab, rhs, check_finite=False)
    # one matrix per column
    out = np.empty_like(rhs)
    for k in range(rhs.shape[1]):
        out[:, k] = solve_banded((1, 1), ab[:, :, k], rhs[:, k], check_finite=False)
    return out


def _bracket(nodes: np.ndarray, x: np.ndarray, name: str, clamp: bool):
    lo, hi = nodes[0], nodes[-1]
    x = np.asarray(x, dtype=float)
    tol = 1e-12 * max(1.0, abs(hi), abs(lo))
    if not clamp and (np.any(x < lo - tol) or np.any(x > hi + tol)):
        raise OutOfDomainError(f"{name} outside [{lo}, {hi}]")
    x = np.clip(x, lo, hi)
    if nodes.size == 1:
        return np.zeros(x.shape, dtype=int), np.zeros(x.shape)
    i = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, nodes.size - 2)
    w = (x - nodes[i]) / (nodes[i + 1] - nodes[i])
    return i, w


@dataclass
class PdeSolution:
    """Value surface ``w`` on saved time slices of a grid.

    ``values`` has shape ``(n_saved, Ns, Ny)`` (or ``(n_saved, Ns)`` for
    one-dimensional problems).  ``context`` keeps what derived queries need:
    the impact spec and, for constrained solves, the effective ``lam`` and
    ``kappa_short``.
    """

    values: np.ndarray
    t_saved: np.ndarray
    grid: Grid
    solver: str
    meta: dict = field(default_factory=dict)
    constraint_mask: Optional[np.ndarray] = None
    context: dict = field(default_factory=dict)
    _fields: dict = field(default_factory=dict, repr=False)

    @property
    def is_1d(self) -> bool:
        return self.values.ndim == 2

    @property
    def s(self) -> np.ndarray:
        return self.grid.s

    @property
    def y(self) -> np.ndarray:
        return self.grid.y

    def slice_at(self, t: float) -> np.ndarray:
        """Linear-in-time interpolation between saved slices."""
        i, w = _bracket(self.t_saved, np.asarray(t), "t", clamp=False)
        i, w = int(i), float(w)
        if self.t_saved.size == 1:
            return self.values[0].copy()
        return (1 - w) * self.values[i] + w * self.values[i + 1]

    def field(self, name: str) -> np.ndarray:
        """Derivative field on all saved slices: w, w_s, w_ss, w_sss, w_y, w_sy, w_t, w_ts."""
        if name in self._fields:
            return self._fields[name]
        g = self.grid
        v = self.values
        ds = g.ds
        if name == "w":
            out = v
        elif name == "w_s":
            out = np.stack([diff_s(x, ds) for x in v])
        elif name == "w_ss":
            out = np.stack([diff2_s(x, ds) for x in v])
        elif name == "w_sss":
            out = np.stack([diff3_s(x, ds) for x in v])
        elif name == "w_y":
            out = np.zeros_like(v) if self.is_1d else np.stack([diff_y(x, g.dy) for x in v])
        elif name == "w_sy":
            ws = self.field("w_s")
            out = np.zeros_like(v) if self.is_1d else np.stack([diff_y(x, g.dy) for x in ws])
        elif name in ("w_t", "w_ts"):
            base = v if name == "w_t" else self.field("w_s")
            if self.t_saved.size < 2:
                out = np.zeros_like(v)
            else:
                out = np.gradient(base, self.t_saved, axis=0)
        else:
            raise KeyError(name)
        self._fields[name] = out
        return out

    def interp(self, name: str, t, s, y=None, clamp: bool = False) -> np.ndarray:
        """Interpolate a field at points: linear in t, bilinear in (s, y)."""
        F = self.field(name)
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        it, wt = _bracket(self.t_saved, t, "t", clamp)
        is_, ws = _bracket(self.s, s, "s", clamp)
        if self.t_saved.size == 1:
            it1 = it
        else:
            it1 = it + 1
        if self.is_1d:
            def at(ti):
                return (1 - ws) * F[ti, is_] + ws * F[ti, is_ + 1]
        else:
            if y is None:
                raise ValueError("y is required for a two-dimensional surface")
            y = np.broadcast_to(np.asarray(y, dtype=float), t.shape)
            iy, wy = _bracket(self.y, y, "y", clamp)

            def at(ti):
                return (
                    (1 - ws) * (1 - wy) * F[ti, is_, iy]
                    + ws * (1 - wy) * F[ti, is_ + 1, iy]
                    + (1 - ws) * wy * F[ti, is_, iy + 1]
                    + ws * wy * F[ti, is_ + 1, iy + 1]
                )
        return (1 - wt) * at(it) + wt * at(it1)

    def price(self, t, s, y=None) -> np.ndarray:
        return self.interp("w", t, s, y)

    def inside_hull(self, s, y=None) -> np.ndarray:
        g = self.grid
        ok = (s >= g.s_min) & (s <= g.s_max)
        if y is not None and not self.is_1d:
            ok &= (y >= g.y_min) & (y <= g.y_max)
        return ok
