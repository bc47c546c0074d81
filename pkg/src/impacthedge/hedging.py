"""Monte Carlo verification of hedging strategies in the impact market.

Two discretisations of the replicating strategy are available:

``feedback``
    The market (unaffected price, impact, cash, holdings) is simulated
    directly.  At every step the hedger block-trades to the target holding
    read off the solution at the current effective state; block trades leave
    the effective coordinates and the liquidation wealth unchanged, so the
    target is explicit.
``sde``
    Euler-Maruyama on the reduced system (effective price, effective impact,
    holdings) with holdings driven by the drift/volatility coefficients
    obtained from Itô's formula; the liquidation wealth follows its own
    stochastic differential.

Normal increments come from a Philox stream keyed by ``(seed, path)`` so the
output does not depend on chunking or threading.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigError, HullEscapeError
from .grid import PdeSolution
from .impact import ImpactSpec, MarketParams, ResilienceSpec, block_trade_proceeds, impact_step, mathfrak_F
from .noncovered import theta_star
from .payoff import Payoff, solve_H_batch

logger = logging.getLogger(__name__)

SCHEMES = ("feedback", "sde")


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    Parameters
    ----------
    n_paths, n_steps : int
        Number of paths and of hedging dates on ``[0, T]``.
    seed : int
        Key of the counter-based normal stream.
    epsilon_capital : float
        Extra initial cash on top of the model price.
    shortfall_tol : float
        A path succeeds when ``V_T >= H_T - shortfall_tol``.
    scheme : {"feedback", "sde"}
    record_paths : int
        Number of leading paths whose full trajectory is kept.
    threads : int
        Worker threads over path chunks.
    compensate_drift : bool
        Replace the drift ``mu`` by the value that makes the effective price
        a martingale.
    max_escape_fraction : float
        Path-steps allowed outside the solution grid before giving up.
    """

    n_paths: int = 10_000
    n_steps: int = 500
    seed: int = 0
    epsilon_capital: float = 0.0
    shortfall_tol: float = 1e-9
    scheme: str = "feedback"
    record_paths: int = 0
    threads: int = 1
    chunk_size: int = 2500
    compensate_drift: bool = False
    max_escape_fraction: float = 0.05

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigError("n_paths must be positive")
        if self.n_steps < 10:
            raise ConfigError("n_steps must be at least 10")
        if self.epsilon_capital < 0 or self.shortfall_tol < 0:
            raise ConfigError("epsilon_capital and shortfall_tol must be nonnegative")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.threads < 1 or self.chunk_size < 1:
            raise ConfigError("threads and chunk_size must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


@dataclass
class PathRecord:
    """Full trajectory of one simulated path.

    Arrays indexed by step ``k`` hold the state at ``t_k`` after the hedge
    trade; ``dW`` and ``dt`` are the increments on ``[t_k, t_{k+1}]``.
    ``phi_*`` are the solution derivatives used at that state and
    ``increment`` is the model increment of ``V_liq - phi`` over the step.
    """

    path: int
    t: np.ndarray
    S_eff: np.ndarray
    Y_eff: np.ndarray
    theta: np.ndarray
    V_liq: np.ndarray
    dW: np.ndarray
    dt: np.ndarray
    mu: np.ndarray
    phi_t: np.ndarray
    phi_s: np.ndarray
    phi_ss: np.ndarray
    phi_y: np.ndarray
    increment: np.ndarray
    spec: ImpactSpec = field(repr=False)
    h: ResilienceSpec = field(repr=False)
    sigma: float = 0.0


@dataclass
class HedgeReport:
    """Aggregated superhedging statistics.

    ``shortfall = H_T - V_T`` per path (positive means the hedge fell short).
    """

    success_fraction: float
    success_se: float
    n_paths: int
    n_steps: int
    seed: int
    scheme: str
    price: float
    epsilon_capital: float
    initial_capital: float
    terminal_wealth_mean: float
    terminal_wealth_std: float
    shortfall_quantiles: dict
    escape_fraction: float
    extra: dict = field(default_factory=dict)
    V_T: Optional[np.ndarray] = field(default=None, repr=False)
    H_T: Optional[np.ndarray] = field(default=None, repr=False)
    records: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k not in ("V_T", "H_T", "records")}
        return out

    @property
    def terminal_wealth_se(self) -> float:
        return self.terminal_wealth_std / math.sqrt(self.n_paths)


def _normals(seed: int, paths: np.ndarray, n_steps: int) -> np.ndarray:
    out = np.empty((paths.size, n_steps))
    for i, p in enumerate(paths):
        rng = np.random.Generator(np.random.Philox(key=[seed, int(p)]))
        out[i] = rng.standard_normal(n_steps)
    return out


def _summarise(V, H, cfg, price, escapes, extra, records) -> HedgeReport:
    n = V.size
    short = H - V
    ok = V >= H - cfg.shortfall_tol
    frac = float(ok.mean())
    q = np.quantile(short, [0.5, 0.95, 0.99])
    return HedgeReport(
        success_fraction=frac,
        success_se=math.sqrt(max(frac * (1 - frac), 0.0) / n),
        n_paths=n,
        n_steps=cfg.n_steps,
        seed=cfg.seed,
        scheme=cfg.scheme,
        price=float(price),
        epsilon_capital=cfg.epsilon_capital,
        initial_capital=float(price + cfg.epsilon_capital),
        terminal_wealth_mean=float(V.mean()),
        terminal_wealth_std=float(V.std(ddof=1)) if n > 1 else 0.0,
        shortfall_quantiles={"50%": float(q[0]), "95%": float(q[1]), "99%": float(q[2]), "max": float(short.max())},
        escape_fraction=escapes,
        extra=extra,
        V_T=V,
        H_T=H,
        records=records,
    )


class _Derivs:
    """Solution derivatives at scattered states, clamped to the grid hull."""

    def __init__(self, sol: PdeSolution):
        self.sol = sol

    def __call__(self, name, t, s, y):
        if self.sol.is_1d:
            return self.sol.interp(name, t, s, clamp=True)
        return self.sol.interp(name, t, s, y, clamp=True)


def _outside(sol: PdeSolution, s, y) -> np.ndarray:
    return ~sol.inside_hull(s, None if sol.is_1d else y)


def _run_chunks(fn, cfg: SimConfig):
    chunks = [np.arange(a, min(a + cfg.chunk_size, cfg.n_paths)) for a in range(0, cfg.n_paths, cfg.chunk_size)]
    if cfg.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            parts = list(pool.map(fn, chunks))
    else:
        parts = [fn(c) for c in chunks]
    keys = parts[0].keys()
    return {k: (np.concatenate([p[k] for p in parts]) if k != "records" else sum((p[k] for p in parts), [])) for k in keys}


def _simulate(
    sol: PdeSolution,
    spec: ImpactSpec,
    h: ResilienceSpec,
    params: MarketParams,
    target: Callable,
    price: float,
    cfg: SimConfig,
    integrand: bool = False,
):
    if spec.eta != 0:
        raise ConfigError("the simulator covers transient impact only (eta = 0)")
    T = sol.grid.T
    N = cfg.n_steps
    dt = T / N
    sigma, mu = params.sigma, params.mu
    sq = math.sqrt(dt)
    D = _Derivs(sol)
    y0 = params.y0

    def record_state(k, rec, idx, t, S, Ye, Th, V, dW, mu_k):
        if not rec:
            return
        for r in rec:
            i = r["i"]
            r["t"].append(t)
            r["S"].append(S[i])
            r["Y"].append(Ye[i])
            r["th"].append(Th[i])
            r["V"].append(V[i])
            r["dW"].append(dW[i] if dW is not None else 0.0)
            r["mu"].append(mu_k[i] if np.ndim(mu_k) else mu_k)

    def chunk(paths):
        n = paths.size
        Z = _normals(cfg.seed, paths, N)
        rec = [{"i": i, "path": int(p), **{k: [] for k in ("t", "S", "Y", "th", "V", "dW", "mu")}}
               for i, p in enumerate(paths) if p < cfg.record_paths]
        esc = 0
        tally = {"neg": 0, "pos": 0, "zero": 0, "integral": np.zeros(n)}
        s0 = params.s_bar0 * float(spec.f(y0))
        V = np.full(n, price + cfg.epsilon_capital)
        if cfg.scheme == "feedback":
            cash = V
            sb = np.full(n, params.s_bar0)
            Y = np.full(n, float(y0))
            Th = np.zeros(n)
            for k in range(N):
                t = k * dt
                Ye = Y - Th
                S = sb * spec.f(Ye)
                esc += int(_outside(sol, S, Ye).sum())
                new = target(t, S, Ye)
                d = new - Th
                cash = cash + block_trade_proceeds(spec, sb, Y, Th, d)
                Y = Y + d
                Th = new
                hY = h.h(Y)
                mu_k = spec.lam_of(Ye) * hY if cfg.compensate_drift else mu
                if integrand:
                    _tally(tally, spec, h, S, Ye, Th, dt)
                dW = sq * Z[:, k]
                if rec:
                    record_state(k, rec, paths, t, S, Ye, Th, cash + sb * (spec.F(Y) - spec.F(Ye)), dW, mu_k)
                sb = sb * np.exp((mu_k - 0.5 * sigma * sigma) * dt + sigma * dW)
                Y = impact_step(h, Y, 0.0, dt)
            # unwind the remaining holdings in one block
            cash = cash + block_trade_proceeds(spec, sb, Y, Th, -Th)
            Ye = Y - Th
            S = sb * spec.f(Ye)
            record_state(N, rec, paths, T, S, Ye, np.zeros(n), cash, None, mu)
            return {"V": cash, "S": S, "Y": Ye, "esc": np.array([esc]), "records": rec, **_tally_out(tally)}
        # sde scheme on the reduced coordinates
        S = np.full(n, s0)
        Ye = np.full(n, float(y0))
        Th = target(0.0, S, Ye)
        for k in range(N):
            t = k * dt
            esc += int(_outside(sol, S, Ye).sum())
            Y = Ye + Th
            hY = h.h(Y)
            lam_e = spec.lam_of(Ye)
            mu_k = lam_e * hY if cfg.compensate_drift else mu
            a, b = _sde_coefficients(D, spec, h, sigma, mu_k, t, S, Ye, Th)
            dW = sq * Z[:, k]
            record_state(k, rec, paths, t, S, Ye, Th, V, dW, mu_k)
            if integrand:
                _tally(tally, spec, h, S, Ye, Th, dt)
            rF = spec.rel_F_increment(Ye, Th)
            rf = spec.rel_f_increment(Ye, Th)
            V = V - hY * S * rf * dt + S * rF * (mu_k * dt + sigma * dW)
            S = S * (1.0 + (mu_k - lam_e * hY) * dt + sigma * dW)
            Th = Th + a * dt + b * dW
            Ye = Ye - hY * dt
        record_state(N, rec, paths, T, S, Ye, np.zeros(n), V, None, mu)
        return {"V": V, "S": S, "Y": Ye, "esc": np.array([esc]), "records": rec, **_tally_out(tally)}

    out = _run_chunks(chunk, cfg)
    escapes = float(out["esc"].sum()) / (cfg.n_paths * N)
    if escapes > cfg.max_escape_fraction:
        raise HullEscapeError(f"{100 * escapes:.2f}% of path-steps left the solution grid")
    if escapes > 0:
        logger.warning("%.3f%% of path-steps left the grid and were clamped", 100 * escapes)
    records = [_finish_record(r, sol, spec, h, sigma, dt, N) for r in out["records"]]
    return out, escapes, records


def _tally(tally, spec, h, S, Ye, Th, dt):
    val = _bs_integrand(spec, h, S, Ye, Th)
    tally["neg"] += int((val < 0).sum())
    tally["pos"] += int((val > 0).sum())
    tally["zero"] += int((val == 0).sum())
    # the wealth correction weighs the integrand by the held delta
    tally["integral"] += val * spec.rel_F_increment(Ye, Th) * dt


def _tally_out(tally):
    return {k: (v if k == "integral" else np.array([v])) for k, v in tally.items()}


def _bs_integrand(spec: ImpactSpec, h: ResilienceSpec, S, Ye, Th):
    """``S h(Y) (rel f-increment / rel F-increment - lambda(Y_eff))`` with its zero limit at ``Th = 0``."""
    rF = spec.rel_F_increment(Ye, Th)
    rf = spec.rel_f_increment(Ye, Th)
    small = np.abs(Th) < 1e-12
    ratio = np.where(small, 0.0, rf / np.where(small, 1.0, rF))
    val = S * h.h(Ye + Th) * (ratio - spec.lam_of(Ye))
    return np.where(small, 0.0, val)


def _sde_coefficients(D, spec, h, sigma, mu, t, S, Ye, Th):
    """Drift and volatility of the holdings ``Theta = F^-1(f w_S + F) - Y_eff``."""
    w_s = D("w_s", t, S, Ye)
    w_ss = D("w_ss", t, S, Ye)
    w_sss = D("w_sss", t, S, Ye)
    w_sy = D("w_sy", t, S, Ye)
    w_ts = D("w_ts", t, S, Ye)
    f = spec.f(Ye)
    lam = spec.lam_of(Ye)
    X = Ye + Th
    fX = spec.f(X)
    hY = h.h(X)
    dws_drift = w_ts + w_ss * S * (mu - lam * hY) - hY * w_sy + 0.5 * sigma**2 * S * S * w_sss
    b = sigma * S * f * w_ss / fX
    a = hY + (f * dws_drift - hY * f * (lam * w_s + 1.0)) / fX - 0.5 * spec.lam_of(X) * b * b
    return a, b


def _finish_record(r, sol, spec, h, sigma, dt, N) -> PathRecord:
    t = np.asarray(r["t"])
    S = np.asarray(r["S"])
    Y = np.asarray(r["Y"])
    th = np.asarray(r["th"])
    V = np.asarray(r["V"])
    dW = np.asarray(r["dW"])
    mu = np.asarray(r["mu"], dtype=float)
    D = _Derivs(sol)
    phi_t = D("w_t", t, S, Y)
    phi_s = D("w_s", t, S, Y)
    phi_ss = D("w_ss", t, S, Y)
    phi_y = D("w_y", t, S, Y)
    steps = np.full(N + 1, dt)
    steps[-1] = 0.0
    # model increment of V_liq - phi, written in the original (unrearranged) form
    hY = h.h(Y + th)
    rF = spec.rel_F_increment(Y, th)
    rf = spec.rel_f_increment(Y, th)
    dV = -hY * S * rf * steps + S * rF * (mu * steps + sigma * dW)
    lam = spec.lam_of(Y)
    dphi = (
        phi_t - lam * hY * S * phi_s - hY * phi_y + 0.5 * sigma**2 * S * S * phi_ss + mu * S * phi_s
    ) * steps + sigma * S * phi_s * dW
    return PathRecord(
        path=r["path"], t=t, S_eff=S, Y_eff=Y, theta=th, V_liq=V, dW=dW, dt=steps, mu=mu,
        phi_t=phi_t, phi_s=phi_s, phi_ss=phi_ss, phi_y=phi_y, increment=dV - dphi,
        spec=spec, h=h, sigma=sigma,
    )


def path_wealth_decomposition(record: PathRecord):
    """Split the per-step increment of ``V_liq - phi`` into diffusion, drift and source parts.

    Returns three arrays whose sum equals ``record.increment`` up to rounding.
    """
    spec, h, sigma = record.spec, record.h, record.sigma
    S, Y, th, dt = record.S_eff, record.Y_eff, record.theta, record.dt
    hY = h.h(Y + th)
    gap = S * (spec.rel_F_increment(Y, th) - record.phi_s)
    diffusion = gap * sigma * record.dW
    drift = gap * (record.mu - spec.lam_of(Y) * hY) * dt + (
        -record.phi_t - 0.5 * sigma**2 * S * S * record.phi_ss + hY * record.phi_y
    ) * dt
    source = mathfrak_F(spec, h, S, Y, th) * dt
    return diffusion, drift, source


def _solution_target(sol: PdeSolution):
    def target(t, S, Ye):
        return theta_star(sol, t, S, Ye, clamp=True)

    return target


def simulate_replication(
    sol: PdeSolution,
    spec: ImpactSpec,
    h: ResilienceSpec,
    params: MarketParams,
    payoff: Payoff,
    cfg: SimConfig,
) -> HedgeReport:
    """Hedge ``payoff`` from capital ``w(0, s0, y0) + epsilon`` and test superreplication pathwise.

    At maturity the remaining holdings are unwound in one block and the
    liquidation wealth is compared with ``H`` at the terminal effective state.
    """
    if sol.is_1d:
        raise ConfigError("replication needs a solution over (s, y)")
    if abs(sol.grid.T - sol.t_saved[-1]) > 1e-12 or sol.t_saved[0] != 0.0:
        raise ConfigError("solution must cover [0, T]")
    s0 = params.s_bar0 * float(spec.f(params.y0))
    price = float(sol.price(0.0, s0, params.y0))
    out, escapes, records = _simulate(sol, spec, h, params, _solution_target(sol), price, cfg)
    H = solve_H_batch(payoff, spec, out["S"], out["Y"])
    return _summarise(out["V"], H, cfg, price, escapes, {"solver": sol.solver}, records)


@dataclass
class IntegrandStats:
    """Sign statistics of the Black-Scholes-strategy correction integrand over path-steps.

    ``integral_mean`` averages the pathwise wealth correction, i.e. the
    integrand weighted by the relative liquidation value
    ``(F(Y) - F(Y_eff)) / f(Y_eff)`` of the position; ``V_T`` is approximately
    ``H(S_T)`` minus that integral.
    """

    negative_fraction: float
    positive_fraction: float
    zero_fraction: float
    integral_mean: float
    integral_std: float

    def to_dict(self) -> dict:
        return asdict(self)


def simulate_bs_strategy(
    v_bs: PdeSolution,
    spec: ImpactSpec,
    h: ResilienceSpec,
    params: MarketParams,
    payoff: Payoff,
    cfg: SimConfig,
):
    """Large trader following the frictionless delta mapped through ``F^-1``.

    Starts from capital ``v_bs(0, S_0-) + epsilon``.  Returns the hedge report
    (with ``H`` the cash payoff at the terminal price) and the sign statistics
    of the correction integrand.
    """
    if not v_bs.is_1d:
        raise ConfigError("the frictionless solution must be one-dimensional in s")
    if not payoff.cash_settled:
        raise ConfigError("the Black-Scholes strategy experiment needs a cash-settled payoff")
    if np.any(v_bs.field("w_s")[:, 1:-1] < -1e-10):
        logger.warning("frictionless delta is negative somewhere; holdings may turn negative")

    def target(t, S, Ye):
        delta = v_bs.interp("w_s", t, S, clamp=True)
        return spec.rel_F_increment_inv(Ye, delta)

    s0 = params.s_bar0 * float(spec.f(params.y0))
    price = float(v_bs.price(0.0, s0))
    out, escapes, records = _simulate(v_bs, spec, h, params, target, price, cfg, integrand=True)
    H = payoff.g0(out["S"])
    total = cfg.n_paths * cfg.n_steps
    stats = IntegrandStats(
        negative_fraction=float(out["neg"].sum()) / total,
        positive_fraction=float(out["pos"].sum()) / total,
        zero_fraction=float(out["zero"].sum()) / total,
        integral_mean=float(out["integral"].mean()),
        integral_std=float(out["integral"].std(ddof=1)) if cfg.n_paths > 1 else 0.0,
    )
    report = _summarise(out["V"], H, cfg, price, escapes, {"integrand": stats.to_dict()}, records)
    return report, stats
