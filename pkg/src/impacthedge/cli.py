"""Command-line entry point ``impacthedge``.

Subcommands: ``price``, ``hedge``, ``facelift``, ``covered``, ``compare``,
``reproduce-paper``.  Any config key can be overridden with ``--key value``
(for instance ``--model.sigma 0.25``).  Exit codes: 0 success, 2 invalid
configuration, 3 solver or simulation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig, load
from .covered import CoveredProblem, solve_covered
from .exceptions import ConfigError, ImpactHedgeError
from .grid import Grid
from .hedging import SimConfig, simulate_bs_strategy, simulate_replication
from .impact import ImpactSpec, MarketParams, ResilienceSpec
from .noncovered import price_diff_report, solve_bs, solve_exponential_constrained, solve_general, solve_permanent
from .payoff import Payoff, delta_floor_slope, facelift_delta, facelift_gamma, terminal_surface

log = logging.getLogger("impacthedge")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


# ---------------------------------------------------------------- solving
def _s0(cfg: RunConfig) -> float:
    """Observed price at the initial state."""
    return cfg.params.s_bar0 * float(cfg.spec.f(cfg.params.y0))


def _solve(cfg: RunConfig):
    spec, grid = cfg.spec, cfg.grid
    if cfg.solver == "bs":
        g1 = Grid(grid.T, grid.Nt, grid.Ns, 3, grid.s_min, grid.s_max)
        return solve_bs(cfg.params.sigma, cfg.payoff.frictionless(g1.s), g1)
    if cfg.solver == "covered":
        return _solve_covered(cfg)
    terminal = terminal_surface(cfg.payoff, spec, grid, strict=True)
    h, params = cfg.resilience, cfg.params
    kappa = cfg.get("model.kappa_short")
    if cfg.solver == "general":
        return solve_general(spec, h, params, terminal, grid)
    if cfg.solver == "exponential":
        return solve_exponential_constrained(spec.lam, kappa, h, params, terminal, grid)
    return solve_permanent(spec, h, params, terminal, grid, kappa_short=kappa)


def _solve_covered(cfg: RunConfig):
    g = cfg.grid
    problem = CoveredProblem(cfg.lambda_y, cfg.payoff.frictionless, cfg.params.sigma, g.T, cfg.gamma_bar,
                             g.s_min, g.s_max, g.Ns)
    return solve_covered(problem, Nt=g.Nt)


def _write_solution(cfg: RunConfig, sol, name: str) -> float:
    out = cfg.out_dir
    s0, y0 = _s0(cfg), cfg.params.y0
    summary = io.solution_summary(sol, [(0.0, s0, y0)])
    if "csv" in cfg.formats:
        io.write_slices(out / f"{name}.csv", sol, (0.0, sol.grid.T), y_fixed=y0)
    if "json" in cfg.formats:
        io.validate(summary, "solution")
        io.write_json(out / f"{name}.json", summary)
    return summary["price_at"][0][3]


# --------------------------------------------------------------- commands
def cmd_price(cfg: RunConfig, args) -> int:
    sol = _solve(cfg)
    w = _write_solution(cfg, sol, "solution")
    print(f"w(0, {_s0(cfg):.6g}, {cfg.params.y0:.6g}) = {w:.10g}   [{sol.solver}]")
    return EXIT_OK


def _hedge(cfg: RunConfig, bs_strategy: bool):
    payoff, params, spec = cfg.payoff, cfg.params, cfg.spec
    if bs_strategy:
        g = cfg.grid
        g1 = Grid(g.T, g.Nt, g.Ns, 3, g.s_min, g.s_max)
        v_bs = solve_bs(params.sigma, payoff.g0(g1.s), g1)
        return simulate_bs_strategy(v_bs, spec, cfg.resilience, params, payoff, cfg.sim)
    if cfg.solver in ("bs", "covered"):
        raise ConfigError(f"{cfg.where('solver.kind')}: hedging needs a solver over (s, y), not {cfg.solver!r}")
    sol = _solve(cfg)
    return simulate_replication(sol, spec, cfg.resilience, params, payoff, cfg.sim), None


def cmd_hedge(cfg: RunConfig, args) -> int:
    report, stats = _hedge(cfg, args.bs_strategy)
    payload = io.hedge_report_dict(report, stats)
    io.validate(payload, "hedge_report")
    io.write_json(cfg.out_dir / "hedge_report.json", payload)
    if report.records:
        io.write_paths(cfg.out_dir / "paths.csv", report)
    print(f"success_fraction = {report.success_fraction:.4f} (se {report.success_se:.4f}) "
          f"over {report.n_paths} paths, {report.n_steps} steps")
    if stats is not None:
        print(f"integrand negative on {stats.negative_fraction:.4f} of path-steps, "
              f"positive on {stats.positive_fraction:.4f}")
    return EXIT_OK


def cmd_facelift(cfg: RunConfig, args) -> int:
    """Terminal data before and after the face-lift (delta for exponential impact, gamma otherwise)."""
    grid, spec = cfg.grid, cfg.spec
    if spec.is_exponential:
        H = terminal_surface(cfg.payoff, spec, grid, strict=True).values
        lam = spec.lam * (1.0 + spec.eta)
        lifted = facelift_delta(H, grid.s, lam, cfg.get("model.kappa_short"))
        ys = grid.y
        note = f"delta face-lift, slope floor {-delta_floor_slope(lam, cfg.get('model.kappa_short')):.6g}"
    else:
        H = cfg.payoff.frictionless(grid.s)[:, None]
        lifted = facelift_gamma(H[:, 0], grid.s, cfg.gamma_bar)[:, None]
        ys = np.array([cfg.params.y0])
        note = f"gamma face-lift, gamma_bar {cfg.gamma_bar:.6g}"
    rows = ((s, y, H[i, j], lifted[i, j]) for i, s in enumerate(grid.s) for j, y in enumerate(ys))
    io.write_csv(cfg.out_dir / "facelift.csv", ("s", "y", "H", "H_lifted"), rows)
    print(f"{note}; max lift {float(np.max(lifted - H)):.6g}")
    return EXIT_OK


def cmd_covered(cfg: RunConfig, args) -> int:
    sol = _solve_covered(cfg)
    w = _write_solution(cfg, sol, "covered")
    print(f"covered v(0, {_s0(cfg):.6g}) = {w:.10g} at lambda_y = {cfg.lambda_y:.6g}, gamma_bar = {cfg.gamma_bar:.6g}")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, args) -> int:
    """Configured solver minus the frictionless baseline on the same s-grid at t = 0."""
    sol = _solve(cfg)
    g = cfg.grid
    base = solve_bs(cfg.params.sigma, cfg.payoff.frictionless(g.s), Grid(g.T, g.Nt, g.Ns, 3, g.s_min, g.s_max))
    rep = price_diff_report(sol, base)
    if rep.y is None:
        rows = ((s, cfg.params.y0, d) for s, d in zip(rep.s, rep.diff))
    else:
        rows = ((s, y, rep.diff[i, j]) for i, s in enumerate(rep.s) for j, y in enumerate(rep.y))
    io.write_csv(cfg.out_dir / "compare.csv", ("s", "y", "diff"), rows)
    io.write_json(cfg.out_dir / "compare.json", {"solver": sol.solver, "baseline": "bs", **rep.summary()})
    print(f"{sol.solver} - bs: min {rep.min:.6g} at {rep.argmin}, max {rep.max:.6g} at {rep.argmax}")
    return EXIT_OK


# ---------------------------------------------------------------- reproduce
def _claim(table, name, ok, detail):
    table.append((name, bool(ok), detail))


def cmd_reproduce(cfg: RunConfig, args) -> int:
    """Arctan-impact study: prices, resilience effect, both hedging experiments."""
    out = cfg.out_dir
    sigma = cfg.params.sigma
    grid = cfg.grid
    spec = ImpactSpec.arctan(0.1)
    payoff = Payoff.physical_call(50.0, 0.5)
    params = MarketParams(sigma=sigma)
    started = time.perf_counter()

    g1 = Grid(grid.T, grid.Nt, grid.Ns, 3, grid.s_min, grid.s_max)
    bs = solve_bs(sigma, payoff.frictionless(g1.s), g1)
    terminal = terminal_surface(payoff, spec, grid, strict=True)
    large = solve_general(spec, ResilienceSpec.linear(1.0), params, terminal, grid)
    large0 = solve_general(spec, ResilienceSpec.zero(), params, terminal, grid)
    exp_terminal = terminal_surface(Payoff.cash_call(50.0), ImpactSpec.exponential(1.0), grid, strict=True)
    exp_demo = solve_exponential_constrained(1.0, 1.0, ResilienceSpec.linear(1.0), params, exp_terminal, grid)

    s, y = grid.s, grid.y
    j0 = int(np.argmin(np.abs(y)))
    p_bs = bs.slice_at(0.0)
    p_large = large.slice_at(0.0)
    p_large0 = large0.slice_at(0.0)
    diff_b = p_bs[:, None] - p_large
    io.write_csv(out / "fig1b.csv", ("s", "y", "p_bs_minus_p_large"),
                 ((s[i], y[j], diff_b[i, j]) for i in range(s.size) for j in range(y.size)))
    io.write_csv(out / "fig1c.csv", ("s", "p_large", "p_bs"), zip(s, p_large[:, j0], p_bs))
    io.write_csv(out / "fig1d.csv", ("s", "p_beta1_minus_p_beta0"), zip(s, p_large[:, j0] - p_large0[:, j0]))
    for name, sol in (("bs", bs), ("large_beta1", large), ("large_beta0", large0), ("exponential_demo", exp_demo)):
        summary = io.solution_summary(sol, [(0.0, 50.0, 0.0)])
        if name == "exponential_demo":
            summary["label"] = "extension: exponential impact, lambda=1, kappa_short=1, cash call K=50"
        io.validate(summary, "solution")
        io.write_json(out / f"{name}.json", summary)

    sim = cfg.sim
    rep_cfg = SimConfig(n_paths=sim.n_paths, n_steps=sim.n_steps, seed=sim.seed, epsilon_capital=0.1,
                        threads=sim.threads)
    replication = simulate_replication(large, spec, ResilienceSpec.linear(1.0), params, payoff, rep_cfg)
    spread = Payoff.bull_spread(40.0, 60.0, 5.0, notional=20.0)
    gb = Grid(grid.T, 2000, 401, 3, grid.s_min, grid.s_max)
    v_spread = solve_bs(sigma, spread.g0(gb.s), gb)
    bs_cfg = SimConfig(n_paths=sim.n_paths, n_steps=2000, seed=sim.seed, threads=sim.threads)
    bs_rep, stats = simulate_bs_strategy(v_spread, spec, ResilienceSpec.linear(1.0),
                                         MarketParams(sigma=sigma, y0=8.0), spread, bs_cfg)
    reports = {"replication": io.hedge_report_dict(replication),
               "bs_strategy": io.hedge_report_dict(bs_rep, stats)}
    for r in reports.values():
        io.validate(r, "hedge_report")
    io.write_json(out / "hedge_report.json", reports)

    band = (s >= 30) & (s <= 80)
    itm = (s >= 50) & (s <= 80)
    table = []
    gap_c = float(np.min(p_large[band, j0] - p_bs[band]))
    _claim(table, "fig1c  p_large >= p_bs - 0.05 on [30, 80]", gap_c >= -0.05, f"min gap {gap_c:+.4g}")
    gap_d = float(np.max(p_large[band, j0] - p_large0[band, j0]))
    _claim(table, "fig1d  p_beta1 <= p_beta0 + 0.05 on [30, 80]", gap_d <= 0.05, f"max gap {gap_d:+.4g}")
    frac_b = float(np.mean(diff_b[itm] <= 0))
    _claim(table, "fig1b  p_bs - p_large <= 0 on most in-the-money nodes", frac_b > 0.5, f"fraction {frac_b:.3f}")
    _claim(table, "hedge  replication success >= 0.97 (eps 0.1)", replication.success_fraction >= 0.97,
           f"{replication.success_fraction:.4f} +- {replication.success_se:.4f}")
    _claim(table, "hedge  BS strategy integrand negative >= 95% (y0 = 8)", stats.negative_fraction >= 0.95,
           f"{stats.negative_fraction:.4f}")
    _claim(table, "hedge  BS strategy success >= 0.95 (eps 0)", bs_rep.success_fraction >= 0.95,
           f"{bs_rep.success_fraction:.4f} +- {bs_rep.success_se:.4f}")
    width = max(len(n) for n, _, _ in table)
    for name, ok, detail in table:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    print(f"exponential demo (extension): w(0, 50, 0) = {float(exp_demo.price(0.0, 50.0, 0.0)):.6g}")
    print(f"artifacts in {out}  ({time.perf_counter() - started:.1f} s)")
    return EXIT_OK


COMMANDS = {
    "price": cmd_price,
    "hedge": cmd_hedge,
    "facelift": cmd_facelift,
    "covered": cmd_covered,
    "compare": cmd_compare,
    "reproduce-paper": cmd_reproduce,
}


# ------------------------------------------------------------------- main
def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="impacthedge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, help="Monte Carlo seed (overrides sim.seed)")
        sp.add_argument("--threads", type=int, help="worker threads (overrides sim.threads)")
        sp.add_argument("--bs-strategy", action="store_true", help="hedge with the frictionless delta")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def _overrides(extra):
    """``--key value`` / ``--key=value`` pairs left over by argparse."""
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"{tok} needs a value")
            value = extra[i + 1]
            i += 2
        out[key] = value
    return out


def main(argv=None) -> int:
    args, extra = _parser().parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        over = _overrides(extra)
        if args.out is not None:
            over["output.dir"] = args.out
        if args.seed is not None:
            over["sim.seed"] = str(args.seed)
        if args.threads is not None:
            over["sim.threads"] = str(args.threads)
        if args.command == "reproduce-paper":
            over.setdefault("model.sigma", "0.3")
        cfg = load(args.config, over)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ImpactHedgeError, ValueError) as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
