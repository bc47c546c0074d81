"""Run configuration: flat ``dotted.key = value`` text files with command-line overrides.

Example::

    # arctan impact, physical call
    model.impact = arctan
    model.c = 0.1
    model.beta = 1.0
    model.sigma = 0.3
    payoff.kind = physical_call
    payoff.strike = 50
    payoff.smooth_width = 0.5
    solver.kind = general

Blank lines and ``#`` comments are ignored.  Every key must be one of
:data:`KEYS`; ``model.sigma`` is the only key without a default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .covered import default_gamma_bar
from .exceptions import ConfigError
from .grid import Grid
from .hedging import SimConfig
from .impact import ImpactSpec, MarketParams, ResilienceSpec
from .payoff import Payoff

SOLVERS = ("general", "exponential", "permanent", "covered", "bs")
IMPACTS = ("arctan", "exponential")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _choice(options):
    def conv(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t

    return conv


# key -> (converter, default); a default of ``None`` with ``float`` means required
KEYS = {
    "model.impact": (_choice(IMPACTS), "arctan"),
    "model.c": (float, 0.1),
    "model.lambda": (float, 1.0),
    "model.eta": (float, 0.0),
    "model.beta": (float, 1.0),
    "model.sigma": (float, None),
    "model.mu": (float, 0.0),
    "model.y0": (float, 0.0),
    "model.s0": (float, 50.0),
    "model.kappa_short": (float, 1.0),
    "payoff.kind": (_choice(("cash_call", "physical_call", "cash_put", "bull_spread", "zero")), "physical_call"),
    "payoff.strike": (float, 50.0),
    "payoff.strike2": (float, 0.0),
    "payoff.smooth_width": (float, 0.0),
    "payoff.notional": (float, 1.0),
    "grid.T": (float, 0.5),
    "grid.Nt": (int, 2000),
    "grid.Ns": (int, 201),
    "grid.Ny": (int, 81),
    "grid.s_min": (float, 0.0),
    "grid.s_max": (float, 200.0),
    "grid.y_min": (float, -20.0),
    "grid.y_max": (float, 20.0),
    "solver.kind": (_choice(SOLVERS), "general"),
    "solver.lambda_y": (_opt_float, None),
    "solver.gamma_bar": (_opt_float, None),
    "sim.n_paths": (int, 10_000),
    "sim.n_steps": (int, 500),
    "sim.seed": (int, 0),
    "sim.epsilon": (float, 0.0),
    "sim.scheme": (_choice(("feedback", "sde")), "feedback"),
    "sim.threads": (int, 1),
    "sim.record_paths": (int, 0),
    "sim.compensate_drift": (_bool, False),
    "output.dir": (str, "out"),
    "output.formats": (str, "csv,json"),
}
REQUIRED = tuple(k for k, (conv, default) in KEYS.items() if default is None and conv is float)


@dataclass
class RunConfig:
    """Validated experiment description."""

    values: dict
    origin: dict = field(default_factory=dict)

    def where(self, key: str) -> str:
        return self.origin.get(key, "default")

    def get(self, key: str):
        return self.values[key]

    # typed views -----------------------------------------------------
    @property
    def spec(self) -> ImpactSpec:
        v = self.values
        if v["model.impact"] == "exponential":
            return ImpactSpec.exponential(v["model.lambda"], v["model.eta"])
        return ImpactSpec.arctan(v["model.c"], v["model.eta"])

    @property
    def resilience(self) -> ResilienceSpec:
        return ResilienceSpec.linear(self.values["model.beta"])

    @property
    def params(self) -> MarketParams:
        v = self.values
        return MarketParams(sigma=v["model.sigma"], mu=v["model.mu"], s_bar0=v["model.s0"], y0=v["model.y0"])

    @property
    def payoff(self) -> Payoff:
        v = self.values
        return Payoff(v["payoff.kind"], v["payoff.strike"], v["payoff.strike2"], v["payoff.smooth_width"],
                      v["payoff.notional"])

    @property
    def grid(self) -> Grid:
        v = self.values
        return Grid(**{k: v[f"grid.{k}"] for k in ("T", "Nt", "Ns", "Ny", "s_min", "s_max", "y_min", "y_max")})

    @property
    def sim(self) -> SimConfig:
        v = self.values
        return SimConfig(
            n_paths=v["sim.n_paths"],
            n_steps=v["sim.n_steps"],
            seed=v["sim.seed"],
            epsilon_capital=v["sim.epsilon"],
            scheme=v["sim.scheme"],
            threads=v["sim.threads"],
            record_paths=v["sim.record_paths"],
            compensate_drift=v["sim.compensate_drift"],
        )

    @property
    def solver(self) -> str:
        return self.values["solver.kind"]

    @property
    def lambda_y(self) -> float:
        lam = self.values["solver.lambda_y"]
        return float(self.spec.lam_of(self.values["model.y0"])) if lam is None else lam

    @property
    def gamma_bar(self) -> float:
        gb = self.values["solver.gamma_bar"]
        return default_gamma_bar(self.lambda_y) if gb is None else gb

    @property
    def out_dir(self) -> Path:
        return Path(self.values["output.dir"])

    @property
    def formats(self) -> set:
        return {f.strip() for f in self.values["output.formats"].split(",") if f.strip()}


def parse_text(text: str, source: str = "<config>") -> dict:
    """Raw ``key -> (value_text, 'source:line')`` mapping."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{where}: duplicate key {key!r} (first set at {out[key][1]})")
        out[key] = (value, where)
    return out


def build(raw: dict) -> RunConfig:
    """Convert and cross-validate raw entries (``key -> (text, where)``)."""
    values, origin = {}, {}
    for key, (conv, default) in KEYS.items():
        if key in raw:
            text, where = raw[key]
            try:
                values[key] = conv(text)
            except ValueError as exc:
                raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
            origin[key] = where
        elif default is None and key in REQUIRED:
            raise ConfigError(f"missing required key {key}")
        else:
            values[key] = default
    cfg = RunConfig(values, origin)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    v = cfg.values
    impact, solver = v["model.impact"], v["solver.kind"]
    if solver == "exponential" and impact != "exponential":
        raise ConfigError(
            f"{cfg.where('solver.kind')}: solver 'exponential' requires model.impact = exponential "
            f"(model.impact is {impact!r} at {cfg.where('model.impact')})"
        )
    if solver == "general" and impact != "arctan":
        raise ConfigError(
            f"{cfg.where('solver.kind')}: solver 'general' requires model.impact = arctan "
            f"(use 'exponential' or 'permanent' for exponential impact)"
        )
    if solver == "exponential" and v["model.eta"] != 0:
        raise ConfigError(f"{cfg.where('model.eta')}: solver 'exponential' is transient only; use 'permanent'")
    if solver == "general" and v["model.eta"] != 0:
        raise ConfigError(f"{cfg.where('model.eta')}: solver 'general' is transient only; use 'permanent'")
    fmts = cfg.formats - {"csv", "json"}
    if fmts:
        raise ConfigError(f"{cfg.where('output.formats')}: unknown formats {sorted(fmts)}")
    # delegate range checks to the model objects, reporting the offending section
    for section, build_obj in (
        ("model", lambda: (cfg.spec, cfg.resilience, cfg.params)),
        ("payoff", lambda: cfg.payoff),
        ("grid", lambda: cfg.grid),
        ("sim", lambda: cfg.sim),
    ):
        try:
            build_obj()
        except (ValueError, ConfigError) as exc:
            keys = [k for k in v if k.startswith(section + ".") and k in cfg.origin]
            where = ", ".join(cfg.origin[k] for k in keys) or "defaults"
            raise ConfigError(f"invalid {section} settings ({where}): {exc}") from None
    if solver == "covered" and cfg.lambda_y * cfg.gamma_bar >= 1:
        raise ConfigError(
            f"{cfg.where('solver.gamma_bar')}: lambda_y * gamma_bar = {cfg.lambda_y * cfg.gamma_bar:.4g} must be < 1"
        )


def load(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Read ``path`` (if any), apply ``overrides`` (``key -> text``) and validate."""
    raw = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        raw = parse_text(text, str(p))
    for key, text in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"--{key}: unknown key")
        raw[key] = (str(text), f"--{key}")
    return build(raw)
