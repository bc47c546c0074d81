"""Artifact export: CSV slices, per-path CSV, JSON summaries; all writes are atomic."""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .grid import PdeSolution
from .hedging import HedgeReport

SLICE_HEADER = ("t", "s", "y", "w")
PATH_HEADER = ("path", "step", "t", "S_eff", "Y_eff", "theta", "V_liq")


def fmt(x) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> Path:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (int, np.integer)) else fmt(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, payload: dict) -> Path:
    return atomic_write_text(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def slice_rows(sol: PdeSolution, times: Iterable[float], y_fixed: float = 0.0):
    """Rows ``(t, s, y, w)`` of fixed-t slices; one-dimensional solutions use ``y = y_fixed``."""
    for t in times:
        w = sol.slice_at(t)
        if sol.is_1d:
            for s, v in zip(sol.s, w):
                yield (t, s, y_fixed, v)
        else:
            for i, s in enumerate(sol.s):
                for j, y in enumerate(sol.y):
                    yield (t, s, y, w[i, j])


def write_slices(path, sol: PdeSolution, times: Optional[Iterable[float]] = None, y_fixed: float = 0.0) -> Path:
    if times is None:
        times = (0.0,)
    return write_csv(path, SLICE_HEADER, slice_rows(sol, times, y_fixed))


def solution_summary(sol: PdeSolution, points) -> dict:
    """JSON-ready summary ``{price_at, solver, grid, diagnostics}``; ``points`` are (t, s, y) triples."""
    price_at = []
    for t, s, y in points:
        w = sol.price(t, s) if sol.is_1d else sol.price(t, s, y)
        price_at.append([float(t), float(s), float(y), float(w)])
    # wall-clock fields are left out so repeated runs give identical files
    diag = {
        k: v
        for k, v in sol.meta.items()
        if isinstance(v, (int, float, str, np.integer, np.floating)) and not k.startswith("runtime")
    }
    if sol.constraint_mask is not None:
        diag["constrained_nodes_t0"] = int(sol.constraint_mask[0].sum())
    return {"price_at": price_at, "solver": sol.solver, "grid": sol.grid.to_dict(), "diagnostics": diag}


def hedge_report_dict(report: HedgeReport, integrand_stats=None) -> dict:
    out = report.to_dict()
    if integrand_stats is not None:
        out["integrand"] = integrand_stats.to_dict()
    return out


def write_paths(path, report: HedgeReport) -> Path:
    def rows():
        for r in report.records:
            for k in range(r.t.size):
                yield (int(r.path), k, r.t[k], r.S_eff[k], r.Y_eff[k], r.theta[k], r.V_liq[k])

    return write_csv(path, PATH_HEADER, rows())


def load_schema(name: str) -> dict:
    """Bundled JSON schema: ``"solution"`` or ``"hedge_report"``."""
    text = resources.files("impacthedge").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(payload: dict, name: str) -> None:
    import jsonschema

    jsonschema.validate(_jsonable(payload), load_schema(name))
