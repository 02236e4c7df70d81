"""Command-line runner: ``decolab simulate|timescales|convergence|cutoff-temp``.

Every command reads a scenario file (or the name of a bundled scenario),
computes in units where the field frequency is 1, converts back to the
scenario's units, and writes plot-ready CSV plus a plain-text report and a
``key = value`` file. Exit codes: 0 success, 2 config error, 3 truncation or
validity error, 4 degenerate model or fit.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .born import FieldMoments, born_series
from .config import ScenarioConfig, load
from .dynamics import Trajectory, simulate
from .errors import ConfigError, DecolabError, DegenerateModel, NoCrossing
from .spectral import cutoff_temperature, timescale_report

SCHEMA_VERSION = 1
SCHMIDT_TOL = 1e-10
DRIFT_TOL = 1e-8
SLOPE_RANGE = (3.5, 4.5)

EXACT_COLUMNS = ("t", "E1", "delta1", "delta2", "re_mean_a", "im_mean_a", "norm", "N_tot")
BORN_COLUMNS = ("t", "E1_order2", "delta1_order2", "delta2_order2")
RESIDUAL_COLUMNS = ("t", "E1", "delta1", "delta2")


# -- formatting -------------------------------------------------------------------------


def fmt(x: float) -> str:
    """17 significant digits; INF / -INF / NAN spelled out."""
    x = float(x)
    if math.isnan(x):
        return "NAN"
    if math.isinf(x):
        return "INF" if x > 0 else "-INF"
    return "%.17g" % x


def write_csv(path: Path, columns: Sequence[str], data: Sequence[np.ndarray]) -> None:
    rows = np.column_stack([np.asarray(c, dtype=float) for c in data])
    lines = [",".join(columns)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return header, data


def write_kv(path: Path, items: dict) -> None:
    lines = []
    for key, value in items.items():
        if isinstance(value, bool):
            value = "PASS" if value else "FAIL"
        elif isinstance(value, (float, np.floating, int)) and not isinstance(value, str):
            value = fmt(value)
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_kv(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


@dataclass
class RunManifest:
    command: str
    scenario: str
    scenario_hash: str
    version: str = __version__
    schema_version: int = SCHEMA_VERSION
    wall_clock_s: float = 0.0
    files: list[str] = field(default_factory=list)
    verdicts: dict[str, object] = field(default_factory=dict)
    extra: dict[str, object] = field(default_factory=dict)

    def write(self, out: Path) -> None:
        self.files = sorted(set(self.files) | {"manifest.json"})
        (out / "manifest.json").write_text(json.dumps(self.__dict__, indent=2, default=str) + "\n",
                                           encoding="utf-8", newline="\n")


# -- simulate ---------------------------------------------------------------------------


@dataclass
class Comparison:
    """Exact trajectory and the order-2 predictions, in the scenario's units."""

    times: np.ndarray
    trajectory: Trajectory
    e1_born: np.ndarray
    delta1_born: np.ndarray
    delta2_born: np.ndarray
    time_unit: float
    energy_unit: float

    @property
    def residuals(self) -> dict[str, np.ndarray]:
        tr = self.trajectory
        return {
            "E1": tr.E1 * self.energy_unit - self.e1_born,
            "delta1": tr.delta1 - self.delta1_born,
            "delta2": tr.delta2 - self.delta2_born,
        }


def run_comparison(cfg: ScenarioConfig, bath=None, workers: Optional[int] = None) -> Comparison:
    """Exact simulation against the order-2 series, both in dimensionless units."""
    if cfg.bath is None:
        raise ConfigError("this command needs a discrete [bath] scenario")
    if cfg.field is None:
        raise ConfigError("this command needs a concrete field state (fock / coherent / even_cat)")
    if cfg.evolution is None:
        raise ConfigError("this command needs an [evolution] section")
    bath = bath if bath is not None else cfg.dimless_bath()
    ev = cfg.dimless_evolution()
    beta = cfg.beta_omega
    tr = simulate(cfg.field, 1.0, bath, beta, ev, cfg.field_dim, cfg.weight_cutoff, workers)
    # moments of the truncated initial ket, so truncation does not leak into the residual
    moments = FieldMoments(tr.mean_n0, tr.mean_a0)
    series = born_series(tr.times, 1.0, bath, beta, moments, "derived")
    p2_0 = 1.0 - tr.delta2[0]
    return Comparison(
        times=tr.times / cfg.omega,
        trajectory=tr,
        e1_born=(tr.E1[0] + series.e1_order1 + series.e1_order2) * cfg.omega,
        delta1_born=tr.delta1[0] + series.delta1_order2,
        delta2_born=tr.delta2[0] + p2_0 * series.delta2_order2,
        time_unit=1.0 / cfg.omega,
        energy_unit=cfg.omega,
    )


def cmd_simulate(cfg: ScenarioConfig, out: Path, args) -> RunManifest:
    cmp = run_comparison(cfg)
    tr = cmp.trajectory
    write_csv(out / "exact.csv", EXACT_COLUMNS, [
        cmp.times, tr.E1 * cfg.omega, tr.delta1, tr.delta2,
        tr.mean_a.real, tr.mean_a.imag, tr.norm, tr.total_excitation,
    ])
    write_csv(out / "born.csv", BORN_COLUMNS, [cmp.times, cmp.e1_born, cmp.delta1_born, cmp.delta2_born])
    res = cmp.residuals
    write_csv(out / "residual.csv", RESIDUAL_COLUMNS, [cmp.times, res["E1"], res["delta1"], res["delta2"]])
    verdicts: dict[str, object] = {
        "norm_drift": tr.norm_drift < DRIFT_TOL,
        "excitation_drift": tr.excitation_drift < DRIFT_TOL,
    }
    if math.isinf(cfg.beta):
        verdicts["schmidt_symmetry"] = float(np.max(np.abs(tr.delta1 - tr.delta2))) < SCHMIDT_TOL
    summary = {
        "max_abs_residual_E1": float(np.max(np.abs(res["E1"]))),
        "max_abs_residual_delta1": float(np.nanmax(np.abs(res["delta1"]))) if np.any(np.isfinite(res["delta1"])) else math.nan,
        "max_abs_residual_delta2": float(np.max(np.abs(res["delta2"]))),
        "max_coupling": float(np.max(cfg.bath.gammas)) if cfg.bath.modes else 0.0,
        "norm_drift": tr.norm_drift,
        "excitation_drift": tr.excitation_drift,
        "ensemble_members": tr.n_members,
    }
    print(f"simulate {cfg.name}: {len(cmp.times)} samples, {tr.n_members} ensemble member(s)")
    for k, v in verdicts.items():
        print(f"  {k}: {'PASS' if v else 'FAIL'}")
    return RunManifest("simulate", cfg.name, cfg.digest, files=["exact.csv", "born.csv", "residual.csv"],
                       verdicts=verdicts, extra=summary)


# -- timescales ------------------------------------------------------------------------


def timescale_items(cfg: ScenarioConfig, margin: float) -> dict:
    """Report entries in the scenario's units (seconds for SI, 1/omega-units otherwise)."""
    if cfg.spectrum is None:
        raise ConfigError("this command needs a continuum [spectrum] scenario")
    w = cfg.omega
    t_window = None if cfg.t_window is None else cfg.t_window * w
    rep = timescale_report(1.0, cfg.beta_omega, cfg.dimless_spectrum(), cfg.moments, margin, t_window)
    unit = 1.0 / w
    items: dict[str, object] = {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.name,
        "units": cfg.units,
        "time_unit": "s" if cfg.units == "SI" else "1/omega-units",
        "omega": w,
        "beta": cfg.beta,
        "nbar_at_omega": rep.nbar,
        "mean_n0": cfg.moments.mean_n0,
        "abs_mean_a0": abs(cfg.moments.mean_a0),
        "regime": rep.regime,
        "tau_dis": rep.tau_dis * unit,
        "tau_th": rep.tau_th * unit,
        "tau_dec": rep.tau_dec * unit,
        "tau_res_dec": rep.tau_res_dec * unit,
        "tau_res_dec_derived": rep.tau_res_dec_derived * unit,
    }
    for key, value in rep.ratios.items():
        items[f"ratio_{key.replace('/', '_over_')}"] = value
    for key, value in rep.closed_forms.items():
        items[f"closed_{key.replace('/', '_over_')}"] = value
    items["ratio_identity_gap"] = rep.identity_gap
    sep = rep.separability
    items.update({
        "margin": margin,
        "period": sep.period * unit,
        "separability_ratio_period": sep.ratio_period,
        "separability_ratio_inverse_omega": sep.ratio_inverse_omega,
        "separability_verdict": sep.passed,
        "zero_T_ratio": rep.zero_T.ratio,
        "zero_T_verdict": rep.zero_T.passed,
    })
    # rates carry units of 1/time
    for key, value in rep.diagnostics.items():
        items[key] = value / unit
    return items


def cmd_timescales(cfg: ScenarioConfig, out: Path, args) -> RunManifest:
    margin = args.margin if args.margin is not None else cfg.margin
    items = timescale_items(cfg, margin)
    write_kv(out / "report.kv", items)
    tu = "s" if cfg.units == "SI" else "1/omega"
    text = [
        f"Timescale report: {cfg.name}",
        f"  regime                 {items['regime']}",
        f"  nbar(omega)            {fmt(items['nbar_at_omega'])}",
        f"  <a^dag a>_0            {fmt(items['mean_n0'])}",
        f"  tau_dis                {fmt(items['tau_dis'])} {tu}",
        f"  tau_th                 {fmt(items['tau_th'])} {tu}",
        f"  tau_dec                {fmt(items['tau_dec'])} {tu}",
        f"  tau_2dec (literature)  {fmt(items['tau_res_dec'])} {tu}",
        f"  tau_2dec (derived)     {fmt(items['tau_res_dec_derived'])} {tu}",
        f"  tau_th / tau_dis       {fmt(items['ratio_th_over_dis'])}",
        f"  tau_dis / tau_dec      {fmt(items['ratio_dis_over_dec'])}",
        f"  tau_th / tau_dec       {fmt(items['ratio_th_over_dec'])}",
        f"  ratio identity gap     {fmt(items['ratio_identity_gap'])}",
        f"  tau_2dec / period      {fmt(items['separability_ratio_period'])} (margin {fmt(margin)})",
        f"  tau_2dec * omega       {fmt(items['separability_ratio_inverse_omega'])}",
        f"  separability           {'PASS' if items['separability_verdict'] else 'FAIL'}",
        f"  zero-T ratio r         {fmt(items['zero_T_ratio'])} "
        f"({'PASS' if items['zero_T_verdict'] else 'FAIL'})",
        f"  rate (window)          {fmt(items['dis_rate_window'])} 1/{tu.split('/')[-1]}",
        f"  rate (full sinc)       {fmt(items['dis_rate_sinc'])} 1/{tu.split('/')[-1]}",
    ]
    (out / "report.txt").write_text("\n".join(text) + "\n", encoding="utf-8", newline="\n")
    print("\n".join(text))
    verdicts = {"separability": items["separability_verdict"], "zero_T": items["zero_T_verdict"]}
    return RunManifest("timescales", cfg.name, cfg.digest, files=["report.kv", "report.txt"], verdicts=verdicts)


# -- convergence -----------------------------------------------------------------------


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    r2: float

    @property
    def passed(self) -> bool:
        return SLOPE_RANGE[0] <= self.slope <= SLOPE_RANGE[1]


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ConfigError("a slope fit needs at least 3 grid points")
    if np.any(x <= 0) or np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise DegenerateModel("degenerate fit: zero coupling or vanishing residual on the grid")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss_tot if ss_tot > 0 else 0.0
    return SlopeFit(float(slope), float(intercept), r2)


def convergence_sweep(cfg: ScenarioConfig, grid: Sequence[float], workers: Optional[int] = None):
    """Max |exact - order-2| residual per observable for each max-coupling value on ``grid``."""
    grid = [float(g) for g in grid]
    if len(grid) < 3:
        raise ConfigError("gamma_grid needs at least 3 points for a slope fit")
    bath = cfg.dimless_bath()
    if bath is None:
        raise ConfigError("convergence needs a discrete [bath] scenario")
    g_max = float(np.max(bath.gammas)) if bath.modes else 0.0
    if g_max == 0.0 or all(g == 0.0 for g in grid):
        raise DegenerateModel("degenerate fit: every coupling is zero")
    rows = {"E1": [], "delta1": [], "delta2": []}
    for g in grid:
        cmp = run_comparison(cfg, bath.scaled(g / cfg.omega / g_max), workers)
        for key, r in cmp.residuals.items():
            rows[key].append(float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else math.nan)
    return grid, rows


def cmd_convergence(cfg: ScenarioConfig, out: Path, args) -> RunManifest:
    grid, rows = convergence_sweep(cfg, cfg.gamma_grid)
    write_csv(out / "convergence.csv", ("gamma", "E1", "delta1", "delta2"),
              [grid, rows["E1"], rows["delta1"], rows["delta2"]])
    items: dict[str, object] = {"schema_version": SCHEMA_VERSION, "scenario": cfg.name}
    verdicts: dict[str, object] = {}
    print(f"convergence {cfg.name}: grid {', '.join(fmt(g) for g in grid)}")
    for key, vals in rows.items():
        if any(math.isnan(v) for v in vals):
            items[f"{key}_verdict"] = "N/A"
            print(f"  {key}: N/A (no order-2 closed form for this state)")
            continue
        fit = fit_loglog(grid, vals)
        items[f"{key}_slope"] = fit.slope
        items[f"{key}_r2"] = fit.r2
        items[f"{key}_verdict"] = fit.passed
        verdicts[key] = fit.passed
        print(f"  {key}: slope {fit.slope:.4f}, R^2 {fit.r2:.6f} -> {'PASS' if fit.passed else 'FAIL'}")
    write_kv(out / "report.kv", items)
    return RunManifest("convergence", cfg.name, cfg.digest, files=["convergence.csv", "report.kv"],
                       verdicts=verdicts)


# -- cutoff temperature -----------------------------------------------------------------


def cmd_cutoff(cfg: ScenarioConfig, out: Path, args) -> RunManifest:
    if cfg.spectrum is None:
        raise ConfigError("cutoff-temp needs a continuum [spectrum] scenario")
    margin = args.margin if args.margin is not None else cfg.margin
    w = cfg.omega
    items: dict[str, object] = {"schema_version": SCHEMA_VERSION, "scenario": cfg.name, "margin": margin,
                                "temperature_unit": "K" if cfg.units == "SI" else "hbar*omega/k_B"}
    to_temp = (lambda b_dimless: _kelvin(b_dimless / w)) if cfg.units == "SI" else (lambda b: 1.0 / b)
    try:
        res = cutoff_temperature(1.0, cfg.dimless_spectrum(), cfg.moments, margin)
    except NoCrossing as exc:
        items["crossings"] = 0
        items["uniform_verdict"] = exc.verdict
        verdict = exc.verdict
        print(f"cutoff-temp {cfg.name}: no crossing; uniform verdict {'PASS' if verdict else 'FAIL'}")
    else:
        items["crossings"] = len(res.crossings)
        # the highest-temperature crossing bounds the passing region from above
        best = min(res.crossings, key=lambda c: c.beta)
        for i, c in enumerate(res.crossings):
            items[f"crossing_{i}_beta"] = c.beta / w
            items[f"crossing_{i}_temperature"] = to_temp(c.beta)
            items[f"crossing_{i}_passing_side"] = "above" if c.passes_above_T else "below"
        items["cutoff_beta"] = best.beta / w
        items["cutoff_temperature"] = to_temp(best.beta)
        items["cutoff_passing_side"] = "above" if best.passes_above_T else "below"
        items["zero_T_verdict"] = res.zero_T_passes
        verdict = True
        print(f"cutoff-temp {cfg.name}: {len(res.crossings)} crossing(s)")
        for c in res.crossings:
            mark = "  <- cutoff" if c is best else ""
            side = "passes above" if c.passes_above_T else "passes below"
            print(f"  T* = {to_temp(c.beta):.6g} {items['temperature_unit']} ({side}){mark}")
    write_kv(out / "report.kv", items)
    return RunManifest("cutoff-temp", cfg.name, cfg.digest, files=["report.kv"], verdicts={"cutoff": verdict})


def _kelvin(beta_seconds: float) -> float:
    from scipy import constants

    return constants.hbar / (constants.k * beta_seconds)


# -- entry point -----------------------------------------------------------------------

COMMANDS = {
    "simulate": cmd_simulate,
    "timescales": cmd_timescales,
    "convergence": cmd_convergence,
    "cutoff-temp": cmd_cutoff,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="decolab", description="Field-mode decoherence in a bosonic reservoir.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="scenario file or bundled scenario name")
        sp.add_argument("--out", default=None, help="output directory (default: ./out/<scenario>/<command>)")
        sp.add_argument("--margin", type=float, default=None, help="separability margin")
        sp.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        cfg = load(args.config, args.override)
        out = Path(args.out) if args.out else Path("out") / cfg.name / args.command
        out.mkdir(parents=True, exist_ok=True)
        manifest = COMMANDS[args.command](cfg, out, args)
    except DecolabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    manifest.wall_clock_s = time.perf_counter() - start
    manifest.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
