"""Command-line driver: declarative runs producing CSV tables and JSON sidecars.

Usage::

    qra <kind> [--config FILE] [--preset figN] [--out PATH] [--threads N] [--seed S]
    qra list-presets
    qra <kind> --preset figN --emit-config      # print the resolved config

Kinds: rate-table, fpt-pdf, mfpt-scan, crossing, residence, mc-validate.
The config file is a flat TOML document (see :class:`RunConfig` for keys);
a JSON sidecar written by a previous run is accepted as well.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 incomplete absorption.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import re
import sys
import warnings
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import tomli

from . import __version__
from .analysis import (
    COMBINED,
    DRIVE_BIAS,
    DRIVE_TUNNELING,
    NOISE_RATE,
    SWEEPS,
    RootNotFoundError,
    ScanError,
    crossing_rate_approx,
    crossing_rate_exact,
    log_grid,
    scan_mfpt,
)
from .bath import BathParams, RegimeWarning
from .dynamics import (
    ConvergenceError,
    DrivingSetup,
    IncompleteAbsorptionError,
    UnnormalizedPdfError,
    analytic_survival_dichotomous,
    fpt_pdf,
    mfpt_analytic,
    phase_averaged_pdf,
    residence_time_pdf,
)
from .mc_oracle import mc_survival
from .modulation import (
    DichotomousTunneling,
    PeriodicBias,
    PeriodicTunneling,
    StaticTunneling,
    ZeroBias,
)
from .quadrature import QuadratureConfig, QuadratureError
from .rates import BACKWARD, FORWARD, IMPROVED, STATIONARY, NumericalRegimeError, RateFunction

__all__ = ["RunConfig", "ConfigError", "KINDS", "PRESETS", "list_presets", "preset_config",
           "parse_config", "emit_config", "run", "main"]

KINDS = ("rate-table", "fpt-pdf", "mfpt-scan", "crossing", "residence", "mc-validate")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INCOMPLETE = 0, 2, 3, 4
CURVE_PARAMETERS = ("", "alpha", "noise_rate", "noise_amplitude", "drive_amplitude", "drive_frequency",
                    "bias_amplitude", "bias_frequency", "phase")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Resolved run configuration. Defaults are the standard bath
    (alpha=0.7, omega_c=10, T=0.2) with an undriven, unbiased system.

    ``curve_parameter``/``curve_values`` repeat the run for several values of
    one parameter, producing one column (or column group) per value.
    """

    kind: str = "fpt-pdf"
    # bath
    alpha: float = 0.7
    omega_c: float = 10.0
    temperature: float = 0.2
    # modulation
    tunneling: str = "static"  # static | periodic | dichotomous
    drive_amplitude: float = 0.0
    drive_frequency: float = 0.1
    noise_amplitude: float = 0.0
    noise_rate: float = 0.3
    bias: str = "zero"  # zero | periodic
    bias_amplitude: float = 0.0
    bias_frequency: float = 0.1
    phase: float = 0.0
    # what to compute
    modes: Tuple[str, ...] = ("stationary",)
    curve_parameter: str = ""
    curve_values: Tuple[float, ...] = ()
    phase_average: bool = False
    n_phases: int = 40
    t_max: float = 0.0  # 0: automatic
    t_points: int = 4001
    sweep: str = NOISE_RATE
    grid_min: float = 1e-4
    grid_max: float = 1e3
    grid_points: int = 40
    numeric: bool = False
    amplitudes: Tuple[float, ...] = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)
    n_paths: int = 5000
    probe_times: Tuple[float, ...] = (10.0, 50.0, 100.0)
    seed: int = 0
    n_entrance: int = 128
    # tolerances
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    tail_cut: float = 1e-12
    ode_rtol: float = 1e-8
    ode_atol: float = 1e-12
    survival_floor: float = 1e-10
    t_cap: float = 1e6
    samples_per_period: int = 512

    # -- derived objects ----------------------------------------------------
    def bath_params(self) -> BathParams:
        return BathParams(self.alpha, self.omega_c, self.temperature)

    def quad(self) -> QuadratureConfig:
        return QuadratureConfig(self.abs_tol, self.rel_tol, self.tail_cut)

    def tunneling_mod(self):
        if self.tunneling == "static":
            return StaticTunneling()
        if self.tunneling == "periodic":
            return PeriodicTunneling(self.drive_amplitude, self.drive_frequency, self.phase)
        return DichotomousTunneling(self.noise_amplitude, self.noise_rate)

    def bias_mod(self):
        if self.bias == "zero":
            return ZeroBias()
        return PeriodicBias(self.bias_amplitude, self.bias_frequency, self.phase)

    def setup(self, mode: Optional[str] = None) -> DrivingSetup:
        return DrivingSetup(self.tunneling_mod(), self.bias_mod(), self.bath_params(),
                            mode or self.modes[0], self.quad(), self.samples_per_period)

    def solve_kw(self) -> dict:
        return dict(survival_floor=self.survival_floor, rtol=self.ode_rtol, atol=self.ode_atol, t_cap=self.t_cap)

    def curves(self) -> List[Tuple[str, "RunConfig"]]:
        if not self.curve_parameter:
            return [("", self)]
        return [(f"{self.curve_parameter}={v:g}", replace(self, **{self.curve_parameter: v}))
                for v in self.curve_values]

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


_FIELDS = {f.name: f for f in fields(RunConfig)}
_DEFAULTS = RunConfig()


def _key_lines(text: str) -> Dict[str, int]:
    lines = {}
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*([A-Za-z0-9_\-]+)\s*=", line)
        if m and m.group(1) not in lines:
            lines[m.group(1)] = i
    return lines


def _coerce(name, value, where):
    default = getattr(_DEFAULTS, name)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: '{name}' must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: '{name}' must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: '{name}' must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: '{name}' must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: '{name}' must be a list")
        if name == "modes":
            if not all(isinstance(v, str) for v in value):
                raise ConfigError(f"{where}: '{name}' must list strings")
            return tuple(value)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where}: '{name}' must list numbers")
        return tuple(float(v) for v in value)
    raise ConfigError(f"{where}: unsupported field '{name}'")


def config_from_mapping(data: dict, base: RunConfig = _DEFAULTS, lines: Optional[Dict[str, int]] = None,
                        source: str = "config") -> RunConfig:
    """Strictly merge a flat mapping into ``base``; unknown keys are rejected."""
    lines = lines or {}
    updates = {}
    for key, value in data.items():
        where = f"{source}, line {lines[key]}" if key in lines else source
        if isinstance(value, dict):
            raise ConfigError(f"{where}: tables are not allowed ('{key}'); the config is flat")
        if key not in _FIELDS:
            raise ConfigError(f"{where}: unknown key '{key}'")
        updates[key] = _coerce(key, value, where)
    cfg = replace(base, **updates)
    validate(cfg, lines, source)
    return cfg


def parse_config(text: str, base: RunConfig = _DEFAULTS, source: str = "config") -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return config_from_mapping(data, base, _key_lines(text), source)


def validate(cfg: RunConfig, lines: Optional[Dict[str, int]] = None, source: str = "config") -> None:
    lines = lines or {}

    def fail(key, msg):
        where = f"{source}, line {lines[key]}" if key in lines else source
        raise ConfigError(f"{where}: field '{key}': {msg}")

    if cfg.kind not in KINDS:
        fail("kind", f"must be one of {KINDS}")
    if cfg.tunneling not in ("static", "periodic", "dichotomous"):
        fail("tunneling", "must be static, periodic or dichotomous")
    if cfg.bias not in ("zero", "periodic"):
        fail("bias", "must be zero or periodic")
    if not cfg.modes or any(m not in (STATIONARY, IMPROVED) for m in cfg.modes):
        fail("modes", "must list 'stationary' and/or 'improved'")
    if cfg.curve_parameter not in CURVE_PARAMETERS:
        fail("curve_parameter", f"must be one of {CURVE_PARAMETERS[1:]} or empty")
    if cfg.curve_parameter and not cfg.curve_values:
        fail("curve_values", "needs at least one value")
    if cfg.sweep not in SWEEPS:
        fail("sweep", f"must be one of {SWEEPS}")
    if not 0 < cfg.grid_min < cfg.grid_max:
        fail("grid_min", "need 0 < grid_min < grid_max")
    for key in ("grid_points", "t_points", "n_phases", "n_paths", "samples_per_period", "n_entrance"):
        if getattr(cfg, key) < 2:
            fail(key, "must be at least 2")
    if not cfg.t_cap > 0:
        fail("t_cap", "must be positive")
    if not 0 < cfg.survival_floor < 1:
        fail("survival_floor", "must lie in (0, 1)")
    if cfg.t_max < 0:
        fail("t_max", "must be non-negative (0 selects automatically)")
    if any(t <= 0 for t in cfg.probe_times):
        fail("probe_times", "must be positive")
    if cfg.kind == "mc-validate" and cfg.tunneling != "dichotomous":
        fail("tunneling", "mc-validate needs dichotomous tunneling")
    if cfg.kind == "residence" and cfg.tunneling == "dichotomous":
        fail("tunneling", "residence times need deterministic driving")
    # every curve must build valid physics objects
    for label, c in cfg.curves():
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RegimeWarning)
                c.bath_params()
                c.quad()
                c.tunneling_mod()
                c.bias_mod()
                c.setup()
        except (ValueError, TypeError) as exc:
            key = cfg.curve_parameter or _guess_field(str(exc))
            fail(key, f"{exc}" + (f" ({label})" if label else ""))


def _guess_field(msg: str) -> str:
    for key in ("alpha", "omega_c", "temperature", "drive_amplitude", "drive_frequency", "noise_amplitude",
                "noise_rate", "bias_amplitude", "bias_frequency", "abs_tol", "rel_tol", "tail_cut"):
        if key.split("_")[0] in msg.lower():
            return key
    return "config"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v) or math.isnan(v):
            raise ValueError("non-finite values cannot be emitted")
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v).__name__}")


def emit_config(cfg: RunConfig) -> str:
    """Flat TOML document that parses back to ``cfg``."""
    return "".join(f"{k} = {_toml_value(v)}\n" for k, v in cfg.to_dict().items())


# ---------------------------------------------------------------------------
# presets

_PI = math.pi
_PRESET_DATA = {
    "fig2": ("FPT pdf for telegraph noise on the tunneling element (Delta=0.3), nu in {0.02, 0.3}; "
             "improved and stationary rates",
             dict(kind="fpt-pdf", tunneling="dichotomous", noise_amplitude=0.3, modes=["improved", "stationary"],
                  curve_parameter="noise_rate", curve_values=[0.02, 0.3])),
    "fig3": ("MFPT vs Poisson rate nu for telegraph noise, Delta in {0.1, 0.2, 0.3}, zero bias (closed form)",
             dict(kind="mfpt-scan", tunneling="dichotomous", sweep=NOISE_RATE, grid_min=1e-4, grid_max=1e3,
                  grid_points=40, curve_parameter="noise_amplitude", curve_values=[0.1, 0.2, 0.3])),
    "fig4": ("Crossing Poisson rate nu* vs noise amplitude: approximate formula and exact root "
             "(produced by the 'crossing' kind)",
             dict(kind="crossing", tunneling="dichotomous")),
    "fig5": ("MFPT vs nu for Delta=0.2 and coupling alpha in {0.6, 0.7, 0.8}",
             dict(kind="mfpt-scan", tunneling="dichotomous", noise_amplitude=0.2, sweep=NOISE_RATE,
                  grid_min=1e-4, grid_max=1e3, grid_points=40, curve_parameter="alpha",
                  curve_values=[0.6, 0.7, 0.8])),
    "fig6": ("FPT pdf for periodic tunneling A_d=0.3, Omega_d=0.1 at three initial phases",
             dict(kind="fpt-pdf", tunneling="periodic", drive_amplitude=0.3, drive_frequency=0.1,
                  modes=["improved", "stationary"], curve_parameter="phase", curve_values=[0.0, _PI / 2, _PI])),
    "fig7": ("Phase-averaged MFPT vs Omega_d for periodic tunneling, A_d in {0.1, 0.2, 0.3}",
             dict(kind="mfpt-scan", tunneling="periodic", sweep=DRIVE_TUNNELING, grid_min=1e-3, grid_max=10.0,
                  grid_points=20, curve_parameter="drive_amplitude", curve_values=[0.1, 0.2, 0.3])),
    "fig8": ("Phase-averaged MFPT vs Omega_d for A_d=0.2 and alpha in {0.6, 0.7, 0.8}",
             dict(kind="mfpt-scan", tunneling="periodic", drive_amplitude=0.2, sweep=DRIVE_TUNNELING,
                  grid_min=1e-3, grid_max=10.0, grid_points=20, curve_parameter="alpha",
                  curve_values=[0.6, 0.7, 0.8])),
    "fig9": ("Residence-time pdf r(t) vs FPT pdf at phase 0 and phase-averaged, A_d=0.3, Omega_d=0.1",
             dict(kind="residence", tunneling="periodic", drive_amplitude=0.3, drive_frequency=0.1)),
    "fig10": ("FPT pdf for periodic bias A_eps=0.3, Omega_eps=0.1 at three initial phases",
              dict(kind="fpt-pdf", bias="periodic", bias_amplitude=0.3, bias_frequency=0.1,
                   modes=["improved", "stationary"], curve_parameter="phase", curve_values=[0.0, _PI / 2, _PI])),
    "fig11": ("Phase-averaged MFPT vs Omega_eps for periodic bias, A_eps in {0.1, 0.2, 0.3}",
              dict(kind="mfpt-scan", bias="periodic", sweep=DRIVE_BIAS, grid_min=1e-3, grid_max=10.0,
                   grid_points=20, curve_parameter="bias_amplitude", curve_values=[0.1, 0.2, 0.3])),
    "fig12": ("FPT pdf for periodic bias (A_eps=0.3, Omega_eps=0.1, phase 0) plus telegraph noise Delta=0.3, "
              "nu in {0.02, 0.3}",
              dict(kind="fpt-pdf", tunneling="dichotomous", noise_amplitude=0.3, bias="periodic",
                   bias_amplitude=0.3, bias_frequency=0.1, modes=["improved", "stationary"],
                   curve_parameter="noise_rate", curve_values=[0.02, 0.3])),
    "fig13": ("Phase-averaged MFPT vs nu for telegraph noise Delta=0.2 with periodic bias A_eps=0.3, "
              "Omega_eps in {0.25, 10}, and the noise-only curve",
              dict(kind="mfpt-scan", tunneling="dichotomous", noise_amplitude=0.2, bias="periodic",
                   bias_amplitude=0.3, sweep=COMBINED, grid_min=1e-3, grid_max=1e3, grid_points=20,
                   curve_parameter="bias_frequency", curve_values=[0.25, 10.0])),
}
PRESETS = tuple(_PRESET_DATA)


def list_presets() -> Dict[str, dict]:
    """Catalog ``name -> {"kind", "summary"}`` of the figure presets."""
    return {name: {"kind": d["kind"], "summary": s} for name, (s, d) in _PRESET_DATA.items()}


def preset_config(name: str) -> RunConfig:
    if name not in _PRESET_DATA:
        raise ConfigError(f"unknown preset '{name}'; available: {', '.join(PRESETS)}")
    return config_from_mapping(_PRESET_DATA[name][1], source=f"preset {name}")


# ---------------------------------------------------------------------------
# runs


@dataclass
class Table:
    columns: List[Tuple[str, str, np.ndarray]] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    pdf_columns: List[str] = field(default_factory=list)

    def add(self, name, unit, values, pdf=False):
        self.columns.append((name, unit, np.asarray(values, dtype=float)))
        if pdf:
            self.pdf_columns.append(name)

    def to_csv(self, meta: Dict[str, str]) -> str:
        buf = io.StringIO()
        for k, v in meta.items():
            buf.write(f"# {k}: {v}\n")
        buf.write(",".join(f"{n} [{u}]" if u else n for n, u, _ in self.columns) + "\n")
        n_rows = len(self.columns[0][2])
        for i in range(n_rows):
            cells = []
            for _, _, col in self.columns:
                v = col[i]
                cells.append("" if not np.isfinite(v) else f"{v:.12e}")
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def _pdf_values(pdf, t):
    """Density on ``t`` with the exponential tail beyond the integrated range."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    inside = t <= pdf.t_end
    out[inside] = pdf.density(t[inside])
    lam = pdf.tail_rate
    out[~inside] = pdf.p_end * lam * np.exp(-lam * (t[~inside] - pdf.t_end))
    return out


def _survival_time(pdf, level=1e-7):
    """Time after which less than ``level`` probability remains."""
    t = np.linspace(0.0, pdf.t_end, 20001)
    idx = np.flatnonzero(pdf.remaining(t) < level)
    return float(t[idx[0]]) if idx.size else pdf.t_end


def _time_grid(cfg: RunConfig, t_max: float) -> np.ndarray:
    uniform = np.linspace(0.0, t_max, cfg.t_points)
    short = np.geomspace(1e-3, min(5.0, t_max), 200)
    return np.unique(np.concatenate([uniform, short]))


def _pdf_diagnostics(table: Table, t: np.ndarray, pdfs: dict) -> dict:
    diag = {}
    for name, pdf in pdfs.items():
        col = next(c for n, _, c in table.columns if n == name)
        diag[name] = {
            "normalization_defect": float(pdf.normalization_defect),
            "emitted_trapezoid_integral": float(np.trapezoid(col, t)),
            "min_value": float(col.min()),
            "mfpt": float(pdf.moments.get(1, math.nan)),
        }
    return diag


def _run_fpt_pdf(cfg: RunConfig, workers: int) -> Table:
    pdfs = {}
    for label, c in cfg.curves():
        suffix = f"_{label}" if label else ""
        for mode in c.modes:
            setup = c.setup(mode)
            pdfs[f"g{suffix}_{mode}"] = fpt_pdf(setup.solve(**c.solve_kw()))
        if c.phase_average and setup.frequency is not None:
            avg, _, _ = phase_averaged_pdf(c.setup(STATIONARY), c.n_phases, workers, with_grid=True, **c.solve_kw())
            pdfs[f"g{suffix}_phase_average"] = avg
    t_max = cfg.t_max or max(_survival_time(p) for p in pdfs.values())
    t = _time_grid(cfg, t_max)
    table = Table()
    table.add("t", "1/Delta0", t)
    for name, pdf in pdfs.items():
        table.add(name, "Delta0", _pdf_values(pdf, t), pdf=True)
    table.diagnostics["pdf"] = _pdf_diagnostics(table, t, pdfs)
    return table


def _run_rate_table(cfg: RunConfig, workers: int) -> Table:
    first = cfg.curves()[0][1]
    period = first.setup().period
    t_max = cfg.t_max or (2 * period if period else 100.0)
    t = np.linspace(0.0, t_max, cfg.t_points)
    table = Table()
    table.add("t", "1/Delta0", t)
    clamps = {}
    for label, c in cfg.curves():
        suffix = f"_{label}" if label else ""
        tun, bias = c.tunneling_mod(), c.bias_mod()
        for mode in c.modes:
            if isinstance(tun, DichotomousTunneling):
                specs = [("W0", FORWARD, 0), ("W1", FORWARD, 1)]
            else:
                specs = [("W_forward", FORWARD, None), ("W_backward", BACKWARD, None)]
            for name, direction, comp in specs:
                rate = RateFunction(tun, bias, c.bath_params(), direction, mode, c.quad(), comp)
                values, errors = rate.evaluate(t)
                col = f"{name}{suffix}_{mode}"
                table.add(col, "Delta0", values)
                clamps[col] = {"negative_clamps": rate.negative_clamps, "max_quadrature_error": float(np.max(errors))}
    table.diagnostics["rates"] = clamps
    return table


def _run_mfpt_scan(cfg: RunConfig, workers: int) -> Table:
    grid = log_grid(cfg.grid_min, cfg.grid_max, cfg.grid_points)
    table = Table()
    var_name = {NOISE_RATE: "nu", COMBINED: "nu", DRIVE_TUNNELING: "omega_d", DRIVE_BIAS: "omega_eps"}[cfg.sweep]
    table.add(var_name, "Delta0", grid)
    scans = {}
    for label, c in cfg.curves():
        suffix = f"_{label}" if label else ""
        bias_amp = c.bias_amplitude if c.bias == "periodic" else 0.0
        res = scan_mfpt(
            c.sweep, grid, bath=c.bath_params(), noise_amplitude=c.noise_amplitude if c.tunneling == "dichotomous" else 0.0,
            noise_rate=c.noise_rate, drive_amplitude=c.drive_amplitude, bias_amplitude=bias_amp,
            bias_frequency=c.bias_frequency, n_phases=c.n_phases, mode=c.modes[0], cfg=c.quad(),
            numeric=c.numeric, workers=workers,
        )
        table.add(f"t1{suffix}", "1/Delta0", res.mfpt)
        for ref, value in res.references.items():
            table.add(f"{ref}{suffix}", "1/Delta0", np.full(grid.shape, value))
        if c.sweep == COMBINED:
            noise_only = [mfpt_analytic(x, c.noise_amplitude, c.bath_params(), c.quad()) for x in grid]
            table.add(f"noise_only{suffix}", "1/Delta0", noise_only)
        scans[f"t1{suffix}"] = {
            "failures": [{"index": i, "value": float(grid[i]), "error": m} for i, m in res.failures],
            "max_normalization_defect": max((d.get("normalization_defect", 0.0) for d in res.diagnostics), default=0.0),
            "method": sorted({d["method"] for d in res.diagnostics}),
        }
    table.diagnostics["scan"] = scans
    return table


def _run_crossing(cfg: RunConfig, workers: int) -> Table:
    amps = np.asarray(cfg.amplitudes, dtype=float)
    table = Table()
    table.add("delta", "Delta0", amps)
    for label, c in cfg.curves():
        suffix = f"_{label}" if label else ""
        bath, q = c.bath_params(), c.quad()
        exact = [crossing_rate_exact(a, bath, cfg=q) if a > 0 else math.nan for a in amps]
        approx = [crossing_rate_approx(a, bath, q) for a in amps]
        table.add(f"nu_star_exact{suffix}", "Delta0", exact)
        table.add(f"nu_star_approx{suffix}", "Delta0", approx)
    return table


def _run_residence(cfg: RunConfig, workers: int) -> Table:
    pdfs = {}
    for label, c in cfg.curves():
        suffix = f"_{label}" if label else ""
        setup = c.setup(STATIONARY)
        pdfs[f"r{suffix}"] = residence_time_pdf(setup, n_entrance=c.n_entrance, workers=workers, **c.solve_kw())
        pdfs[f"g_phase0{suffix}"] = fpt_pdf(replace(c, phase=0.0).setup(STATIONARY).solve(**c.solve_kw()))
        avg, _, _ = phase_averaged_pdf(setup, c.n_phases, workers, **c.solve_kw())
        pdfs[f"g_phase_average{suffix}"] = avg
    t_max = cfg.t_max or max(_survival_time(p) for p in pdfs.values())
    t = _time_grid(cfg, t_max)
    table = Table()
    table.add("t", "1/Delta0", t)
    for name, pdf in pdfs.items():
        table.add(name, "Delta0", _pdf_values(pdf, t), pdf=True)
    table.diagnostics["pdf"] = _pdf_diagnostics(table, t, pdfs)
    return table


def _run_mc_validate(cfg: RunConfig, workers: int) -> Table:
    times = np.asarray(cfg.probe_times, dtype=float)
    table = Table()
    table.add("t", "1/Delta0", times)
    summary = {}
    for label, c in cfg.curves():
        suffix = f"_{label}" if label else ""
        mod = c.tunneling_mod()
        mc = mc_survival(mod, times, c.n_paths, c.seed, c.bias_mod(), c.bath_params(), c.quad(), workers)
        if c.bias == "zero":
            p_ref, comp = analytic_survival_dichotomous(mod.rate, mod.amplitude, c.bath_params(), times, c.quad())
            y_ref = comp.correlation(times)
        else:
            trace = c.setup(STATIONARY).solve(**c.solve_kw())
            state = trace.state(np.minimum(times, trace.t_end))
            p_ref, y_ref = state[0], state[1]
        z_p = (mc.p_mean - p_ref) / mc.p_stderr
        z_y = (mc.y_mean - y_ref) / mc.y_stderr
        table.add(f"P_mc{suffix}", "", mc.p_mean)
        table.add(f"P_stderr{suffix}", "", mc.p_stderr)
        table.add(f"P_ref{suffix}", "", p_ref)
        table.add(f"z_P{suffix}", "", z_p)
        table.add(f"y_mc{suffix}", "", mc.y_mean)
        table.add(f"y_stderr{suffix}", "", mc.y_stderr)
        table.add(f"y_ref{suffix}", "", y_ref)
        table.add(f"z_y{suffix}", "", z_y)
        summary[label or "run"] = {"within_3_stderr": bool(np.all(np.abs(z_p) < 3) and np.all(np.abs(z_y) < 3)),
                                   "method": mc.method}
    table.diagnostics["mc"] = summary
    return table


_RUNNERS = {
    "rate-table": _run_rate_table,
    "fpt-pdf": _run_fpt_pdf,
    "mfpt-scan": _run_mfpt_scan,
    "crossing": _run_crossing,
    "residence": _run_residence,
    "mc-validate": _run_mc_validate,
}


@dataclass
class RunOutcome:
    status: int
    csv_path: Optional[Path]
    sidecar_path: Optional[Path]
    table: Optional[Table] = None
    error: Optional[str] = None


def _sidecar(cfg: RunConfig, preset: Optional[str], extra: dict) -> dict:
    return {
        "package": "qra",
        "version": __version__,
        "preset": preset,
        "config": cfg.to_dict(),
        "tolerances": {k: getattr(cfg, k) for k in ("abs_tol", "rel_tol", "tail_cut", "ode_rtol", "ode_atol",
                                                     "survival_floor", "t_cap")},
        **extra,
    }


def run(cfg: RunConfig, out: Optional[Path] = None, workers: int = 1, preset: Optional[str] = None) -> RunOutcome:
    """Execute one run and write ``<out>.csv`` plus ``<out>.json``."""
    out = Path(out) if out else Path(f"{preset or cfg.kind}.csv")
    if out.suffix != ".csv":
        out = out.with_suffix(".csv")
    sidecar = out.with_suffix(".json")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            table = _RUNNERS[cfg.kind](cfg, workers)
        status, error = EXIT_OK, None
    except IncompleteAbsorptionError as exc:
        status, error, table = EXIT_INCOMPLETE, f"incomplete absorption: {exc} (residual {exc.residual:.3e})", None
    except (QuadratureError, NumericalRegimeError, ScanError, ConvergenceError, UnnormalizedPdfError,
            RootNotFoundError, ArithmeticError, RuntimeError, ValueError) as exc:
        status, error, table = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}", None
    if status != EXIT_OK:
        out.parent.mkdir(parents=True, exist_ok=True)
        sidecar.write_text(json.dumps(_sidecar(cfg, preset, {"status": "failed", "exit_code": status,
                                                            "error": error}), indent=2, sort_keys=True) + "\n")
        return RunOutcome(status, None, sidecar, None, error)

    meta = {"qra": f"{cfg.kind} (version {__version__})", "preset": preset or "-",
            "bath": f"alpha={cfg.alpha!r} omega_c={cfg.omega_c!r} T={cfg.temperature!r}",
            "units": "Delta0 = hbar = k_B = 1", "sidecar": sidecar.name}
    text = table.to_csv(meta)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    info = {
        "status": "ok",
        "exit_code": 0,
        "csv": out.name,
        "csv_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "columns": [f"{n} [{u}]" if u else n for n, u, _ in table.columns],
        "pdf_columns": table.pdf_columns,
        "diagnostics": table.diagnostics,
        "warnings": sorted({str(w.message) for w in caught}),
    }
    sidecar.write_text(json.dumps(_sidecar(cfg, preset, info), indent=2, sort_keys=True, default=float) + "\n")
    return RunOutcome(EXIT_OK, out, sidecar, table)


def _load_config_file(path: Path, base: RunConfig) -> RunConfig:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]
        return config_from_mapping(data, base, source=str(path))
    return parse_config(text, base, source=str(path))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qra", description="Resonant activation in the dissipative two-state system.")
    p.add_argument("kind", choices=KINDS + ("list-presets",))
    p.add_argument("--config", type=Path, help="flat TOML run configuration (or a JSON sidecar)")
    p.add_argument("--preset", help="start from a figure preset (see list-presets)")
    p.add_argument("--out", type=Path, help="output CSV path; the JSON sidecar is written next to it")
    p.add_argument("--threads", type=int, default=1, help="maximum worker threads")
    p.add_argument("--seed", type=int, help="override the Monte Carlo seed")
    p.add_argument("--emit-config", action="store_true", help="print the resolved config as TOML and exit")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.kind == "list-presets":
        for name, entry in list_presets().items():
            print(f"{name:6s} {entry['kind']:12s} {entry['summary']}")
        return EXIT_OK
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg = replace(_DEFAULTS, kind=args.kind)
        if args.preset:
            cfg = preset_config(args.preset)
            if cfg.kind != args.kind:
                raise ConfigError(f"preset {args.preset} is a '{cfg.kind}' run; use: qra {cfg.kind} --preset {args.preset}")
        if args.config:
            cfg = _load_config_file(args.config, cfg)
            if cfg.kind != args.kind:
                raise ConfigError(f"{args.config}: config kind '{cfg.kind}' does not match '{args.kind}'")
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if not args.preset and not args.config:
            raise ConfigError("give --config and/or --preset")
    except ConfigError as exc:
        print(f"qra: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.emit_config:
        sys.stdout.write(emit_config(cfg))
        return EXIT_OK
    outcome = run(cfg, args.out, args.threads, args.preset)
    if outcome.status != EXIT_OK:
        print(f"qra: {outcome.error}", file=sys.stderr)
        print(outcome.sidecar_path.read_text(), file=sys.stderr)
    else:
        print(f"wrote {outcome.csv_path} and {outcome.sidecar_path}")
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
