"""Command-line harness: config parsing, experiment dispatch, CSV/JSON emission.

Commands: simulate | strong-error | path-error | poc | density | phase |
validate-model.  Configuration is a flat-key YAML (or JSON) document; flags
mirror keys one-to-one and override file values.  Every run writes one CSV and
one metadata sidecar (``<out>.meta.json``) echoing the full effective config,
so a sidecar can be fed back through ``--config`` to reproduce the CSV
byte-for-byte.  Environment-variable overrides are deliberately not supported.

Exit codes: 0 success, 2 configuration error, 3 diverged cells (results still
written), 4 implicit-solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np
import yaml

from . import __version__
from .errors import ConfigurationError, MVSDEError, SolverError
from .harness import (ErrorTable, export_density, export_phase_means,
                      path_strong_error, poc_error, strong_error)
from .models import BUILTIN_NAMES, get_model, max_stepsize, spot_check
from .newton import NewtonConfig
from .noise import NoisePlan
from .schemes import SchemeParams, simulate

CSV_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_SOLVER = 4

# key -> (type, default); None default means "required if the command uses it"
_KEYS = {
    "command": (str, None),
    "model": (str, None),
    "scheme": (str, "ssm"),
    "n_particles": (int, 100),
    "m_steps": (int, 100),
    "horizon": (float, 1.0),
    "seed": (int, 0),
    "threads": (int, 1),
    "x0": (str, "normal:0,1"),
    "record": (str, "terminal"),
    "h": (float, None),
    "h_list": (list, None),
    "h_proxy": (float, None),
    "n_list": (list, None),
    "n_proxy": (int, None),
    "times": (list, None),
    "bins": (int, 50),
    "taming_alpha": (float, None),
    "newton_max_iter": (int, 25),
    "newton_jacobian": (str, "full"),
    "newton_tol_mode": (str, "sqrt-h"),
    "newton_abs_tol": (float, 1e-10),
    "force": (bool, False),
    "out": (str, "mvsde_out.csv"),
}

_JACOBIAN_ALIASES = {"full": "full", "drop-gamma": "drop_gamma", "fd": "finite_difference"}
_TOL_ALIASES = {"sqrt-h": "paper_sqrt_h", "abs": "absolute"}


@dataclasses.dataclass
class RunConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key)


def parse_x0(spec: str):
    """Parse ``normal:mean,var[;mean,var...]`` into (mean, var) pairs."""
    if not spec.startswith("normal:"):
        raise ConfigurationError(f"unsupported initial distribution {spec!r}")
    pairs = []
    for part in spec[len("normal:"):].split(";"):
        bits = part.split(",")
        if len(bits) != 2:
            raise ConfigurationError(f"malformed initial distribution {spec!r}")
        mean, var = float(bits[0]), float(bits[1])
        if var < 0:
            raise ConfigurationError("initial variance must be >= 0")
        pairs.append((mean, var))
    return tuple(pairs)


def _coerce(key, value):
    typ, _ = _KEYS[key]
    if value is None:
        return None
    if typ is list:
        if isinstance(value, str):
            value = [v for v in value.split(",") if v]
        return [float(v) for v in value]
    if typ is bool and isinstance(value, str):
        return value.lower() in ("1", "true", "yes")
    return typ(value)


def parse_config(path: str | None, flag_values: dict) -> RunConfig:
    """Merge config file and flags (flags win); validate keys and constraints."""
    merged = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigurationError(f"config file {path} is not a mapping")
        if "config" in doc and "csv_schema_version" in doc:
            doc = doc["config"]  # metadata sidecar round-trip
        for key, value in doc.items():
            if key not in _KEYS:
                raise ConfigurationError(f"unknown config key {key!r}")
            merged[key] = _coerce(key, value)
    for key, value in flag_values.items():
        if value is None:
            continue
        if key not in _KEYS:
            raise ConfigurationError(f"unknown config key {key!r}")
        merged[key] = _coerce(key, value)
    for key, (_, default) in _KEYS.items():
        merged.setdefault(key, default)
    cfg = RunConfig(merged)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    cmd = cfg.command
    if cmd is None:
        raise ConfigurationError("no command given")
    if cfg.model is None:
        raise ConfigurationError("missing required key 'model'")
    model = get_model(cfg.model)
    parse_x0(cfg.x0)
    if cfg.scheme not in ("ssm", "taming", "euler"):
        raise ConfigurationError(f"unknown scheme {cfg.scheme!r}")
    if cfg.newton_jacobian not in _JACOBIAN_ALIASES:
        raise ConfigurationError(f"unknown newton_jacobian {cfg.newton_jacobian!r}")
    if cfg.newton_tol_mode not in _TOL_ALIASES:
        raise ConfigurationError(f"unknown newton_tol_mode {cfg.newton_tol_mode!r}")

    if cmd in ("strong-error", "path-error"):
        if cfg.h_list is None or cfg.h_proxy is None:
            raise ConfigurationError(f"{cmd} requires h_list and h_proxy")
        if cfg.h_proxy > min(cfg.h_list):
            raise ConfigurationError("h_proxy must not exceed min(h_list)")
        for h in cfg.h_list:
            ratio = h / cfg.h_proxy
            if abs(round(ratio) - ratio) > 1e-9 * max(ratio, 1.0):
                raise ConfigurationError(
                    f"h={h} is not an integer multiple of h_proxy={cfg.h_proxy}"
                )
        hs = list(cfg.h_list)
    elif cmd == "poc":
        if cfg.n_list is None or cfg.n_proxy is None or cfg.h is None:
            raise ConfigurationError("poc requires n_list, n_proxy and h")
        if max(cfg.n_list) > cfg.n_proxy:
            raise ConfigurationError("every N in n_list must be <= n_proxy")
        hs = [cfg.h]
    elif cmd in ("simulate", "density", "phase"):
        hs = [cfg.horizon / cfg.m_steps]
        if cmd == "density" and cfg.times is None:
            raise ConfigurationError("density requires times")
    else:
        hs = []

    if cfg.scheme == "ssm" and not cfg.force:
        h_max = max_stepsize(model.constants)
        for h in hs:
            if not h < h_max:
                raise ConfigurationError(
                    f"SSM step size h={h} not below max_stepsize={h_max}; "
                    "pass --force to override"
                )


def newton_config(cfg: RunConfig) -> NewtonConfig:
    return NewtonConfig(
        tol_mode=_TOL_ALIASES[cfg.newton_tol_mode],
        abs_tol=cfg.newton_abs_tol,
        max_iter=cfg.newton_max_iter,
        jacobian_mode=_JACOBIAN_ALIASES[cfg.newton_jacobian],
        enforce_stepsize=not cfg.force,
    )


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: str, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_sidecar(path: str, cfg: RunConfig, extra: dict):
    meta = {
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "library_version": __version__,
        "config": cfg.values,
    }
    meta.update(extra)
    with open(path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _table_extra(table: ErrorTable) -> dict:
    return {
        "metric": table.metric,
        "fitted_slope": None if np.isnan(table.fitted_slope) else table.fitted_slope,
        "fit_intercept": None if np.isnan(table.fit_intercept) else table.fit_intercept,
        "r_squared": None if np.isnan(table.r_squared) else table.r_squared,
        "excluded": table.excluded,
        "newton_stats": table.newton_stats,
        "cell_runtimes_s": {repr(r.parameter): r.runtime_s for r in table.rows},
        "diverged_cells": sum(1 for r in table.rows if r.diverged),
    }


def dispatch(cfg: RunConfig) -> int:
    """Run the selected harness operation; returns the process exit code."""
    model = get_model(cfg.model)
    ncfg = newton_config(cfg)
    x0 = parse_x0(cfg.x0)
    out = cfg.out
    cmd = cfg.command
    t0 = time.perf_counter()

    if cmd in ("strong-error", "path-error"):
        fn = path_strong_error if cmd == "path-error" else strong_error
        table = fn(model, cfg.scheme, cfg.h_list, cfg.h_proxy, cfg.n_particles,
                   cfg.horizon, cfg.seed, x0=x0, newton_cfg=ncfg,
                   taming_alpha=cfg.taming_alpha, threads=cfg.threads)
        rows = [(cfg.scheme, cfg.model, r.parameter, r.error, int(r.diverged),
                 r.n_samples, cfg.seed) for r in table.rows]
        _write_csv(out, ["scheme", "model", "h", "error", "diverged",
                         "n_particles", "seed"], rows)
        _write_sidecar(out, cfg, {**_table_extra(table),
                                  "total_runtime_s": time.perf_counter() - t0})
        return EXIT_DIVERGED if any(r.diverged for r in table.rows) else EXIT_OK

    if cmd == "poc":
        table = poc_error(model, cfg.scheme, [int(n) for n in cfg.n_list],
                          cfg.n_proxy, cfg.h, cfg.horizon, cfg.seed, x0=x0,
                          newton_cfg=ncfg, taming_alpha=cfg.taming_alpha,
                          threads=cfg.threads)
        rows = [(cfg.scheme, cfg.model, int(r.parameter), r.error,
                 int(r.diverged), cfg.h, cfg.seed) for r in table.rows]
        _write_csv(out, ["scheme", "model", "n", "error", "diverged", "h", "seed"], rows)
        _write_sidecar(out, cfg, {**_table_extra(table),
                                  "total_runtime_s": time.perf_counter() - t0})
        return EXIT_DIVERGED if any(r.diverged for r in table.rows) else EXIT_OK

    p = SchemeParams(T=cfg.horizon, M=cfg.m_steps, N=cfg.n_particles,
                     scheme=cfg.scheme, seed=cfg.seed, taming_alpha=cfg.taming_alpha)
    plan = NoisePlan(cfg.seed, cfg.n_particles, model.l, p.h, cfg.m_steps)

    if cmd == "simulate":
        record, thin = cfg.record, 1
        if record.startswith("thin="):
            record, thin = "thinned", int(cfg.record.split("=", 1)[1])
        elif record == "path":
            record = "full_path"
        run = simulate(model, p, plan, x0=x0, record=record, thin=thin, newton_cfg=ncfg)
        header = ["t", "particle"] + [f"x{c}" for c in range(model.d)]
        rows = []
        if run.path is not None:
            for k, t in enumerate(run.times):
                for j in range(cfg.n_particles):
                    rows.append((t, j, *run.path[k, j]))
        else:
            for j in range(cfg.n_particles):
                rows.append((run.times[-1], j, *run.terminal[j]))
        _write_csv(out, header, rows)
        _write_sidecar(out, cfg, {
            "diverged": run.diverged, "failed_step": run.failed_step,
            "newton_stats": run.newton_stats,
            "total_runtime_s": time.perf_counter() - t0,
        })
        return EXIT_DIVERGED if run.diverged else EXIT_OK

    if cmd == "density":
        table = export_density(model, cfg.scheme, p, plan, cfg.times,
                               bins=cfg.bins, x0=x0, newton_cfg=ncfg)
        rows = []
        for t, e_t, m_t in zip(table.times, table.edges, table.masses):
            for c in range(model.d):
                for left, right, mass in zip(e_t[c][:-1], e_t[c][1:], m_t[c]):
                    rows.append((t, c, left, right, mass))
        _write_csv(out, ["time", "coordinate", "bin_left", "bin_right", "mass"], rows)
        _write_sidecar(out, cfg, {"total_runtime_s": time.perf_counter() - t0})
        return EXIT_OK

    if cmd == "phase":
        times, means = export_phase_means(model, cfg.scheme, p, plan, x0=x0,
                                          newton_cfg=ncfg)
        rows = [(t, mu[0], mu[1]) for t, mu in zip(times, means)]
        _write_csv(out, ["t", "mean_x1", "mean_x2"], rows)
        _write_sidecar(out, cfg, {"total_runtime_s": time.perf_counter() - t0})
        return EXIT_OK

    if cmd == "validate-model":
        issues = spot_check(model, warn=False)
        for msg in issues:
            print(f"warning: {msg}")
        print(f"model {cfg.model!r}: {len(issues)} issue(s) found")
        return EXIT_OK

    raise ConfigurationError(f"unknown command {cmd!r}")


def _add_common(sub):
    sub.add_argument("--config", default=None)
    sub.add_argument("--out", default=None)
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--threads", type=int, default=None)
    sub.add_argument("--force", action="store_const", const=True, default=None)
    sub.add_argument("--model", default=None,
                     help=f"model name; built-ins: {', '.join(BUILTIN_NAMES)}")
    sub.add_argument("--scheme", default=None, choices=["ssm", "taming", "euler"])
    sub.add_argument("--N", dest="n_particles", type=int, default=None)
    sub.add_argument("--T", dest="horizon", type=float, default=None)
    sub.add_argument("--x0", default=None)
    sub.add_argument("--taming-alpha", dest="taming_alpha", type=float, default=None)
    sub.add_argument("--newton-max-iter", dest="newton_max_iter", type=int, default=None)
    sub.add_argument("--newton-jacobian", dest="newton_jacobian", default=None,
                     choices=list(_JACOBIAN_ALIASES))
    sub.add_argument("--newton-tol-mode", dest="newton_tol_mode", default=None,
                     choices=list(_TOL_ALIASES))
    sub.add_argument("--newton-abs-tol", dest="newton_abs_tol", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvsde")
    subs = parser.add_subparsers(dest="command", required=True)

    s = subs.add_parser("simulate")
    _add_common(s)
    s.add_argument("--M", dest="m_steps", type=int, default=None)
    s.add_argument("--record", default=None,
                   help="terminal | path | thin=k")

    for name in ("strong-error", "path-error"):
        s = subs.add_parser(name)
        _add_common(s)
        s.add_argument("--h-list", dest="h_list", default=None,
                       help="comma separated step sizes")
        s.add_argument("--h-proxy", dest="h_proxy", type=float, default=None)

    s = subs.add_parser("poc")
    _add_common(s)
    s.add_argument("--n-list", dest="n_list", default=None,
                   help="comma separated particle counts")
    s.add_argument("--n-proxy", dest="n_proxy", type=int, default=None)
    s.add_argument("--h", type=float, default=None)

    s = subs.add_parser("density")
    _add_common(s)
    s.add_argument("--M", dest="m_steps", type=int, default=None)
    s.add_argument("--times", default=None, help="comma separated grid times")
    s.add_argument("--bins", type=int, default=None)

    s = subs.add_parser("phase")
    _add_common(s)
    s.add_argument("--M", dest="m_steps", type=int, default=None)

    s = subs.add_parser("validate-model")
    _add_common(s)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flag_values = {k: v for k, v in vars(args).items() if k != "config"}
    try:
        cfg = parse_config(args.config, flag_values)
    except (ConfigurationError, OSError, yaml.YAMLError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return dispatch(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MVSDEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
