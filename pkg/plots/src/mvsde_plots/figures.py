"""Figure rendering over harness CSV + sidecar outputs.

Every CSV written by the simulation harness comes with a ``<csv>.meta.json``
sidecar carrying a ``csv_schema_version`` field; loading validates that
version before any parsing.  Rendering is read-only over the inputs and uses
the Agg backend, so the same inputs give the same image.

Figure kinds:

* ``rate_loglog``: error against step size (or particle count) on log-log
  axes, one series per input CSV, with reference slope lines anchored at the
  smallest-parameter point.  Diverged rows are drawn as open markers pinned
  to the top of the axis, not dropped.
* ``density_grid``: one panel per requested time with the per-coordinate
  histogram masses drawn as bars.
* ``runtime_scatter``: error against the per-cell wall clock recorded in the
  sidecar.
* ``phase_portrait``: parametric curve of the two cross-particle coordinate
  means over time.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
from dataclasses import dataclass, field

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

EXPECTED_SCHEMA_VERSION = 1

KINDS = ("density_grid", "rate_loglog", "runtime_scatter", "phase_portrait")


class SchemaError(RuntimeError):
    pass


@dataclass
class FigureSpec:
    inputs: list
    kind: str
    output: str
    reference_slopes: list = field(default_factory=list)


def load_sidecar(csv_path: str) -> dict:
    meta_path = csv_path + ".meta.json"
    if not os.path.exists(meta_path):
        raise SchemaError(f"missing sidecar {meta_path}; cannot verify schema")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    version = meta.get("csv_schema_version")
    if version != EXPECTED_SCHEMA_VERSION:
        raise SchemaError(
            f"{csv_path}: schema version {version!r}, expected {EXPECTED_SCHEMA_VERSION}"
        )
    return meta


def load_rows(csv_path: str) -> list:
    """Rows as dicts with numeric fields parsed; sidecar is validated first."""
    load_sidecar(csv_path)
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        rows = []
        for raw in csv.DictReader(fh):
            row = {}
            for key, value in raw.items():
                try:
                    row[key] = float(value)
                except (TypeError, ValueError):
                    row[key] = value
            rows.append(row)
    return rows


def _param_column(rows: list) -> str:
    for cand in ("h", "n"):
        if cand in rows[0]:
            return cand
    raise SchemaError("no step-size or particle-count column found")


def _rate_series(csv_path: str):
    rows = load_rows(csv_path)
    if not rows:
        raise SchemaError(f"{csv_path} has no data rows")
    col = _param_column(rows)
    label = f"{rows[0].get('scheme', '')} {rows[0].get('model', '')}".strip()
    ok = [(r[col], r["error"]) for r in rows
          if not r["diverged"] and np.isfinite(r["error"]) and r["error"] > 0]
    bad = [r[col] for r in rows if r["diverged"] or not np.isfinite(r["error"])]
    return col, label or os.path.basename(csv_path), sorted(ok), sorted(bad)


def _draw_rate(ax, spec: FigureSpec):
    xlabels = set()
    anchor = None
    top = 0.0
    for path in spec.inputs:
        col, label, ok, bad = _rate_series(path)
        xlabels.add("step size h" if col == "h" else "particles N")
        if ok:
            x, y = zip(*ok)
            ax.loglog(x, y, "o-", label=label)
            top = max(top, max(y))
            if anchor is None or x[0] < anchor[0]:
                anchor = (x[0], y[0])
        if bad:
            # diverged cells: open markers pinned at the top of the axis
            ax.plot(bad, [np.nan] * len(bad))  # keeps x range in sync
            ax._mvsde_diverged = getattr(ax, "_mvsde_diverged", []) + bad
    if anchor is not None:
        for slope in spec.reference_slopes:
            xs = np.array(sorted({x for p in spec.inputs
                                  for x, _ in _rate_series(p)[2]}))
            ys = anchor[1] * (xs / anchor[0]) ** slope
            ax.loglog(xs, ys, "--", color="grey", linewidth=1,
                      label=f"order {slope:g}")
    diverged = getattr(ax, "_mvsde_diverged", [])
    if diverged:
        y_top = top * 2 if top > 0 else 1.0
        ax.plot(diverged, [y_top] * len(diverged), "o", mfc="none",
                color="black", label="diverged")
    ax.set_xlabel(xlabels.pop() if len(xlabels) == 1 else "parameter")
    ax.set_ylabel("strong error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)


def _draw_density(fig, spec: FigureSpec):
    rows = load_rows(spec.inputs[0])
    times = sorted({r["time"] for r in rows})
    axes = fig.subplots(1, len(times), squeeze=False)[0]
    for ax, t in zip(axes, times):
        for c in sorted({r["coordinate"] for r in rows}):
            sub = [r for r in rows if r["time"] == t and r["coordinate"] == c]
            centers = [0.5 * (r["bin_left"] + r["bin_right"]) for r in sub]
            widths = [r["bin_right"] - r["bin_left"] for r in sub]
            ax.bar(centers, [r["mass"] for r in sub], width=widths,
                   alpha=0.6, label=f"x{int(c)}")
        ax.set_title(f"t = {t:g}")
        ax.set_xlabel("position")
        ax.legend(fontsize=7)
    axes[0].set_ylabel("mass")


def _draw_runtime(ax, spec: FigureSpec):
    for path in spec.inputs:
        meta = load_sidecar(path)
        runtimes = meta.get("cell_runtimes_s", {})
        rows = load_rows(path)
        col = _param_column(rows)
        pts = []
        for r in rows:
            if r["diverged"] or not np.isfinite(r["error"]) or r["error"] <= 0:
                continue
            key = repr(r[col]) if col == "h" else repr(r[col])
            rt = runtimes.get(key) or runtimes.get(repr(int(r[col])))
            if rt:
                pts.append((rt, r["error"]))
        if pts:
            x, y = zip(*pts)
            label = f"{rows[0].get('scheme', '')} {rows[0].get('model', '')}".strip()
            ax.loglog(x, y, "s", label=label)
    ax.set_xlabel("runtime per cell (s)")
    ax.set_ylabel("strong error")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)


def _draw_phase(ax, spec: FigureSpec):
    for path in spec.inputs:
        rows = load_rows(path)
        x = [r["mean_x1"] for r in rows]
        y = [r["mean_x2"] for r in rows]
        ax.plot(x, y, "-", linewidth=1)
        ax.plot(x[0], y[0], "o", color="green", label="start")
        ax.plot(x[-1], y[-1], "o", color="red", label="end")
    ax.set_xlabel("mean x1")
    ax.set_ylabel("mean x2")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)


def render(spec: FigureSpec) -> str:
    """Render the figure described by ``spec``; returns the output path."""
    if spec.kind not in KINDS:
        raise SchemaError(f"unknown figure kind {spec.kind!r}")
    if not spec.inputs:
        raise SchemaError("no input CSVs given")
    fig = plt.figure(figsize=(9, 3) if spec.kind == "density_grid" else (5, 4))
    try:
        if spec.kind == "density_grid":
            _draw_density(fig, spec)
        else:
            ax = fig.add_subplot(111)
            if spec.kind == "rate_loglog":
                _draw_rate(ax, spec)
            elif spec.kind == "runtime_scatter":
                _draw_runtime(ax, spec)
            else:
                _draw_phase(ax, spec)
        fig.tight_layout()
        fig.savefig(spec.output, dpi=120)
    finally:
        plt.close(fig)
    return spec.output


def _main(kind, default_slopes=()):
    parser = argparse.ArgumentParser()
    parser.add_argument("--input", action="append", required=True,
                        help="harness CSV; repeat for several series")
    parser.add_argument("--output", required=True)
    parser.add_argument("--ref-slope", action="append", type=float, default=None,
                        help="reference slope line (rate plots)")
    args = parser.parse_args()
    slopes = args.ref_slope if args.ref_slope is not None else list(default_slopes)
    spec = FigureSpec(inputs=args.input, kind=kind, output=args.output,
                      reference_slopes=slopes)
    try:
        render(spec)
    except SchemaError as exc:
        parser.exit(2, f"error: {exc}\n")
    return 0


def main_rate():
    return _main("rate_loglog", default_slopes=(1.0, 0.5))


def main_density():
    return _main("density_grid")


def main_runtime():
    return _main("runtime_scatter")


def main_phase():
    return _main("phase_portrait")
