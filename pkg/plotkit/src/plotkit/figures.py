"""Render benchmark CSV directories into figures.

The input contract is the harness's file layout: a run directory holds
results.csv (``rep,t,scope,metric,value``), meta.csv (``key,value``) and
optionally theta.csv (``rep,t,level,node,theta``) and timing.csv
(``rep,seconds``). A figure reads either one run directory or a parent
directory of several, depending on its kind.

Rendering is a pure function of the CSV content: fixed style, fixed SVG
hash salt, no dates or hostnames embedded, runs ordered by directory name.
Rendering the same directory twice produces byte-identical files.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "KINDS",
    "FigureSpec",
    "PlotError",
    "MissingColumn",
    "EmptyData",
    "build_figure",
    "render",
]

KINDS = ("box_vs_runtime", "theta_hist", "mean_box_with_reference", "series_vs_time")

_RC = {
    "svg.hashsalt": "dacpf-plot",
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class PlotError(Exception):
    """Bad inputs or an unrenderable request."""


class MissingColumn(PlotError):
    def __init__(self, path, column: str):
        super().__init__(f"{path}: missing column {column!r}")
        self.column = column


class EmptyData(PlotError):
    """The selected CSV has a header but no usable rows."""


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: a kind, the metric column it groups on (kind-specific
    default when None) and the image path to write (.svg or .png)."""

    kind: str
    out: str
    metric: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotError(f"unknown figure kind {self.kind!r}; known: {', '.join(KINDS)}")
        suffix = Path(self.out).suffix.lower()
        if suffix not in (".svg", ".png"):
            raise PlotError(f"output must end in .svg or .png, got {self.out!r}")


# ---------------------------------------------------------------------------
# CSV access
# ---------------------------------------------------------------------------

def _read_table(path: Path, required: tuple[str, ...]) -> list[dict]:
    if not path.exists():
        raise PlotError(f"missing input file {path}")
    lines = path.read_text().splitlines()
    if not lines:
        raise EmptyData(f"{path} is empty")
    header = lines[0].split(",")
    for column in required:
        if column not in header:
            raise MissingColumn(path, column)
    rows = []
    for ln in lines[1:]:
        if ln.strip():
            rows.append(dict(zip(header, ln.split(","))))
    return rows


def _read_meta(run_dir: Path) -> dict:
    rows = _read_table(run_dir / "meta.csv", ("key", "value"))
    return {r["key"]: r["value"] for r in rows}


def _read_results(run_dir: Path) -> list[dict]:
    rows = _read_table(run_dir / "results.csv",
                       ("rep", "t", "scope", "metric", "value"))
    if not rows:
        raise EmptyData(f"{run_dir / 'results.csv'} has no data rows")
    return rows


def _run_dirs(in_dir: Path) -> list[Path]:
    if (in_dir / "results.csv").exists():
        return [in_dir]
    if not in_dir.is_dir():
        raise PlotError(f"{in_dir} is not a directory")
    subs = sorted(p for p in in_dir.iterdir() if (p / "results.csv").exists())
    if not subs:
        raise PlotError(f"no run directories (results.csv) under {in_dir}")
    return subs


def _final_t(rows: list[dict]) -> int:
    return max(int(r["t"]) for r in rows)


def _metric_values(rows: list[dict], metric: str, t: int) -> np.ndarray:
    vals = [float(r["value"]) for r in rows
            if r["metric"] == metric and int(r["t"]) == t]
    return np.asarray(vals)


def _label(meta: dict) -> str:
    return f"{meta.get('algo', '?')} N={meta.get('n', '?')}"


# ---------------------------------------------------------------------------
# the four figure kinds
# ---------------------------------------------------------------------------

def _fig_box_vs_runtime(in_dir: Path, metric: str) -> plt.Figure:
    groups = []
    for run in _run_dirs(in_dir):
        rows = _read_results(run)
        vals = _metric_values(rows, metric, _final_t(rows))
        if vals.size == 0:
            raise EmptyData(f"{run}: no {metric!r} rows at the final time")
        timing = _read_table(run / "timing.csv", ("rep", "seconds"))
        if not timing:
            raise EmptyData(f"{run / 'timing.csv'} has no data rows")
        seconds = np.mean([float(r["seconds"]) for r in timing])
        groups.append((float(seconds), vals, _label(_read_meta(run))))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for seconds, vals, label in groups:
        ax.boxplot([vals], positions=[seconds], widths=seconds * 0.18,
                   manage_ticks=False)
        ax.annotate(label, (seconds, float(np.median(vals))),
                    textcoords="offset points", xytext=(6, 6), fontsize=8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("runtime per repetition [s]")
    ax.set_ylabel(metric)
    return fig


def _fig_theta_hist(in_dir: Path) -> plt.Figure:
    candidates = [run for run in _run_dirs(in_dir) if (run / "theta.csv").exists()]
    if not candidates:
        raise PlotError(f"no theta.csv under {in_dir}")
    if len(candidates) > 1:
        raise PlotError(
            f"theta_hist needs a single run directory; found {len(candidates)} under {in_dir}")
    run = candidates[0]
    meta = _read_meta(run)
    if "d" not in meta:
        raise MissingColumn(run / "meta.csv", "d")
    n_levels = max(1, math.ceil(math.log2(int(meta["d"]))))
    rows = _read_table(run / "theta.csv", ("rep", "t", "level", "node", "theta"))
    if not rows:
        raise EmptyData(f"{run / 'theta.csv'} has no data rows")
    by_level: dict[int, list[int]] = {}
    for r in rows:
        by_level.setdefault(int(r["level"]), []).append(int(r["theta"]))
    top = max(th for vals in by_level.values() for th in vals)
    bins = np.arange(0.5, top + 1.5)

    fig, axes = plt.subplots(1, n_levels, figsize=(2.2 * n_levels, 2.6),
                             sharey=True, sharex=True)
    axes = np.atleast_1d(axes)
    for level in range(1, n_levels + 1):
        ax = axes[level - 1]
        vals = by_level.get(level, [])
        if vals:
            ax.hist(vals, bins=bins, color="#4878a8", edgecolor="white")
        ax.set_title(f"level {level}")
        ax.set_xlabel("theta")
    axes[0].set_ylabel("merges")
    fig.suptitle(f"{_label(meta)}: permutation blocks per merge level")
    return fig


def _fig_mean_box_with_reference(in_dir: Path, metric: str) -> plt.Figure:
    runs = _run_dirs(in_dir)
    ref_runs = [r for r in runs if _read_meta(r).get("algo") == "bpf"]
    box_runs = [r for r in runs if r not in ref_runs]
    if not ref_runs:
        raise PlotError(f"no bootstrap reference run (algo bpf) under {in_dir}")
    if not box_runs:
        raise PlotError(f"only reference runs under {in_dir}; nothing to box")

    ref_rows = [row for r in ref_runs for row in _read_results(r)]
    t_last = _final_t(ref_rows)
    scopes = sorted({r["scope"] for r in ref_rows if r["metric"] == metric},
                    key=lambda s: (len(s), s))
    if not scopes:
        raise EmptyData(f"reference run has no {metric!r} rows")
    reference = {}
    for scope in scopes:
        vals = [float(r["value"]) for r in ref_rows
                if r["metric"] == metric and r["scope"] == scope
                and int(r["t"]) == t_last]
        reference[scope] = float(np.mean(vals))

    fig, ax = plt.subplots(figsize=(1.2 + 1.6 * len(scopes) * len(box_runs), 4.0))
    positions, labels = [], []
    pos = 1.0
    for run in box_runs:
        rows = _read_results(run)
        meta = _read_meta(run)
        for scope in scopes:
            vals = [float(r["value"]) for r in rows
                    if r["metric"] == metric and r["scope"] == scope
                    and int(r["t"]) == _final_t(rows)]
            if not vals:
                raise EmptyData(f"{run}: no {metric!r} rows for scope {scope}")
            ax.boxplot([vals], positions=[pos], widths=0.55, manage_ticks=False)
            ax.hlines(reference[scope], pos - 0.38, pos + 0.38,
                      colors="#b0413e", linestyles="--", zorder=3,
                      label="reference" if not positions else None)
            positions.append(pos)
            labels.append(f"{scope}\n{meta.get('algo', '?')}")
            pos += 1.0
        pos += 0.6
    ax.set_xticks(positions)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel(metric)
    ax.legend(loc="best", fontsize=8)
    return fig


def _fig_series_vs_time(in_dir: Path, metric: str) -> plt.Figure:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    drew = False
    for run in _run_dirs(in_dir):
        rows = _read_results(run)
        ts = sorted({int(r["t"]) for r in rows})
        series = []
        for t in ts:
            vals = _metric_values(rows, metric, t)
            if vals.size == 0:
                continue
            agg = float(np.sqrt(np.mean(vals))) if metric == "err2" \
                else float(np.mean(vals))
            series.append((t, agg))
        if not series:
            continue
        xs, ys = zip(*series)
        ax.plot(xs, ys, marker="o", markersize=3, label=_label(_read_meta(run)))
        drew = True
    if not drew:
        raise EmptyData(f"no {metric!r} rows in any run under {in_dir}")
    ax.set_xlabel("t")
    ax.set_ylabel("rmse" if metric == "err2" else metric)
    ax.legend(loc="best", fontsize=8)
    return fig


_DEFAULT_METRIC = {
    "box_vs_runtime": "w1_avg",
    "mean_box_with_reference": "mean",
    "series_vs_time": "err2",
}


def build_figure(spec: FigureSpec, in_dir) -> plt.Figure:
    """Build the matplotlib figure without writing it (tests hook in here)."""
    in_dir = Path(in_dir)
    metric = spec.metric or _DEFAULT_METRIC.get(spec.kind, "")
    with plt.rc_context(_RC):
        if spec.kind == "theta_hist":
            return _fig_theta_hist(in_dir)
        if spec.kind == "box_vs_runtime":
            return _fig_box_vs_runtime(in_dir, metric)
        if spec.kind == "mean_box_with_reference":
            return _fig_mean_box_with_reference(in_dir, metric)
        return _fig_series_vs_time(in_dir, metric)


def render(spec: FigureSpec, in_dir) -> Path:
    """Build and write the figure; nothing is written on error."""
    fig = build_figure(spec, in_dir)
    out = Path(spec.out)
    try:
        with plt.rc_context(_RC):
            if out.suffix.lower() == ".svg":
                fig.savefig(out, format="svg", metadata={"Date": None})
            else:
                fig.savefig(out, format="png")
    finally:
        plt.close(fig)
    return out
