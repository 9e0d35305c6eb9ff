"""Experiment harness: configure a model/algorithm pair, run repetitions,
write CSV artifacts.

Every run directory holds results.csv (header ``rep,t,scope,metric,value``),
meta.csv (resolved configuration), and unless disabled theta.csv (per-merge
theta diagnostics) and timing.csv (per-repetition wall time; kept separate
so results.csv stays byte-identical across machines and schedules).

Repetitions are independent: the master seed splits into a data stream
(tag 0, shared by every repetition and algorithm so comparisons see the
same observations) and per-repetition streams (tag 1, then the repetition
index). Workers > 1 distributes repetitions over a process pool; results
are collected in repetition order, so serial and parallel schedules write
identical files.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .core import InvalidParams, RngStream, SchemaMismatch, split_stream
from .filtering import DacConfig, TemperingConfig, run_dac_filter
from .lgssm import LgssmParams, LgssmModel, LgssmAux, simulate_lgssm
from .metrics import MarginalTruth, ks_empirical_vs_gaussian, w1_empirical_vs_gaussian
from .oracles import kalman_filter, run_bootstrap_pf
from .resampling import DEFAULT_FULL_CAP, MergeStrategy
from .spatial import SpatialParams, SpatialModel, SpatialAux, simulate_spatial
from .tree import build_chain_tree, build_lattice_tree

__all__ = [
    "ExperimentConfig",
    "run_experiment",
    "run_preset",
    "summarize",
    "PRESET_NAMES",
    "RESULTS_HEADER",
    "THETA_HEADER",
]

RESULTS_HEADER = "rep,t,scope,metric,value"
THETA_HEADER = "rep,t,level,node,theta"

_ALGOS = ("dac-adaptive", "dac-lightweight", "dac-full", "dac-linear", "bpf", "kalman")

_LGSSM_DEFAULTS = {"tau": 1.0, "lam": 1.0, "sigma_y2": 0.25}
_SPATIAL_DEFAULTS = {"sigma_x2": 1.0, "tau": -0.25, "r_y": 1, "nu": 10.0}


@dataclass(frozen=True)
class ExperimentConfig:
    """Plain-value description of one run (a model, an algorithm, a grid
    point). None leaves a model parameter at its model-specific default."""

    model: str
    algo: str
    n: int
    t_max: int
    reps: int
    seed: int
    out: str
    d: int | None = None
    rows: int | None = None
    cols: int | None = None
    tau: float | None = None
    lam: float | None = None
    sigma_y2: float | None = None
    sigma_x2: float | None = None
    r_y: int | None = None
    nu: float | None = None
    theta: int | None = None
    ess_target: float | None = None
    temper: bool = False
    full_cap: int = DEFAULT_FULL_CAP
    workers: int = 1
    theta_out: bool = True
    timing_out: bool = True

    def __post_init__(self):
        if self.model not in ("lgssm", "spatial"):
            raise InvalidParams(f"unknown model {self.model!r}")
        if self.algo not in _ALGOS:
            raise InvalidParams(f"unknown algorithm {self.algo!r}")
        if self.reps < 1:
            raise InvalidParams("reps must be >= 1")
        if self.t_max < 1:
            raise InvalidParams("t_max must be >= 1")
        if self.n < 1:
            raise InvalidParams("n must be >= 1")
        if self.workers < 1:
            raise InvalidParams("workers must be >= 1")
        if self.model == "lgssm" and (self.d is None or self.d < 1):
            raise InvalidParams("lgssm needs --d")
        if self.model == "spatial" and (self.rows is None or self.cols is None):
            raise InvalidParams("spatial needs --rows and --cols")
        if self.algo == "kalman" and self.model != "lgssm":
            raise InvalidParams("the kalman baseline is defined for lgssm only")

    def dim(self) -> int:
        return self.d if self.model == "lgssm" else self.rows * self.cols

    def resolved_params(self) -> dict:
        if self.model == "lgssm":
            out = dict(_LGSSM_DEFAULTS)
            for k in out:
                v = getattr(self, k)
                if v is not None:
                    out[k] = v
            return out
        out = dict(_SPATIAL_DEFAULTS)
        for k in out:
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out


def _build_model(cfg: ExperimentConfig):
    p = cfg.resolved_params()
    if cfg.model == "lgssm":
        params = LgssmParams(d=cfg.d, **p)
        return LgssmModel(params), LgssmAux(params, build_chain_tree(cfg.d)), params
    params = SpatialParams(rows=cfg.rows, cols=cfg.cols, **p)
    return SpatialModel(params), SpatialAux(params, build_lattice_tree(cfg.rows, cfg.cols)), params


def _strategy(cfg: ExperimentConfig) -> MergeStrategy:
    if cfg.algo == "dac-adaptive":
        return MergeStrategy.adaptive(cfg.ess_target)
    if cfg.algo == "dac-lightweight":
        return MergeStrategy.lightweight(cfg.theta)
    if cfg.algo == "dac-full":
        return MergeStrategy.full(cfg.full_cap)
    if cfg.algo == "dac-linear":
        return MergeStrategy.linear()
    raise InvalidParams(f"{cfg.algo} is not a merge algorithm")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _simulate(cfg: ExperimentConfig):
    master = RngStream(cfg.seed, ())
    gen = split_stream(master, 0).generator()
    _, _, params = _build_model(cfg)
    if cfg.model == "lgssm":
        return simulate_lgssm(params, cfg.t_max, gen)
    return simulate_spatial(params, cfg.t_max, gen)


def _metric_rows(rep: int, parts_by_t, truth_means, truth_vars):
    """Per-component rows; with exact marginals also W1/KS/squared error and
    a dimension-averaged W1/KS row (scope "all")."""
    rows = []
    for ti, parts in enumerate(parts_by_t):
        t = ti + 1
        d = parts.shape[1]
        if truth_means is None:
            # no exact marginals: record the mean and the cloud's own quartile
            # band, which reference runs expose for agreement checks
            for i in range(d):
                q1, q3 = np.percentile(parts[:, i], [25.0, 75.0])
                rows.append((rep, t, str(i), "mean", float(parts[:, i].mean())))
                rows.append((rep, t, str(i), "q1", float(q1)))
                rows.append((rep, t, str(i), "q3", float(q3)))
            continue
        w1s = np.empty(d)
        kss = np.empty(d)
        for i in range(d):
            truth = MarginalTruth(float(truth_means[ti, i]), float(truth_vars[ti, i]))
            col = parts[:, i]
            w1s[i] = w1_empirical_vs_gaussian(col, truth)
            kss[i] = ks_empirical_vs_gaussian(col, truth)
            m = float(col.mean())
            rows.append((rep, t, str(i), "w1", float(w1s[i])))
            rows.append((rep, t, str(i), "ks", float(kss[i])))
            rows.append((rep, t, str(i), "mean", m))
            rows.append((rep, t, str(i), "err2", (m - truth.mean) ** 2))
        rows.append((rep, t, "all", "w1_avg", float(w1s.mean())))
        rows.append((rep, t, "all", "ks_avg", float(kss.mean())))
    return rows


def _run_single_rep(payload):
    cfg, rep, ys, truth_means, truth_vars = payload
    model, aux, _ = _build_model(cfg)
    master = RngStream(cfg.seed, ())
    rep_stream = split_stream(split_stream(master, 1), rep)
    started = time.perf_counter()
    theta_rows = []
    if cfg.algo == "bpf":
        clouds = run_bootstrap_pf(model, ys, cfg.n, rep_stream.generator())
        parts_by_t = [c.particles for c in clouds]
    else:
        dac_cfg = DacConfig(
            n_particles=cfg.n,
            merge_strategy=_strategy(cfg),
            tempering=TemperingConfig() if cfg.temper else None,
        )
        states = run_dac_filter(model, aux, aux.tree, ys, dac_cfg, rep_stream)
        parts_by_t = [s.root_cloud.particles for s in states]
        for s in states:
            for node, level, th in s.thetas:
                theta_rows.append((rep, s.time, level, node, th))
    seconds = time.perf_counter() - started
    return rep, _metric_rows(rep, parts_by_t, truth_means, truth_vars), theta_rows, seconds


def _write_meta(cfg: ExperimentConfig, out: Path) -> None:
    p = cfg.resolved_params()
    pairs = [
        ("model", cfg.model), ("algo", cfg.algo), ("n", cfg.n), ("d", cfg.dim()),
        ("rows", cfg.rows if cfg.rows is not None else ""),
        ("cols", cfg.cols if cfg.cols is not None else ""),
        ("t_max", cfg.t_max), ("reps", cfg.reps), ("seed", cfg.seed),
        ("theta", cfg.theta if cfg.theta is not None else ""),
        ("ess_target", cfg.ess_target if cfg.ess_target is not None else ""),
        ("temper", "true" if cfg.temper else "false"),
        ("full_cap", cfg.full_cap),
    ]
    pairs += sorted(p.items())
    with open(out / "meta.csv", "w") as fh:
        fh.write("key,value\n")
        for k, v in pairs:
            fh.write(f"{k},{v}\n")


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Execute one configuration and write its run directory."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _, ys = _simulate(cfg)
    _write_meta(cfg, out)

    if cfg.algo == "kalman":
        _, _, params = _build_model(cfg)
        started = time.perf_counter()
        states = kalman_filter(params, ys)
        seconds = time.perf_counter() - started
        with open(out / "results.csv", "w") as fh:
            fh.write(RESULTS_HEADER + "\n")
            for ti, st in enumerate(states):
                for i in range(cfg.dim()):
                    fh.write(f"0,{ti + 1},{i},mean,{_fmt(float(st.mean[i]))}\n")
                    fh.write(f"0,{ti + 1},{i},var,{_fmt(float(st.cov[i, i]))}\n")
        if cfg.timing_out:
            with open(out / "timing.csv", "w") as fh:
                fh.write("rep,seconds\n")
                fh.write(f"0,{_fmt(seconds)}\n")
        return out

    truth_means = truth_vars = None
    if cfg.model == "lgssm":
        _, _, params = _build_model(cfg)
        states = kalman_filter(params, ys)
        truth_means = np.stack([s.mean for s in states])
        truth_vars = np.stack([s.marginal_vars() for s in states])

    payloads = [(cfg, rep, ys, truth_means, truth_vars) for rep in range(cfg.reps)]
    results_fh = open(out / "results.csv", "w")
    results_fh.write(RESULTS_HEADER + "\n")
    theta_fh = None
    if cfg.theta_out and cfg.algo.startswith("dac-"):
        theta_fh = open(out / "theta.csv", "w")
        theta_fh.write(THETA_HEADER + "\n")
    timings = []
    try:
        if cfg.workers > 1:
            with Pool(cfg.workers) as pool:
                iterator = pool.imap(_run_single_rep, payloads)
                for rep, rows, theta_rows, seconds in iterator:
                    _flush_rep(results_fh, theta_fh, rows, theta_rows)
                    timings.append((rep, seconds))
        else:
            for payload in payloads:
                rep, rows, theta_rows, seconds = _run_single_rep(payload)
                _flush_rep(results_fh, theta_fh, rows, theta_rows)
                timings.append((rep, seconds))
    finally:
        results_fh.close()
        if theta_fh is not None:
            theta_fh.close()
    if cfg.timing_out:
        with open(out / "timing.csv", "w") as fh:
            fh.write("rep,seconds\n")
            for rep, seconds in timings:
                fh.write(f"{rep},{_fmt(seconds)}\n")
    return out


def _flush_rep(results_fh, theta_fh, rows, theta_rows) -> None:
    for rep, t, scope, metric, value in rows:
        results_fh.write(f"{rep},{t},{scope},{metric},{_fmt(value)}\n")
    results_fh.flush()
    if theta_fh is not None:
        for rep, t, level, node, th in theta_rows:
            theta_fh.write(f"{rep},{t},{level},{node},{th}\n")
        theta_fh.flush()


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def _figure2_desk(out: Path, workers: int) -> list[Path]:
    runs = []
    for algo in ("dac-adaptive", "dac-lightweight"):
        for n in (100, 500, 1000):
            runs.append(ExperimentConfig(
                model="lgssm", algo=algo, d=32, n=n, t_max=10, reps=50,
                seed=1234, out=str(out / f"{algo}-n{n}"), workers=workers,
            ))
    return [run_experiment(c) for c in runs]


def _appendix_a_desk(out: Path, workers: int) -> list[Path]:
    runs = []
    for algo in ("dac-full", "dac-lightweight", "dac-adaptive", "dac-linear"):
        runs.append(ExperimentConfig(
            model="lgssm", algo=algo, d=128, n=500, t_max=10, reps=50,
            seed=4321, out=str(out / f"{algo}-n500"), workers=workers,
        ))
    return [run_experiment(c) for c in runs]


def _spatial_validate(out: Path, workers: int) -> list[Path]:
    dac = ExperimentConfig(
        model="spatial", algo="dac-adaptive", rows=2, cols=2, n=5000, t_max=10,
        reps=20, seed=777, out=str(out / "dac-adaptive-n5000"), workers=workers,
    )
    ref = ExperimentConfig(
        model="spatial", algo="bpf", rows=2, cols=2, n=100000, t_max=10,
        reps=25, seed=777, out=str(out / "bpf-n100000"), workers=workers,
    )
    return [run_experiment(dac), run_experiment(ref)]


def _determinism_smoke(out: Path, workers: int) -> list[Path]:
    cfg = ExperimentConfig(
        model="lgssm", algo="dac-adaptive", d=8, n=100, t_max=4, reps=6,
        seed=99, out=str(out / "dac-adaptive-n100"), workers=workers,
        timing_out=False,
    )
    return [run_experiment(cfg)]


_PRESETS = {
    "figure2-desk": _figure2_desk,
    "appendixA-desk": _appendix_a_desk,
    "spatial-2x2-validate": _spatial_validate,
    "determinism-smoke": _determinism_smoke,
}
PRESET_NAMES = tuple(sorted(_PRESETS))


def run_preset(name: str, out_dir, workers: int = 1) -> list[Path]:
    if name not in _PRESETS:
        raise InvalidParams(f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}")
    return _PRESETS[name](Path(out_dir), workers)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def _read_meta(run_dir: Path) -> dict:
    meta = {}
    with open(run_dir / "meta.csv") as fh:
        header = fh.readline().rstrip("\n")
        if header != "key,value":
            raise SchemaMismatch(f"{run_dir}/meta.csv: unexpected header {header!r}")
        for line in fh:
            k, _, v = line.rstrip("\n").partition(",")
            meta[k] = v
    return meta


def _read_results(run_dir: Path):
    rows = []
    with open(run_dir / "results.csv") as fh:
        header = fh.readline().rstrip("\n")
        if header != RESULTS_HEADER:
            raise SchemaMismatch(f"{run_dir}/results.csv: unexpected header {header!r}")
        for line in fh:
            rep, t, scope, metric, value = line.rstrip("\n").split(",")
            rows.append((int(rep), int(t), scope, metric, float(value)))
    return rows


def _discover_run_dirs(in_path: Path) -> list[Path]:
    if (in_path / "results.csv").exists():
        return [in_path]
    subs = sorted(p for p in in_path.iterdir() if (p / "results.csv").exists())
    if not subs:
        raise SchemaMismatch(f"no results.csv under {in_path}")
    return subs


def summarize(in_path, out_path) -> Path:
    """Boxplot statistics per (algo, n, d, metric) over final-time rows.

    The figures box final-time values over repetitions, so quartiles are
    computed on rows at the maximal t of each run; runtime quartiles come
    from timing.csv when present. Metrics without final-time rows are
    skipped with a warning.
    """
    in_path = Path(in_path)
    out_path = Path(out_path)
    lines = ["algo,n,d,metric,mean,q1,median,q3"]
    for run_dir in _discover_run_dirs(in_path):
        meta = _read_meta(run_dir)
        algo, n, d = meta["algo"], int(meta["n"]), int(meta["d"])
        rows = _read_results(run_dir)
        if not rows:
            warnings.warn(f"{run_dir}: results.csv has no data rows")
            continue
        t_last = max(r[1] for r in rows)
        by_metric: dict[str, list[float]] = {}
        metric_order = []
        for rep, t, scope, metric, value in rows:
            if t != t_last:
                continue
            if metric not in by_metric:
                by_metric[metric] = []
                metric_order.append(metric)
            by_metric[metric].append(value)
        timing = run_dir / "timing.csv"
        if timing.exists():
            with open(timing) as fh:
                fh.readline()
                secs = [float(line.rstrip("\n").split(",")[1]) for line in fh if line.strip()]
            if secs:
                by_metric["runtime_s"] = secs
                metric_order.append("runtime_s")
        for metric in metric_order:
            vals = np.asarray(by_metric[metric], dtype=float)
            if vals.size == 0:
                warnings.warn(f"{run_dir}: metric {metric} has no values at t={t_last}")
                continue
            q1, med, q3 = np.percentile(vals, [25.0, 50.0, 75.0])
            lines.append(
                f"{algo},{n},{d},{metric},{_fmt(vals.mean())},{_fmt(q1)},{_fmt(med)},{_fmt(q3)}"
            )
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return out_path
