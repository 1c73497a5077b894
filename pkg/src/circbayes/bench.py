"""Seeded Monte-Carlo experiments comparing the two solvers.

A trial draws a spike signal, a sensing operator and noise from substreams of
``SeedSequence(base_seed + trial_index)``, so both solvers see the same
instances. Sweeps take the cartesian product of grid axes and keep a fixed
row order however many workers run them.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .bayes import BayesConfig, reconstruct_bayes
from .bp import BpConfig, reconstruct_bp
from .errors import CSError, InvalidConfigError
from .metrics import Stopwatch, correlation, mean_square_error, reconstruction_error
from .sensing import apply, build_circulant, build_dense_random, make_seed
from .signals import add_awgn, generate_spikes, sigma_for_snr

MATRIX_KINDS = ("circulant", "dense_random")
SOLVERS = ("bayes", "bp")
CSV_HEADER = ("trial_seed,n,m,k,sigma,matrix,solver,re,mse,cc,support,"
              "ts_s,tr_s,tp_s,converged,failed").split(",")
TIMING_HEADER = ["trial_seed", "n", "m", "k", "sigma", "matrix", "solver",
                 "ts_s", "tr_s", "tp_s", "parallel_timing"]
SUMMARY_HEADER = ["n", "m", "k", "sigma", "matrix", "solver", "metric", "count",
                  "failure_rate", "mean", "median", "p5", "p95"]
METRICS = ("re", "mse", "cc", "support", "ts_s", "tr_s", "tp_s")
CELL_KEYS = ("n", "m", "k", "sigma", "matrix", "solver")


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep cell. ``sigma`` is the absolute noise level; ``snr_db`` is
    kept only as a record of where it came from."""

    n: int
    m: int
    k: int
    sigma: float = 0.0
    matrix_kind: str = "circulant"
    solver: str = "bayes"
    trials: int = 100
    base_seed: int = 0
    snr_db: Optional[float] = None
    amplitude: Any = "pm_one"
    row_select: str = "random"
    seed_dist: str = "gaussian"
    bayes: BayesConfig = field(default_factory=BayesConfig)
    bp: BpConfig = field(default_factory=BpConfig)

    def __post_init__(self):
        if not (0 <= self.k <= self.n) or not (1 <= self.m <= self.n):
            raise InvalidConfigError(f"need k <= n and 1 <= m <= n, got n={self.n} m={self.m} k={self.k}")
        if self.trials < 1:
            raise InvalidConfigError("trials must be >= 1")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise InvalidConfigError(f"sigma must be finite and >= 0, got {self.sigma}")
        if self.matrix_kind not in MATRIX_KINDS:
            raise InvalidConfigError(f"unknown matrix kind {self.matrix_kind!r}")
        if self.solver not in SOLVERS:
            raise InvalidConfigError(f"unknown solver {self.solver!r}")

    def to_record(self) -> Dict[str, Any]:
        rec = dataclasses.asdict(self)
        if isinstance(rec["amplitude"], tuple):
            rec["amplitude"] = list(rec["amplitude"])
        return rec


@dataclass(frozen=True)
class TrialRecord:
    trial_seed: int
    n: int
    m: int
    k: int
    sigma: float
    matrix: str
    solver: str
    re: Optional[float]
    mse: Optional[float]
    cc: Optional[float]
    support: Optional[int]
    ts_s: Optional[float]
    tr_s: Optional[float]
    tp_s: Optional[float]
    converged: bool
    failed: bool
    error: Optional[str] = field(default=None, compare=False)
    parallel_timing: bool = field(default=False, compare=False)

    def cell(self):
        return tuple(getattr(self, k) for k in CELL_KEYS)


def mean_square_amplitude(amplitude) -> float:
    if amplitude in ("pm_one", "gaussian"):
        return 1.0
    _, lo, hi = amplitude
    return (lo * lo + lo * hi + hi * hi) / 3.0


def _solve(cfg, op, r):
    if cfg.solver == "bayes":
        return reconstruct_bayes(op, r, cfg.bayes)
    return reconstruct_bp(op, r, cfg.bp)


# set in worker processes so timed sections of different trials never overlap
_TIMING_LOCK = None


def _init_worker(lock):
    global _TIMING_LOCK
    _TIMING_LOCK = lock


def run_trial(cfg: ExperimentConfig, trial_index: int, lock=None, parallel_timing=False) -> TrialRecord:
    """Run one seeded trial; library errors become a failure row."""
    seed = cfg.base_seed + trial_index
    sig_ss, op_ss, noise_ss = np.random.SeedSequence(seed).spawn(3)
    head = dict(trial_seed=seed, n=cfg.n, m=cfg.m, k=cfg.k, sigma=float(cfg.sigma),
                matrix=cfg.matrix_kind, solver=cfg.solver)
    lock = lock if lock is not None else _TIMING_LOCK
    try:
        signal = generate_spikes(np.random.default_rng(sig_ss), cfg.n, cfg.k, cfg.amplitude)
        op_rng = np.random.default_rng(op_ss)
        if cfg.matrix_kind == "circulant":
            op = build_circulant(make_seed(op_rng, cfg.n, cfg.seed_dist), cfg.m, cfg.row_select, op_rng)
        else:
            op = build_dense_random(op_rng, cfg.m, cfg.n, cfg.seed_dist)
        with (lock if lock is not None and not parallel_timing else nullcontext()):
            with Stopwatch("total") as t_p:
                with Stopwatch("sampling") as t_s:
                    clean = apply(op, signal)
                noisy = add_awgn(np.random.default_rng(noise_ss), clean, cfg.sigma)
                with Stopwatch("recovery") as t_r:
                    res = _solve(cfg, op, noisy)
                re = reconstruction_error(signal, res.estimate)
                mse = mean_square_error(signal, res.estimate)
                cc = correlation(signal, res.estimate)
    except CSError as exc:
        return TrialRecord(**head, re=None, mse=None, cc=None, support=None, ts_s=None, tr_s=None,
                           tp_s=None, converged=False, failed=True,
                           error=f"{type(exc).__name__}: {exc}", parallel_timing=parallel_timing)
    return TrialRecord(**head, re=re, mse=mse, cc=cc, support=res.support_size,
                       ts_s=t_s.elapsed, tr_s=t_r.elapsed, tp_s=t_p.elapsed,
                       converged=bool(res.converged), failed=False, parallel_timing=parallel_timing)


# ---------------------------------------------------------------- sweeps


def _config_from_dict(d: Dict[str, Any]) -> ExperimentConfig:
    d = dict(d)
    try:
        n, k = int(d.pop("n")), int(d.pop("k"))
    except KeyError as exc:
        raise InvalidConfigError(f"missing field {exc.args[0]!r}") from None
    m, ratio = d.pop("m", None), d.pop("m_ratio", None)
    if (m is None) == (ratio is None):
        raise InvalidConfigError("give exactly one of m and m_ratio")
    m = int(m) if m is not None else int(n * float(ratio))
    sigma, snr = d.pop("sigma", None), d.pop("snr_db", None)
    if sigma is not None and snr is not None:
        raise InvalidConfigError("give at most one of sigma and snr_db")
    amplitude = d.pop("amplitude", "pm_one")
    if isinstance(amplitude, list):
        amplitude = tuple(amplitude)
    if snr is not None:
        sigma = sigma_for_snr(k, m, float(snr), mean_square_amplitude(amplitude))
    try:
        bayes = BayesConfig(**d.pop("bayes", {}))
        bp = BpConfig(**d.pop("bp", {}))
        return ExperimentConfig(n=n, m=m, k=k, sigma=float(sigma or 0.0), snr_db=snr,
                                amplitude=amplitude, bayes=bayes, bp=bp, **d)
    except (TypeError, CSError) as exc:
        raise InvalidConfigError(str(exc)) from None


def expand_grid(base: Dict[str, Any], grid: Dict[str, Sequence[Any]]) -> List[ExperimentConfig]:
    """Cartesian product of ``grid`` over ``base``; the first axis varies slowest."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise InvalidConfigError("sweep grid must have at least one non-empty axis")
    axes = list(grid)
    cells = []
    for combo in itertools.product(*(grid[a] for a in axes)):
        d = dict(base)
        for a, v in zip(axes, combo):
            if a == "m_ratio":
                d.pop("m", None)
            elif a == "m":
                d.pop("m_ratio", None)
            d[a] = v
        cells.append(_config_from_dict(d))
    return cells


def load_sweep(path) -> Dict[str, Any]:
    """Read a JSON sweep file ``{"base": {...}, "grid": {...}}``.

    A file without ``base`` is taken as a single cell.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise InvalidConfigError(f"{path}: expected a JSON object")
    if "base" not in doc:
        doc = {"base": doc}
    doc.setdefault("grid", {"solver": [doc["base"].get("solver", "bayes")]})
    return doc


def run_sweep(cells: Sequence[ExperimentConfig], workers: int = 1,
              parallel_timing: bool = False) -> List[TrialRecord]:
    """All trials of all cells, in cell order then trial order."""
    if not cells:
        raise InvalidConfigError("empty sweep")
    tasks = [(c, i) for c in cells for i in range(c.trials)]
    if workers <= 1:
        return [run_trial(c, i, parallel_timing=parallel_timing) for c, i in tasks]
    ctx = mp.get_context("spawn")
    lock = ctx.Lock()
    with ProcessPoolExecutor(workers, mp_context=ctx, initializer=_init_worker, initargs=(lock,)) as pool:
        futures = [pool.submit(run_trial, c, i, None, parallel_timing) for c, i in tasks]
        return [f.result() for f in futures]


# ---------------------------------------------------------------- aggregation


@dataclass(frozen=True)
class SummaryRow:
    n: int
    m: int
    k: int
    sigma: float
    matrix: str
    solver: str
    metric: str
    count: int
    failure_rate: float
    mean: Optional[float]
    median: Optional[float]
    p5: Optional[float]
    p95: Optional[float]


def aggregate(table: Sequence[TrialRecord]) -> List[SummaryRow]:
    """Per-cell statistics of every metric, failures excluded and counted."""
    if not table:
        raise InvalidConfigError("cannot aggregate an empty table")
    groups: Dict[tuple, List[TrialRecord]] = {}
    for rec in table:
        groups.setdefault(rec.cell(), []).append(rec)
    out = []
    for cell, recs in groups.items():
        ok = [r for r in recs if not r.failed]
        rate = 1.0 - len(ok) / len(recs)
        for metric in METRICS:
            vals = np.array([getattr(r, metric) for r in ok if getattr(r, metric) is not None], dtype=float)
            if vals.size:
                stats = (float(vals.mean()), float(np.median(vals)),
                         float(np.percentile(vals, 5)), float(np.percentile(vals, 95)))
            else:
                stats = (None,) * 4
            out.append(SummaryRow(*cell, metric, int(vals.size), rate, *stats))
    return out


def lookup(summary, metric, stat, **cell):
    """Values of ``stat`` for ``metric`` over the rows matching ``cell``."""
    return [getattr(r, stat) for r in summary
            if r.metric == metric and all(getattr(r, k) == v for k, v in cell.items())]


# ---------------------------------------------------------------- emission


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _open_for_write(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from None


def write_csv(table: Sequence[TrialRecord], path, inline_timings: bool = False) -> None:
    """Trial rows under the fixed header.

    Timing cells are left empty unless ``inline_timings``; wall-clock values
    would otherwise make the file differ between identical runs.
    """
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in table:
            row = []
            for col in CSV_HEADER:
                v = getattr(rec, col)
                if col in ("ts_s", "tr_s", "tp_s") and not inline_timings:
                    v = None
                row.append(_fmt(v))
            w.writerow(row)


def write_timings(table: Sequence[TrialRecord], path) -> None:
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMING_HEADER)
        for rec in table:
            w.writerow([_fmt(getattr(rec, c)) for c in TIMING_HEADER])


def _parse(v, kind):
    if v == "":
        return None
    if kind is bool:
        return v == "1"
    return kind(v)


_TYPES = dict(trial_seed=int, n=int, m=int, k=int, sigma=float, matrix=str, solver=str, re=float,
              mse=float, cc=float, support=int, ts_s=float, tr_s=float, tp_s=float,
              converged=bool, failed=bool)


def read_csv(path) -> List[TrialRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise InvalidConfigError(f"{path}: unexpected header")
    return [TrialRecord(**{c: _parse(v, _TYPES[c]) for c, v in zip(CSV_HEADER, row)}) for row in rows[1:]]


def write_summary(summary: Sequence[SummaryRow], path) -> None:
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for row in summary:
            w.writerow([_fmt(getattr(row, c)) for c in SUMMARY_HEADER])


def write_plotdata(summary, path, x_axis: str, metric: str = "mse", stat: str = "median") -> None:
    """Whitespace-separated columns: ``x`` then one column per solver."""
    solvers = [s for s in SOLVERS if any(r.solver == s for r in summary)]
    xs = sorted({getattr(r, x_axis) for r in summary if r.metric == metric})
    with _open_for_write(path) as fh:
        fh.write("# " + " ".join([x_axis] + [f"{s}_{stat}_{metric}" for s in solvers]) + "\n")
        for x in xs:
            cols = [_fmt(x)]
            for s in solvers:
                v = lookup(summary, metric, stat, solver=s, **{x_axis: x})
                cols.append("nan" if not v or v[0] is None else repr(v[0]))
            fh.write(" ".join(cols) + "\n")


def read_plotdata(path):
    return np.loadtxt(path, ndmin=2)


# ---------------------------------------------------------------- checks


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def check_trend(summary, x_axis, direction, metric="mse", stat="median") -> List[Check]:
    """One check per solver that ``stat`` of ``metric`` is monotone in ``x_axis``."""
    out = []
    for solver in SOLVERS:
        pts = sorted((getattr(r, x_axis), getattr(r, stat)) for r in summary
                     if r.metric == metric and r.solver == solver)
        if not pts:
            continue
        ys = [y for _, y in pts]
        if any(y is None for y in ys):
            ok = False
        elif direction == "nonincreasing":
            ok = all(b <= a for a, b in zip(ys, ys[1:]))
        else:
            ok = all(b >= a for a, b in zip(ys, ys[1:]))
        detail = ", ".join(f"{x}:{y:.3g}" if y is not None else f"{x}:-" for x, y in pts)
        out.append(Check(f"{solver} {stat} {metric} {direction} in {x_axis}", ok, detail))
    return out


def check_order(summary, metric, stat, relation, **cell) -> Check:
    """``stat(metric)`` of bayes ``relation`` that of bp within ``cell``."""
    (a,) = lookup(summary, metric, stat, solver="bayes", **cell) or [None]
    (b,) = lookup(summary, metric, stat, solver="bp", **cell) or [None]
    ok = a is not None and b is not None and {
        "<": a < b, ">": a > b, "<=": a <= b}[relation]
    where = " ".join(f"{k}={v}" for k, v in cell.items())
    return Check(f"{stat} {metric} bayes {relation} bp {where}".strip(), bool(ok), f"bayes={a!r} bp={b!r}")


def _fig6_checks(summary):
    checks = check_trend(summary, "n", "nonincreasing")
    for n in sorted({r.n for r in summary}):
        if n <= 100:
            checks.append(check_order(summary, "mse", "median", "<=", n=n))
    return checks


def _fig7_checks(summary):
    return check_trend(summary, "k", "nondecreasing")


def _table1_checks(summary):
    return [check_order(summary, "re", "mean", "<"), check_order(summary, "cc", "mean", ">"),
            check_order(summary, "tr_s", "median", "<")]


BASE = {"snr_db": 20.0, "matrix_kind": "circulant", "trials": 100, "base_seed": 0}
FIGURES = {
    "fig6": {"base": dict(BASE, k=15, m_ratio=0.25),
             "grid": {"n": [50, 100, 200, 400], "solver": ["bayes", "bp"]},
             "x_axis": "n", "checks": _fig6_checks},
    "fig7": {"base": dict(BASE, n=200, m=50),
             "grid": {"k": [5, 10, 20, 40], "solver": ["bayes", "bp"]},
             "x_axis": "k", "checks": _fig7_checks},
    "table1": {"base": dict(BASE, n=200, m=80, k=15),
               "grid": {"solver": ["bayes", "bp"]},
               "x_axis": None, "checks": _table1_checks},
}


def figure_cells(which: str, seed: Optional[int] = None, trials: Optional[int] = None):
    if which not in FIGURES:
        raise InvalidConfigError(f"unknown figure {which!r}; expected one of {sorted(FIGURES)}")
    fig = FIGURES[which]
    base = dict(fig["base"])
    if seed is not None:
        base["base_seed"] = int(seed)
    if trials is not None:
        base["trials"] = int(trials)
    return expand_grid(base, fig["grid"])


def write_table1(summary, path) -> None:
    """Mean Re and Cc in percent, recovery and processing times in ms."""
    with _open_for_write(path) as fh:
        fh.write(f"{'solver':8s} {'Re(%)':>10s} {'Cc(%)':>10s} {'t_r(ms)':>10s} {'t_p(ms)':>10s}\n")
        for s in SOLVERS:
            vals = [lookup(summary, mt, "mean", solver=s) for mt in ("re", "cc", "tr_s", "tp_s")]
            if not vals[0]:
                continue
            cols = []
            for v, unit in zip(vals, (100, 100, 1e3, 1e3)):
                cols.append(f"{v[0] * unit:10.2f}" if v and v[0] is not None else f"{'-':>10s}")
            fh.write(f"{s:8s} " + " ".join(cols) + "\n")


def write_outputs(out_dir, table, cells, inline_timings=False, parallel_timing=False):
    """Standard output set for a run; returns the summary."""
    os.makedirs(out_dir, exist_ok=True)
    write_csv(table, os.path.join(out_dir, "results.csv"), inline_timings)
    write_timings(table, os.path.join(out_dir, "timings.csv"))
    summary = aggregate(table)
    write_summary(summary, os.path.join(out_dir, "summary.csv"))
    with _open_for_write(os.path.join(out_dir, "config.json")) as fh:
        json.dump({"cells": [c.to_record() for c in cells], "parallel_timing": parallel_timing},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    failures = [r for r in table if r.failed]
    if failures:
        with _open_for_write(os.path.join(out_dir, "failures.txt")) as fh:
            for r in failures:
                fh.write(f"{r.trial_seed} {r.solver} n={r.n} m={r.m} k={r.k}: {r.error}\n")
    return summary
