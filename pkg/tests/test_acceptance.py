"""Acceptance criteria C1..C10, one test each, printing one PASS/FAIL line per criterion.

Run alone with ``pytest -s tests/test_acceptance.py``.
"""

import itertools
import subprocess
import sys
import time

import numpy as np
import pytest

from circbayes import bench
from circbayes.bayes import reconstruct_bayes, eq9_residual
from circbayes.bp import BpConfig, reconstruct_bp
from circbayes.metrics import Stopwatch, correlation, mean_square_error, reconstruction_error
from circbayes.sensing import apply, build_circulant, build_dense_random, make_seed, to_dense
from circbayes.signals import add_awgn, generate_spikes, sigma_for_snr

pytestmark = pytest.mark.acceptance


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def median_of(table, solver, field):
    vals = [getattr(r, field) for r in table if r.solver == solver and not r.failed]
    return float(np.median(vals))


def mean_of(table, solver, field):
    vals = [getattr(r, field) for r in table if r.solver == solver and not r.failed]
    return float(np.mean(vals))


def test_c1_circulant_correctness(verdict):
    def run():
        worst_index = 0.0
        for n in (4, 8, 16, 64):
            for m in range(1, n + 1):
                for select, draw in itertools.product(("first_m", "random"), range(3)):
                    if select == "first_m" and draw:
                        continue
                    c = make_seed(1000 * n + 10 * m + draw, n)
                    op = build_circulant(c, m, select, rng=draw)
                    i = op.row_indices[:, None]
                    j = np.arange(n)[None, :]
                    oracle = op.scale * c.entries[(j - i) % n]
                    worst_index = max(worst_index, np.abs(to_dense(op) - oracle).max())
        worst_apply = 0.0
        g = np.random.default_rng(1)
        for _ in range(100):
            n = int(g.integers(2, 300))
            m = int(g.integers(1, n + 1))
            op = build_circulant(make_seed(g, n), m, rng=g)
            s = g.standard_normal(n)
            dense = to_dense(op) @ s
            worst_apply = max(worst_apply, np.linalg.norm(apply(op, s).values - dense) / np.linalg.norm(dense))
        return worst_index, worst_apply

    (wi, wa), t = timed(run)
    ok = wi == 0.0 and wa <= 1e-10 and t < 5
    verdict("C1 circulant correctness", ok, f"index max diff {wi:.1e}, apply rel {wa:.1e}, {t:.1f}s")
    assert ok


def test_c2_posterior_identity(verdict):
    def run():
        worst, count = 0.0, 0
        for i in range(50):
            g = np.random.default_rng(200 + i)
            s = generate_spikes(g, 20, 3)
            op = build_circulant(make_seed(g, 20), 12, rng=g)
            r = add_awgn(g, apply(op, s), 0.02)
            res = []

            def cb(state):
                res.append(eq9_residual(state, op, r))

            reconstruct_bayes(op, r, callback=cb)
            worst = max(worst, max(res))
            count += len(res)
        return worst, count

    (worst, count), t = timed(run)
    ok = worst <= 1e-8 and t < 10
    verdict("C2 posterior identity", ok, f"max residual {worst:.1e} over {count} iterations, {t:.1f}s")
    assert ok


def test_c3_noiseless_recovery(verdict):
    cfg = bench.ExperimentConfig(n=200, m=80, k=15, sigma=0.0, trials=100, solver="bayes")
    table, t = timed(lambda: bench.run_sweep([cfg]))
    good = sum(1 for r in table if not r.failed and r.re <= 0.01 and 13 <= r.support <= 17)
    ok = good >= 95 and t < 120
    verdict("C3 noiseless recovery", ok, f"{good}/100 trials with Re <= 1% and support in [13,17], {t:.1f}s")
    assert ok


def test_c4_table1_orderings(verdict):
    cells = bench.figure_cells("table1")
    table, t = timed(lambda: bench.run_sweep(cells))
    re = mean_of(table, "bayes", "re"), mean_of(table, "bp", "re")
    cc = mean_of(table, "bayes", "cc"), mean_of(table, "bp", "cc")
    tr = median_of(table, "bayes", "tr_s"), median_of(table, "bp", "tr_s")
    parts = {"Re": re[0] < re[1], "Cc": cc[0] > cc[1], "t_r": tr[0] < tr[1]}
    ok = all(parts.values()) and t < 300
    detail = (f"mean Re {re[0]:.4f} vs {re[1]:.4f}, mean Cc {cc[0]:.4f} vs {cc[1]:.4f}, "
              f"median t_r {1e3 * tr[0]:.2f} vs {1e3 * tr[1]:.2f} ms (bayes vs bp); "
              f"failing: {[k for k, v in parts.items() if not v] or 'none'}; {t:.1f}s")
    verdict("C4 table orderings", ok, detail)
    assert ok


def test_c5_sampling_time(verdict):
    n, m = 1024, 256
    times = {"circulant": [], "dense": []}

    def run():
        for i in range(50):
            g = np.random.default_rng(500 + i)
            s = generate_spikes(g, n, 20)
            ops = {"circulant": build_circulant(make_seed(g, n), m, rng=g),
                   "dense": build_dense_random(g, m, n)}
            for kind, op in ops.items():
                apply(op, s)
                with Stopwatch("sampling") as sw:
                    apply(op, s)
                times[kind].append(sw.elapsed)

    _, t = timed(run)
    circ, dense = np.median(times["circulant"]), np.median(times["dense"])
    ok = circ < dense and t < 120
    verdict("C5 sampling time", ok, f"median t_s {1e6 * circ:.0f} vs {1e6 * dense:.0f} us "
                                   f"(ratio {circ / dense:.2f}), {t:.1f}s")
    assert ok


def trend(table, axis, solver):
    xs = sorted({getattr(r, axis) for r in table})
    meds = [float(np.median([r.mse for r in table if getattr(r, axis) == x and r.solver == solver and not r.failed]))
            for x in xs]
    return xs, meds


def test_c6_mse_vs_length(verdict):
    table, t = timed(lambda: bench.run_sweep(bench.figure_cells("fig6")))
    parts, detail = {}, []
    for solver in ("bayes", "bp"):
        xs, meds = trend(table, "n", solver)
        parts[f"{solver} trend"] = all(b <= a for a, b in zip(meds, meds[1:]))
        detail.append(f"{solver} " + " ".join(f"{x}:{v:.3g}" for x, v in zip(xs, meds)))
    for n in (50, 100):
        sub = [r for r in table if r.n == n]
        bay, bp = median_of(sub, "bayes", "mse"), median_of(sub, "bp", "mse")
        parts[f"bayes<=bp n={n}"] = bay <= bp
    ok = all(parts.values()) and t < 600
    verdict("C6 mse vs length", ok, "; ".join(detail) +
            f"; failing: {[k for k, v in parts.items() if not v] or 'none'}; {t:.1f}s")
    assert ok


def test_c7_mse_vs_sparsity(verdict):
    table, t = timed(lambda: bench.run_sweep(bench.figure_cells("fig7")))
    parts, detail = {}, []
    for solver in ("bayes", "bp"):
        xs, meds = trend(table, "k", solver)
        parts[solver] = all(b >= a for a, b in zip(meds, meds[1:]))
        detail.append(f"{solver} " + " ".join(f"{x}:{v:.3g}" for x, v in zip(xs, meds)))
    ok = all(parts.values()) and t < 600
    verdict("C7 mse vs sparsity", ok, "; ".join(detail) + f"; {t:.1f}s")
    assert ok


def test_c8_metric_identities(verdict):
    def run():
        g = np.random.default_rng(8)
        worst_id = worst_aff = 0.0
        for _ in range(1000):
            n = int(g.integers(2, 100))
            s = g.standard_normal(n) * g.uniform(0.01, 100)
            h = s + g.standard_normal(n) * g.uniform(0, 10)
            lhs = reconstruction_error(s, h) ** 2 * (s @ s) / n
            rhs = mean_square_error(s, h)
            worst_id = max(worst_id, abs(lhs - rhs) / rhs)
            alpha, beta = g.uniform(0.01, 100), g.uniform(-100, 100)
            c = correlation(s, h)
            worst_aff = max(worst_aff, abs(correlation(s, alpha * h + beta) - c),
                            abs(correlation(s, -alpha * h + beta) + c))
        s = np.array([3.0, 4.0])
        trivial = [reconstruction_error(s, s) == 0.0, reconstruction_error(s, [0.0, 0.0]) == 1.0,
                   reconstruction_error(s, [3.0, 0.0]) == 0.8,
                   mean_square_error([1.0, 2.0], [1.0, 2.0]) == 0.0,
                   mean_square_error([0.0, 0.0], [1.0, 1.0]) == 1.0,
                   correlation([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]) == 1.0,
                   correlation([0.0, 1.0, 2.0], [0.0, -1.0, -2.0]) == -1.0,
                   correlation([1.0, 1.0, 1.0], [0.0, 1.0, 2.0]) is None]
        return worst_id, worst_aff, all(trivial)

    (wid, waff, triv), t = timed(run)
    ok = wid <= 1e-12 and waff <= 1e-12 and triv and t < 5
    verdict("C8 metric identities", ok, f"Re-MSE rel {wid:.1e}, affine {waff:.1e}, trivial {triv}, {t:.1f}s")
    assert ok


def exhaustive_minimum(phi, r, z):
    m, n = phi.shape
    best = float(r @ r)
    for size in range(1, min(m, n) + 1):
        for supp in itertools.combinations(range(n), size):
            p = phi[:, supp]
            g = p.T @ p
            if np.linalg.matrix_rank(g) < size:
                continue
            ginv, ptr = np.linalg.inv(g), p.T @ r
            for q in itertools.product((-1.0, 1.0), repeat=size):
                q = np.array(q)
                x = ginv @ (ptr - z * q / 2)
                if np.all(np.sign(x) == q):
                    d = r - p @ x
                    best = min(best, float(d @ d + z * np.abs(x).sum()))
    return best


def test_c9_bp_certificate(verdict):
    def run():
        cert_fail, runs = 0, 0
        for i in range(40):
            g = np.random.default_rng(900 + i)
            n = int(g.choice([50, 120, 200, 400]))
            m = int(g.integers(n // 5, n // 2))
            k = int(g.integers(1, max(2, m // 3)))
            s = generate_spikes(g, n, k)
            op = build_circulant(make_seed(g, n), m, rng=g)
            sigma = [0.0, sigma_for_snr(k, m, 20), sigma_for_snr(k, m, 5)][i % 3]
            r = add_awgn(g, apply(op, s), sigma)
            res = reconstruct_bp(op, r)
            phi = to_dense(op)
            grad = 2 * phi.T @ (r.values - phi @ res.estimate)
            z = res.info["z"]
            tol = 1e-6 * (1 + np.abs(phi.T @ r.values).max())
            on = res.estimate != 0
            ok = (np.all(np.abs(grad) <= z + tol) and
                  np.all(np.abs(grad[on] - z * np.sign(res.estimate[on])) <= tol))
            cert_fail += not ok
            runs += 1
        worst = 0.0
        for i in range(20):
            g = np.random.default_rng(950 + i)
            n = int(g.integers(4, 11))
            m = int(g.integers(2, min(n, 7)))
            phi = (to_dense(build_circulant(make_seed(g, n), m, rng=g)) if i % 2
                   else g.standard_normal((m, n)) / np.sqrt(m))
            r = g.standard_normal(m)
            z = float(g.uniform(0.05, 1.0))
            res = reconstruct_bp(phi, r, BpConfig(z=z))
            oracle = exhaustive_minimum(phi, r, z)
            worst = max(worst, abs(res.info["objective"] - oracle) / max(1.0, oracle))
            grad = 2 * phi.T @ (r - phi @ res.estimate)
            tol = 1e-6 * (1 + np.abs(phi.T @ r).max())
            cert_fail += not np.all(np.abs(grad) <= z + tol)
            runs += 1
        return cert_fail, runs, worst

    (fails, runs, worst), t = timed(run)
    ok = fails == 0 and worst <= 1e-6 and t < 30
    verdict("C9 bp certificate", ok, f"{runs - fails}/{runs} certificates hold, oracle gap {worst:.1e}, {t:.1f}s")
    assert ok


def test_c10_determinism(verdict, tmp_path):
    def once(out):
        return subprocess.run([sys.executable, "-m", "circbayes.cli", "figs", "--which", "table1",
                               "--seed", "1", "--out", str(out)], capture_output=True, text=True)

    (p1, p2), t = timed(lambda: (once(tmp_path / "a"), once(tmp_path / "b")))
    paths = [tmp_path / d / "table1" / "results.csv" for d in ("a", "b")]
    exist = all(p.exists() for p in paths)
    same = exist and paths[0].read_bytes() == paths[1].read_bytes()
    rows = len(paths[0].read_text().splitlines()) - 1 if exist else 0
    ok = same and rows == 200 and p1.returncode in (0, 1) and p2.returncode in (0, 1)
    verdict("C10 determinism", ok, f"results.csv identical={same}, {rows} rows, exit codes "
                                   f"{p1.returncode}/{p2.returncode}, {t:.1f}s")
    assert ok, p1.stderr + p2.stderr
