"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import subprocess
import sys
import time

import numpy as np
import pytest

import conftest
from dl0cs import experiments as ex
from dl0cs.diffusion import AlgorithmConfig, propagate, run, trajectory
from dl0cs.experiments import ExperimentConfig
from dl0cs.network import (WeightMatrices, averaging_weights, complete_graph, grow_network,
                           metropolis_weights, path_graph, uniform_weights)
from dl0cs.regularizer import RegularizerParams, guard_rejects, stop_check, zero_attraction
from dl0cs.signal import make_instance, partition_uniform
from dl0cs.stability import (build_F_full, build_F_general, build_gamma, check_prop1, mu_bracket, mu_exact,
                             spectral_radius, verify_theorem1, verify_theorem2, verify_theorem3)
from oracles import l0_lms


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_c1_single_node_reduction():
    start = time.perf_counter()
    inst = make_instance(200, 40, 5, 1e-3, 1)
    part = partition_uniform(inst, 1)
    one = np.ones((1, 1))
    weights = WeightMatrices(one, one, one)
    mu, xi, delta, steps = 0.2, 1e-3, 10.0, 10_000
    ref = l0_lms(inst, mu, xi, delta, steps)
    worst = 0.0
    for variant in ("ATC", "CTA", "GENERAL"):
        cfg = AlgorithmConfig(variant, mu, RegularizerParams(xi=xi, delta=delta))
        path = trajectory(cfg, inst, part, weights, steps)
        worst = max(worst, np.abs(path[:, 0, :] - ref).max())
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-13 and elapsed < 5,
           f"max |w - w_ref| = {worst:.2e} over 3 x 10^4 steps in {elapsed:.1f}s")


def test_c2_reconstruction_success():
    start = time.perf_counter()
    cfg = ExperimentConfig(n=1000, m=200, k=25, sigma=3e-3, p=20, p_links=3, xi=5e-6, runs=50)
    weights = ex.build_weights(cfg)
    limit = mu_exact(weights.a2_matrix, weights.s_matrix, cfg.n, cfg.m).value
    res = ex.monte_carlo(cfg, weights)
    elapsed = time.perf_counter() - start
    ok = res.success_rate >= 0.95 and res.mu < limit and elapsed < 600
    report(2, ok, f"success {res.success_rate:.2f} at mu={res.mu:.3f} (limit {limit:.3f}), "
                  f"final {res.final_msd_db:.1f} dB, {elapsed:.0f}s")


def test_c3_diffusion_speedup():
    base = dict(n=1000, m=200, k=25, sigma=3e-3, xi=5e-6, runs=5, use_stop_criterion=False)
    net = ExperimentConfig(**base, p=20, p_links=3, max_iterations=4000)
    single = ExperimentConfig(**base, p=1, max_iterations=40_000)
    res_net, res_one = ex.monte_carlo(net), ex.monte_carlo(single)
    it_net, it_one = res_net.iterations_to(-20.0), res_one.iterations_to(-20.0)
    ok = it_net is not None and it_one is not None
    if ok:
        speedup = it_one / it_net
        scaled = (it_one * res_one.mu) / (it_net * res_net.mu)
        ok = speedup >= 3 and 0.5 <= scaled <= 2
        detail = (f"-20 dB at {it_net} (P=20, mu={res_net.mu:.3f}) vs {it_one} (P=1, mu={res_one.mu:.3f}); "
                  f"speedup {speedup:.1f}, mu-scaled ratio {scaled:.2f}")
    else:
        detail = f"-20 dB not reached (P=20: {it_net}, P=1: {it_one})"
    report(3, ok, detail)


def test_c4_step_size_bracket():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    n, m = 1000, 200
    worst = -np.inf
    for _ in range(20):
        p = int(rng.integers(2, 11))
        links = int(rng.integers(1, min(3, p - 1) + 1))
        topo = grow_network(p, links, int(rng.integers(0, 2**31)))
        s, a = metropolis_weights(topo), averaging_weights(topo)
        lo, hi = mu_bracket(s, n, m)
        val = mu_exact(a, s, n, m).value
        worst = max(worst, (lo - val) / hi, (val - hi) / hi)
    one = np.ones((1, 1))
    lo1, hi1 = mu_bracket(one, n, m)
    full_err = 0.0
    for p in range(2, 11):
        u = uniform_weights(p)
        full_err = max(full_err, abs(mu_exact(u, u, n, m).value / (2 * p * m / (p + n + 1)) - 1))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and lo1 == hi1 == 400 / 1002 and full_err <= 1e-3 and elapsed < 60
    report(4, ok, f"worst bracket excess {worst:.2e} x upper, P=1 bounds {lo1!r}, "
                  f"fully connected rel. error {full_err:.1e}, {elapsed:.1f}s")


def _period_gap(cfg, inst, part, w8, period, periods):
    w = np.zeros((part.node_count, inst.n))
    w = propagate(cfg, inst, part, w8, w, period)
    first = propagate(cfg, inst, part, w8, w, period, period + 1) - w
    w = propagate(cfg, inst, part, w8, w, period * periods, period + 1)
    last = propagate(cfg, inst, part, w8, w, period, 1) - w
    return np.linalg.norm(first), np.linalg.norm(last)


def test_c5_period_product_structure():
    start = time.perf_counter()
    rng = np.random.default_rng(77)
    failures = []
    for idx in range(20):
        n = int(rng.integers(12, 41))
        m = int(rng.integers(4, min(20, n - 2) + 1))
        p = int(rng.integers(1, 4))
        inst = make_instance(n, m, max(1, m // 4), 1e-3, 500 + idx)
        part = partition_uniform(inst, p)
        topo = complete_graph(p) if p < 3 else path_graph(3)
        w8 = WeightMatrices.for_variant("ATC", metropolis_weights(topo), averaging_weights(topo))
        # raise mu geometrically until the governing modulus passes 1.01
        mu, below = 0.05, None
        while True:
            g = build_gamma(inst, part, w8, mu)
            mod = g.governing_modulus(n, m)
            if mod > 1.01:
                break
            if mod < 0.999:
                below = (mu, g, mod)
            mu *= 1.1
        mu_ok, g_ok, mod_ok = below
        units = int(np.sum(np.abs(g_ok.eigen_moduli - 1) <= 1e-6))
        cfg = AlgorithmConfig("ATC", mu_ok, RegularizerParams(xi=0.0))
        periods = int(np.ceil(np.log(1e-4) / np.log(mod_ok)))
        d_first, d_last = _period_gap(cfg, inst, part, w8, g_ok.period, periods)
        converged = d_last <= 1e-3 * d_first
        horizon = (int(np.ceil(np.log(1e14) / np.log(mod))) + 50) * g.period
        res = run(AlgorithmConfig("ATC", mu, RegularizerParams(xi=0.0), max_iterations=horizon,
                                  use_stop_criterion=False), inst, part, w8, record_every=horizon)
        diverged = res.stop_reason == "divergence"
        if not (units >= n - m and check_prop1(g_ok, n, m) and converged and diverged):
            failures.append((n, m, p, units, converged, diverged))
    elapsed = time.perf_counter() - start
    report(5, not failures and elapsed < 120,
           f"{20 - len(failures)}/20 instances with >= N-M unit moduli, convergence below and "
           f"divergence above the flip, {elapsed:.1f}s")


def test_c6_theorem_suite():
    start = time.perf_counter()
    reps = [verify_theorem1(100, seed=6), verify_theorem2(100, seed=6), verify_theorem3(100, seed=6)]
    rng = np.random.default_rng(6)
    cross = 0.0
    for n in (1, 2, 3):
        for p in (1, 2, 3):
            topo = complete_graph(p) if p < 3 else path_graph(3)
            s, a = metropolis_weights(topo), averaging_weights(topo)
            mu = rng.uniform(0.1, 1.5, size=p)
            for a1, a2 in ((np.eye(p), a), (a, np.eye(p))):
                cross = max(cross, abs(spectral_radius(build_F_general(a1, s, a2, mu, n, 2))
                                       - spectral_radius(build_F_full(a1, s, a2, mu, n, 2))))
    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in reps) and cross <= 1e-8 and elapsed < 60
    summary = ", ".join(f"{r.name} {r.violations} violations" for r in reps)
    report(6, ok, f"{summary}; |rho(F) - rho(full F)| <= {cross:.1e}; {elapsed:.1f}s")


def test_c7_empirical_versus_theoretical_limit():
    start = time.perf_counter()
    cfg = ExperimentConfig(n=1000, m=200, k=25, sigma=3e-3, p=10, p_links=3, xi=5e-6,
                           use_stop_criterion=False, max_iterations=8000)
    weights = ex.build_weights(cfg)
    limit = mu_exact(weights.a2_matrix, weights.s_matrix, cfg.n, cfg.m).value
    with_reg = ex.empirical_mu_max(cfg, 3, (1.0, 8.0), "success")
    no_reg = ex.empirical_mu_max(cfg.replace(xi=0.0), 3, (0.5, 8.0), "no-divergence")
    elapsed = time.perf_counter() - start
    ok = (with_reg.found and no_reg.found and 0.3 * limit <= with_reg.value <= 1.5 * limit
          and no_reg.value <= 1.1 * limit and elapsed < 900)
    fmt = lambda r: f"{r.value:.3f}" if r.found else "not-found"
    report(7, ok, f"empirical {fmt(with_reg)} (xi=5e-6) and {fmt(no_reg)} (xi=0, no divergence) "
                  f"vs mu_exact {limit:.3f}; {elapsed:.0f}s")


def test_c8_regularizer_properties():
    start = time.perf_counter()
    delta = 10.0
    w = np.linspace(-0.3, 0.3, 6001)
    z = zero_attraction(w, delta)
    checks = [
        np.array_equal(zero_attraction(-w, delta), -z),
        np.abs(z).max() <= delta,
        not z[np.abs(w) > 1 / delta].any(),
        zero_attraction(np.array([0.1, -0.1, 0.05, -0.05, 0.0]), delta).tolist() == [0.0, 0.0, -5.0, 5.0, 0.0],
        stop_check([4] * 10, 10, 2) is True,
        stop_check(list(range(0, 30, 3)), 10, 2) is False,
        stop_check([5] * 8 + [9, 9], 10, 2) is False,
        not guard_rejects(100, 240, 21, 1000),
        not guard_rejects(100, 250, 21, 1000),
        guard_rejects(100, 260, 21, 1000),
        not guard_rejects(100, 260, 20, 1000),
    ]
    elapsed = time.perf_counter() - start
    report(8, all(checks) and elapsed < 1, f"{sum(checks)}/{len(checks)} exact checks in {elapsed:.2f}s")


def test_c9_parallel_determinism(tmp_path):
    outputs = []
    for workers in (1, 8):
        curve, runs = tmp_path / f"mc{workers}.csv", tmp_path / f"runs{workers}.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "dl0cs", "mc", "--n", "200", "--m", "40", "--k", "5", "--p", "4",
             "--runs", "8", "--workers", str(workers), "--max-iterations", "1500", "--no-stop",
             "--seed", "2024", "--out", str(curve), "--runs-out", str(runs),
             "--summary", str(tmp_path / f"s{workers}.json")],
            capture_output=True, text=True, check=False)
        assert proc.returncode == 0, proc.stderr
        outputs.append((curve.read_bytes(), runs.read_bytes()))
    same = outputs[0] == outputs[1]
    report(9, same, f"1 vs 8 workers: CSV outputs {'byte-identical' if same else 'differ'} "
                    f"({len(outputs[0][0])} + {len(outputs[0][1])} bytes)")
