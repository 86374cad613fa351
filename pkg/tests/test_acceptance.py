"""Acceptance criteria, one test each.

Every test records a ``[PASS]``/``[FAIL]`` line that is printed at once
and again in the terminal summary.  Run directly with
``python3 tests/test_acceptance.py`` or through pytest.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

import conftest
from conftest import random_series, tick3_series
from marketmoments.econ_media import (MediaGrid, TransitionMatrix, make_state, max_stable_dt,
                                      step_continuity, total_mass, velocity_from_transition)
from marketmoments.moments import WindowConfig, compute_moments, write_moment_csv
from marketmoments.prob_approx import (GridSpec, build_charfn, charfn_to_density, density_from_moments,
                                       density_moments, gaussian_density, moments_to_cumulants)
from marketmoments.risk_domain import (AggregationConfig, aggregate, assign_cells, collective_return,
                                       sum_over_cells)
from marketmoments.trade_data import RiskVector, TickSeries, to_dense

WIDE = GridSpec(8193, 64)


def record(n, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] AC{n} {title}: {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def rel(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.abs(np.asarray(b))))


def test_ac01_moment_identities():
    rng = np.random.default_rng(1)
    worst_p, worst_r, windows = 0.0, 0.0, 0
    for k in range(100):
        N = (8, 64, 512)[k % 3]
        s = random_series(rng, 1, 4 * N + 7)
        for ms in compute_moments(s, WindowConfig(N, 5, 4)):
            worst_p = max(worst_p, rel(ms.p * ms.U, ms.C))
            if ms.r is not None:
                worst_r = max(worst_r, rel(ms.r * ms.S, ms.C))
            windows += 1
    ok = worst_p <= 1e-9 and worst_r <= 1e-9 and windows >= 400
    record(1, "moment identities", ok,
           f"{windows} windows, max rel C-pU {worst_p:.2e}, C-rS {worst_r:.2e} (tol 1e-9)")


def test_ac02_vwap():
    rng = np.random.default_rng(2)
    fixtures = [(tick3_series(), 3), (random_series(rng, 4, 200), 50),
                (random_series(rng, 2, 1000, unit_volume=True), 128),
                (TickSeries.from_arrays([0, 1, 2, 3], ["A"] * 4, [1e-3, 5e4, 7.0, 2.0],
                                        [1e6, 1e-3, 3.0, 1.0]), 4)]
    worst = 0.0
    for s, N in fixtures:
        d = to_dense(s)
        row = {q: i for i, q in enumerate(d.companies)}
        for ms in compute_moments(s, WindowConfig(N, 0, 1)):
            sl = slice(ms.start, ms.start + N)
            i = row[ms.company]
            vwap = math.fsum(d.price[i, sl] * d.volume[i, sl]) / math.fsum(d.volume[i, sl])
            worst = max(worst, abs(ms.p[0] - vwap) / vwap)
    record(2, "VWAP equality", worst <= 1e-12, f"max rel deviation {worst:.2e} (tol 1e-12)")


def test_ac03_market_vs_frequency():
    (ms,) = compute_moments(tick3_series(), WindowConfig(3, 0, 2))
    fixed = ms.p[1] == pytest.approx(28 / 3, rel=1e-15) and ms.pi[1] == pytest.approx(29 / 3, rel=1e-15)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        for ms2 in compute_moments(random_series(rng, 3, 96, unit_volume=True), WindowConfig(32, 0, 4)):
            worst = max(worst, rel(ms2.p, ms2.pi))
    record(3, "market vs frequency moments", fixed and worst <= 1e-12,
           f"p(2)={float(ms.p[1])!r}, pi(2)={float(ms.pi[1])!r}; unit-volume max rel gap {worst:.2e} (tol 1e-12)")


def test_ac04_markowitz():
    rng = np.random.default_rng(4)
    worst, cells_seen = 0.0, 0
    while cells_seen < 100:
        Q = int(rng.integers(3, 9))
        s = random_series(rng, Q, 64)
        d = to_dense(s)
        risks = {q: RiskVector(q, rng.uniform(size=(1, 1))) for q in d.companies}
        grid = assign_cells(risks, 0.5, n_max=1)
        xi = int(rng.integers(1, 8))
        cfg = AggregationConfig(8, k_x=2, xi_steps=xi, n_max=1)
        cells, _ = aggregate(d, grid, cfg)
        for cell in grid.occupied(1):
            members = [d.companies.index(q) for q in grid.members(cell, 1)]
            if len(members) < 2:
                continue
            cells_seen += 1
            for cm in cells:
                if cm.cell != cell or not cm.return_eligible:
                    continue
                sold = bought = Fraction(0)
                for q in members:
                    for i in range(cm.start, cm.start + cm.length):
                        u = Fraction(d.volume[q, i])
                        sold += Fraction(d.price[q, i]) * u
                        bought += Fraction(d.price[q, i - xi]) * u
                direct = float(sold / bought)
                worst = max(worst, abs(collective_return(cm)[0] - direct) / direct)
    record(4, "portfolio-return oracle", worst <= 1e-12,
           f"{cells_seen} multi-company cells, max rel deviation {worst:.2e} (tol 1e-12)")


def test_ac05_partition_additivity():
    rng = np.random.default_rng(5)
    s = to_dense(random_series(rng, 40, 96))
    risks = {q: RiskVector(q, rng.uniform(size=(3, 2))) for q in s.companies}
    cfg = AggregationConfig(8, k_x=2, k_m=3, xi_steps=4, n_max=3)
    mismatches, checks = 0, 0
    for d in (1.0, 0.5, 0.1):
        cells, market = aggregate(s, assign_cells(risks, d), cfg)
        for mk in market:
            # a market window spans k_m cell windows
            same = [c for c in cells if c.start >= mk.start and c.start < mk.start + mk.length]
            for kind, total in (("C", mk.C_sum), ("U", mk.U_sum), ("S", mk.S_sum)):
                if kind == "S" and not mk.return_eligible:
                    continue
                for m in (1, 2, 3):
                    checks += 1
                    mismatches += sum_over_cells(same, kind, m) != total[m - 1]
    record(5, "partition additivity", mismatches == 0 and checks > 0,
           f"{checks} market sums across d in (1, 0.5, 0.1), {mismatches} not bit-identical")


def test_ac06_cumulant_fixture():
    (ms,) = compute_moments(tick3_series(), WindowConfig(3, 0, 3))
    a = moments_to_cumulants(ms.p)
    err2, err3 = abs(a[1] - 1 / 3), abs(a[2] + 1.2)
    record(6, "cumulant fixture", err2 <= 1e-12 and err3 <= 1e-12,
           f"a2={float(a[1])!r} (err {err2:.1e}), a3={float(a[2])!r} (err {err3:.1e}) (tol 1e-12)")


def test_ac07_density_round_trip():
    grid = GridSpec(4097, 8)
    dg = charfn_to_density(build_charfn([3.0, 1 / 3]), grid)
    gauss = float(np.max(np.abs(dg.eta - gaussian_density(3.0, 1 / 3, grid).eta)))
    fx = density_from_moments([3.0, 28 / 3, 28.8], b=0.01, two_k=4, grid=WIDE,
                              negativity_budget=math.inf)
    mom = max(fx.info["moment_errors"])
    norm = abs(1 - fx.normalization)
    ok = gauss <= 1e-8 and mom <= 1e-4 and norm <= 1e-6
    record(7, "density round trip", ok,
           f"n=2 max pointwise gap {gauss:.1e} (tol 1e-8); n=3 fixture moment err {mom:.1e} "
           f"(tol 1e-4), |1-norm| {norm:.1e} (tol 1e-6), negative mass {fx.negative_mass:.3f}")


def test_ac08_regularizer_neutrality():
    cases = [([3.0, 28 / 3, 28.8], 0.01, 4)]
    # a near-normal n=4 input with a small default-style weight
    mu4 = [1.0, 1.5, 2.6, 5.3]
    sigma = math.sqrt(mu4[1] - mu4[0] ** 2)
    cases.append((mu4, 1e-4 * sigma ** 6 * 720 / (6 * 8), 6))
    worst = 0.0
    for mu, b, two_k in cases:
        one = density_from_moments(mu, b=b, two_k=two_k, grid=WIDE, negativity_budget=math.inf)
        two = density_from_moments(mu, b=2 * b, two_k=two_k + 2, grid=WIDE, negativity_budget=math.inf)
        for m in range(1, len(mu) + 1):
            x, y = density_moments(one, m), density_moments(two, m)
            worst = max(worst, abs(x - y) / abs(x))
    record(8, "regularizer neutrality", worst < 1e-4,
           f"max rel change in recovered moments {worst:.1e} (tol 1e-4)")


def _advect(n, v=0.1, t_end=2.0):
    grid = MediaGrid(n)
    x = grid.centers
    bump = lambda c: np.exp(-0.5 * ((x - c) / 0.05) ** 2)
    s = make_state(grid, bump(0.3), v)
    steps = int(round(t_end / (0.5 * grid.dx / v)))
    for _ in range(steps):
        s = step_continuity(s, dt=t_end / steps)
    return float(np.sum(np.abs(s.C[0] - bump(0.3 + v * t_end))) * grid.dx)


def test_ac09_pde_conservation_and_order():
    grid = MediaGrid(200)
    x = grid.centers
    s = make_state(grid, np.exp(-0.5 * ((x - 0.4) / 0.1) ** 2), 0.3 * np.sin(2 * np.pi * x))
    dt = 0.8 * max_stable_dt(s.v, grid.dx)
    m0 = total_mass(s)[0]
    for _ in range(1000):
        s = step_continuity(s, dt=dt)
    drift = abs(total_mass(s)[0] - m0) / m0
    errs = [_advect(n) for n in (256, 512)]
    t0 = time.perf_counter()
    errs.append(_advect(1024))
    elapsed = time.perf_counter() - t0
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = drift < 1e-8 and all(1.6 <= r <= 2.4 for r in ratios) and elapsed < 10
    record(9, "PDE conservation and order", ok,
           f"mass drift {drift:.1e} over 1000 steps (tol 1e-8); L1 ratios "
           f"{ratios[0]:.3f}, {ratios[1]:.3f} (want 2 +-20%); 1024 cells in {elapsed:.2f} s (limit 10)")


def test_ac10_transition_velocities():
    got = [velocity_from_transition(TransitionMatrix([0.0, 0.5, 1.0], np.eye(3))),
           velocity_from_transition(TransitionMatrix([0.0, 1.0], np.full((2, 2), 0.5))),
           velocity_from_transition(TransitionMatrix([0.0, 1.0], [[0.9, 0.1], [0.2, 0.8]], T=2.0))]
    want = [[0, 0, 0], [0.5, -0.5], [0.05, -0.1]]
    worst = max(float(np.max(np.abs(g - w))) for g, w in zip(got, want))
    record(10, "transition velocities", worst <= 1e-15,
           f"max abs error {worst:.1e} (tol 1e-15)")


def test_ac11_throughput():
    rng = np.random.default_rng(11)
    s = random_series(rng, 10, 100_000)
    cfg = WindowConfig(1000, 10, 4)
    t0 = time.perf_counter()
    serial = compute_moments(s, cfg)
    elapsed = time.perf_counter() - t0
    pooled = compute_moments(s, cfg, workers=4)
    same = write_moment_csv(serial) == write_moment_csv(pooled)
    record(11, "throughput", elapsed < 5 and same and len(s) == 10 ** 6,
           f"{len(s)} ticks in {elapsed:.2f} s single-threaded (limit 5); "
           f"workers 1 vs 4 identical: {same}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
