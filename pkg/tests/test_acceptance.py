"""Acceptance criteria 1-11 at their stated tolerances.

Each test records one PASS/FAIL line (see ``record`` in conftest); the lines
are repeated in the terminal summary.  The grids are 128/256 (n_x/n_t, p = 2)
unless a criterion names another; wave runs take two sample steps per RK4 step.
"""

import numpy as np
import pytest

from nlspread.fields import FitnessSpec, PeriodicCell, PeriodicField, evaluate_fourier
from nlspread.frontsim import SimOptions, comparison_check, simulate_front, verify_spreading
from nlspread.kernel import TiltedDirection
from nlspread.spectrum import principal_eigen_many
from nlspread.speed import curve_for, derivative_diagnostics, spreading_speed
from nlspread.steady_state import steady_periodic
from nlspread.waves import (WaveOptions, build_bounds, floor_conditions, residual_check,
                            wave_checks, wave_iterate)

from conftest import khat_oracle, logistic_orbit, medium, record

MEDIA = ("a", "b", "c")
WAVE_OPTS = WaveOptions(step_stride=2)


def third_medium(cell):
    """A space-time medium with an oblique mode and a second spatial harmonic."""
    a = evaluate_fourier([(1, 1, 0.25, 0.3), (0, 2, 0.2, 1.0)], cell, 0.8)
    return FitnessSpec(a, PeriodicField.constant(cell, 1.0))


@pytest.fixture(scope="module")
def fine_cell():
    return PeriodicCell(1.0, 2.0, n_t=512, n_x=256)


@pytest.fixture(scope="module")
def orbits(kernel, cell):
    return {m: steady_periodic(medium(m, cell), kernel) for m in MEDIA}


@pytest.fixture(scope="module")
def speeds(kernel, cell):
    return {(m, xi): spreading_speed(kernel, xi, medium(m, cell).a0) for m in MEDIA for xi in (1, -1)}


@pytest.fixture(scope="module")
def waves(kernel, cell, orbits, speeds):
    """Lazily built wave bounds and profiles, shared by criteria 10 and 11."""
    cache = {}

    def get(m):
        if m not in cache:
            fs = medium(m, cell)
            sp = speeds[(m, 1)]
            wb = build_bounds(kernel, fs, orbits[m], sp, 1.5 * sp.c_star, WAVE_OPTS)
            cache[m] = (wb, wave_iterate(wb, WAVE_OPTS))
        return cache[m]

    return get


def test_criterion_01_constant_coefficient_eigenvalues(kernel, cell):
    worst = 0.0
    for alpha in (-0.2, 0.5, 1.0):
        a = PeriodicField.constant(cell, alpha)
        mus = (0.0, 0.5, 1.0, 2.0)
        res = principal_eigen_many(kernel, [TiltedDirection(1, m) for m in mus], a)
        for m, r in zip(mus, res):
            worst = max(worst, abs(r.lambda0 - (khat_oracle(m) - 1.0 + alpha)))
    ok = worst < 1e-6
    record(1, ok, f"max |lambda0 - (khat - 1 + alpha)| = {worst:.2e} (tol 1e-6)")
    assert ok


def test_criterion_02_shift_identity(kernel, cell):
    delta = 0.37
    worst = 0.0
    for fs in (medium("b", cell), medium("c", cell), third_medium(cell)):
        for xi in (1, -1):
            tds = [TiltedDirection(xi, m) for m in (0.0, 0.8, 1.7)]
            base = principal_eigen_many(kernel, tds, fs.a0)
            moved = principal_eigen_many(kernel, tds, fs.a0 + delta)
            for r0, r1 in zip(base, moved):
                worst = max(worst, abs(r1.lambda0 - r0.lambda0 - delta))
    ok = worst < 1e-9
    record(2, ok, f"max |shift - delta| = {worst:.2e} over 3 media, both directions (tol 1e-9)")
    assert ok


def test_criterion_03_convexity(kernel, cell, speeds):
    rng = np.random.default_rng(2024)
    violations, worst = 0, -np.inf
    for m in MEDIA:
        curve = curve_for(kernel, 1, medium(m, cell).a0)
        top = 2.0 * speeds[(m, 1)].mu_star
        m1, m2, w = rng.uniform(0, top, 30), rng.uniform(0, top, 30), rng.uniform(0, 1, 30)
        mix = w * m1 + (1 - w) * m2
        lam = curve.many(np.concatenate([m1, m2, mix]))
        l1, l2, lm = lam[:30], lam[30:60], lam[60:]
        excess = lm - (w * l1 + (1 - w) * l2)
        violations += int(np.sum(excess > 1e-8))
        worst = max(worst, float(excess.max()))
    ok = violations == 0
    record(3, ok, f"{violations} violations in 90 triples; max excess {worst:.2e} (tol 1e-8)")
    assert ok


def test_criterion_04_derivative_inequality(kernel, cell, speeds):
    margin, gap = np.inf, 0.0
    for m in MEDIA:
        for xi in (1, -1):
            a = medium(m, cell).a0
            rep = derivative_diagnostics(kernel, xi, a, speeds[(m, xi)])
            margin = min(margin, min(v for _, v in rep.margins))
            gap = max(gap, rep.optimality_gap)
    ok = margin > 0 and gap < 1e-4
    record(4, ok, f"min lambda/mu - lambda' = {margin:.3e} (> 0); "
                  f"max |mu* lambda' - lambda| = {gap:.2e} (tol 1e-4)")
    assert ok


@pytest.mark.slow
def test_criterion_05_simulated_speed(kernel, fine_cell):
    opts = SimOptions(x_left_cells=10, x_right_cells=45, n_periods=100, step_stride=4)
    worst, lines = 0.0, []
    for m in MEDIA:
        fs = medium(m, fine_cell)
        orbit = steady_periodic(fs, kernel)
        for xi in (1, -1):
            c_star = spreading_speed(kernel, xi, fs.a0).c_star
            fit = simulate_front(fs, kernel, orbit, xi, opts).fit
            err = abs(fit.speed - c_star) / c_star
            worst = max(worst, err)
            lines.append(f"{m}{xi:+d}: {fit.speed:.4f} vs {c_star:.4f}")
    ok = worst < 0.05
    record(5, ok, f"max relative error {worst:.3%} (tol 5%); " + ", ".join(lines))
    assert ok


@pytest.mark.slow
def test_criterion_06_spreading_dichotomy(kernel, cell, orbits, speeds):
    lead, behind, lines = 0.0, 0.0, []
    ok = True
    for m in MEDIA:
        rep = verify_spreading(medium(m, cell), kernel, orbits[m], speeds[(m, 1)].c_star,
                               speeds[(m, -1)].c_star, n_periods=60, final_periods=10,
                               step_stride=2)
        ok = ok and rep.ok
        lead = max(lead, max(rep.leading_max.values()))
        behind = max(behind, max(rep.behind_deviation.values()))
        lines.append(f"{m}: lead {max(rep.leading_max.values()):.1e}, "
                     f"behind {max(rep.behind_deviation.values()):.1e}")
    record(6, ok, f"max leading u at 1.2c* = {lead:.2e} (tol 1e-3); max |u - u*| behind 0.8c* = "
                  f"{behind:.2e} (tol 5e-2); " + ", ".join(lines))
    assert ok


def test_criterion_07_comparison_principle(kernel, cell, orbits):
    rep = comparison_check(medium("c", cell), kernel, orbits["c"], n_pairs=50, n_periods=5, seed=7)
    record(7, rep.ok, f"worst order reversal {rep.worst_violation:.2e} over 50 pairs, 5 periods "
                      "(tol 1e-10)")
    assert rep.ok


def test_criterion_08_steady_state(kernel, cell, orbits):
    seeds = max(orbits[m].seeds_agreement for m in MEDIA)
    flat = float(np.max(np.abs(orbits["a"].u_star.values - 1.0)))
    a = evaluate_fourier([(1, 0, 0.5, -np.pi / 2)], cell, 1.0)
    fs = FitnessSpec(a, PeriodicField.constant(cell, 1.0))
    got = steady_periodic(fs, kernel).u_star.values
    expect = logistic_orbit(lambda t: 1.0 + 0.5 * np.sin(2 * np.pi * t), cell.t)
    shoot = float(np.max(np.abs(got - expect[:, None])))
    ok = seeds < 1e-8 and flat < 1e-9 and shoot < 1e-6
    record(8, ok, f"seed agreement {seeds:.1e} (1e-8); |u* - 1| {flat:.1e} (1e-9); "
                  f"logistic vs shooting {shoot:.1e} (1e-6)")
    assert ok


def test_criterion_09_residual_signs(kernel, cell, orbits, speeds):
    sup_min, sub_max, floors, lines = np.inf, -np.inf, True, []
    cases = [(m, 1) for m in MEDIA] + [("c", -1)]
    for m, xi in cases:
        sp = speeds[(m, xi)]
        wb = build_bounds(kernel, medium(m, cell), orbits[m], sp, 1.5 * sp.c_star, WAVE_OPTS)
        vbar, ubar = residual_check(wb, "vbar"), residual_check(wb, "ubar")
        vlow = residual_check(wb, "vlow")
        fl = floor_conditions(wb)
        sup_min = min(sup_min, vbar, ubar)
        sub_max = max(sub_max, vlow)
        floors = floors and fl.ok
        lines.append(f"{m}{xi:+d}: d*={wb.d:g} b={wb.b:.3g} M={wb.M:.3g}")
    ok = sup_min >= -1e-9 and sub_max <= 1e-8 and floors
    record(9, ok, f"min super defect {sup_min:.2e} (>= -1e-9); max sub defect {sub_max:.2e} "
                  f"(<= 1e-8); floor conditions {'hold' if floors else 'FAIL'}; " + ", ".join(lines))
    assert ok


@pytest.mark.slow
def test_criterion_10_wave_construction(waves):
    ok, lines = True, []
    for m in MEDIA:
        wb, wp = waves(m)
        rep = wave_checks(wp, wb)
        ok = ok and rep.ok
        lines.append(f"{m}: mono {rep.monotone_violation:.1e}, gap {rep.gap:.1e}, "
                     f"left {rep.left_limit_error:.1e}, ratio [{rep.decay_ratio_min:.4f}, "
                     f"{rep.decay_ratio_max:.4f}], residual {rep.entire_residual:.1e}")
    record(10, ok, "; ".join(lines))
    assert ok


@pytest.mark.slow
def test_criterion_11_grid_convergence(kernel, cell, fine_cell, waves):
    out = {}
    for name, c in (("coarse", cell), ("fine", fine_cell)):
        fs = medium("b", c)
        lam = principal_eigen_many(kernel, [TiltedDirection(1, m) for m in (0.0, 1.0)], fs.a0)
        out[name] = {"lam": np.array([r.lambda0 for r in lam]),
                     "speed": spreading_speed(kernel, 1, fs.a0)}
    out["coarse"]["gap"] = waves("b")[1].gap
    fs = medium("b", fine_cell)
    sp = out["fine"]["speed"]
    wb = build_bounds(kernel, fs, steady_periodic(fs, kernel), sp, 1.5 * sp.c_star, WAVE_OPTS)
    out["fine"]["gap"] = wave_iterate(wb, WAVE_OPTS).gap
    d_lam = float(np.max(np.abs(out["fine"]["lam"] - out["coarse"]["lam"])))
    d_c = abs(out["fine"]["speed"].c_star - out["coarse"]["speed"].c_star)
    ratio = out["fine"]["gap"] / out["coarse"]["gap"]
    ok = d_lam < 1e-4 and d_c < 1e-4 and 0.5 < ratio < 2.0
    record(11, ok, f"|d lambda0| {d_lam:.1e}, |d c*| {d_c:.1e} (tol 1e-4); gap "
                   f"{out['coarse']['gap']:.2e} -> {out['fine']['gap']:.2e} (ratio {ratio:.2f}, "
                   "within 2x)")
    assert ok
