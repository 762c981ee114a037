import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlspread.fields import PeriodicField, evaluate_fourier
from nlspread.kernel import TiltedDirection, periodize
from nlspread.linear_evolution import make_bundle, monodromy_apply, rk4_step, step_linear

from conftest import medium


@pytest.mark.parametrize("alpha,mu", [(-0.2, 0.0), (0.5, 1.0), (1.0, 2.0)])
def test_constants_grow_at_the_tilted_mass_rate(kernel, small_cell, alpha, mu):
    a = PeriodicField.constant(small_cell, alpha)
    b = make_bundle(kernel, TiltedDirection(1, mu), a)
    rate = periodize(kernel, mu, small_cell.p, small_cell.n_x).sum() - 1.0 + alpha
    out = monodromy_apply(np.ones(small_cell.n_x), b)
    assert np.allclose(out, np.exp(rate * small_cell.T), rtol=1e-9)


def test_step_count_respects_stability_bound(kernel, small_cell):
    a = PeriodicField.constant(small_cell, 1.0)
    b = make_bundle(kernel, TiltedDirection(1, 8.0), a)
    scale = 1.0 + periodize(kernel, 8.0, small_cell.p, small_cell.n_x).sum() + 1.0
    assert b.dt * scale < 0.5
    assert b.n_steps % small_cell.n_t == 0


def test_growth_shift_only_rescales(kernel, small_cell):
    a = medium("c", small_cell).a0
    u = np.cos(np.arange(small_cell.n_x)) + 2.0
    plain = make_bundle(kernel, [TiltedDirection(1, 1.5), TiltedDirection(-1, 0.5)], a)
    shifted = make_bundle(kernel, [TiltedDirection(1, 1.5), TiltedDirection(-1, 0.5)], a,
                          shift_growth=True)
    got = monodromy_apply(np.stack([u, u]), shifted) * np.exp(shifted.shifts * small_cell.T)[:, None]
    assert np.allclose(got, monodromy_apply(np.stack([u, u]), plain), rtol=1e-12)


def test_batched_and_dense_bundles_agree(kernel, small_cell):
    a = medium("b", small_cell).a0
    u = np.linspace(1, 2, small_cell.n_x)
    dense = monodromy_apply(u, make_bundle(kernel, TiltedDirection(1, 0.8), a))
    both = monodromy_apply(np.stack([u, u]),
                           make_bundle(kernel, [TiltedDirection(1, 0.8), TiltedDirection(1, 0.3)], a))
    assert np.allclose(both[0], dense, rtol=1e-12)


@given(seed=st.integers(0, 10 ** 6), mu=st.floats(0.0, 3.0))
def test_period_map_is_positive_and_linear(kernel, small_cell, seed, mu):
    rng = np.random.default_rng(seed)
    a = medium("c", small_cell).a0
    b = make_bundle(kernel, TiltedDirection(1, mu), a)
    u, v = rng.uniform(0, 1, (2, small_cell.n_x))
    Pu, Pv = monodromy_apply(u, b), monodromy_apply(v, b)
    assert np.all(Pu > 0)
    assert np.allclose(monodromy_apply(2.0 * u - 0.5 * v, b), 2.0 * Pu - 0.5 * Pv, rtol=1e-10, atol=1e-12)


def test_step_linear_chains_to_period_map(kernel, small_cell):
    a = medium("c", small_cell).a0
    b = make_bundle(kernel, TiltedDirection(1, 0.4), a)
    u = np.ones(small_cell.n_x)
    v = u.copy()
    for q in range(b.n_steps):
        v = step_linear(v, q, b)
    assert np.array_equal(v, monodromy_apply(u, b))


def test_rk4_step_is_fourth_order():
    rhs = lambda stage, u: -u
    errs = []
    for n in (10, 20):
        u = 1.0
        for _ in range(n):
            u = rk4_step(u, 1.0 / n, rhs)
        errs.append(abs(u - np.exp(-1.0)))
    assert 14 < errs[0] / errs[1] < 18


@given(seed=st.integers(0, 10 ** 6))
def test_period_map_preserves_order(kernel, small_cell, seed):
    rng = np.random.default_rng(seed)
    b = make_bundle(kernel, TiltedDirection(-1, 1.1), medium("c", small_cell).a0)
    u = rng.uniform(0, 1, small_cell.n_x)
    v = u + rng.uniform(0, 1, small_cell.n_x) * (rng.uniform(size=small_cell.n_x) < 0.5)
    assert np.all(monodromy_apply(u, b) <= monodromy_apply(v, b) + 1e-12)


def test_step_doubling_converges_at_fourth_order(kernel, small_cell):
    a = medium("c", small_cell).a0
    u = 1.0 + 0.5 * np.cos(2 * np.pi * small_cell.x / small_cell.p)
    td = TiltedDirection(1, 1.0)
    outs = [monodromy_apply(u, make_bundle(kernel, td, a, n_steps=n)) for n in (16, 32, 64)]
    e1 = np.max(np.abs(outs[0] - outs[1]))
    e2 = np.max(np.abs(outs[1] - outs[2]))
    assert e1 / e2 > 12
