import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlspread.fields import (FieldError, FitnessSpec, PeriodicCell, PeriodicField, check_hypotheses,
                             evaluate_fourier, fourier_project, load_field_csv, save_field_csv,
                             time_average)

modes = st.lists(st.tuples(st.integers(0, 4), st.integers(-4, 4), st.floats(0.01, 2.0),
                           st.floats(-3.0, 3.0)), min_size=1, max_size=3,
                 unique_by=lambda r: (r[0], r[1]))


def test_cell_geometry():
    c = PeriodicCell(2.0, 3.0, 64, 32)
    assert c.dt == 2.0 / 64 and c.dx == 3.0 / 32
    assert c.refined().n_t == 128 and c.refined().n_x == 64
    with pytest.raises(FieldError):
        PeriodicCell(0.0, 1.0)
    with pytest.raises(FieldError):
        PeriodicCell(1.0, 1.0, n_t=4)


def test_field_shape_and_finiteness_checked(small_cell):
    with pytest.raises(FieldError, match="shape"):
        PeriodicField(small_cell, np.zeros((3, 3)))
    bad = np.zeros((small_cell.n_t, small_cell.n_x))
    bad[0, 0] = np.nan
    with pytest.raises(FieldError, match="non-finite"):
        PeriodicField(small_cell, bad)


def test_nyquist_mode_rejected(small_cell):
    with pytest.raises(FieldError, match="Nyquist"):
        evaluate_fourier([(0, small_cell.n_x // 2, 1.0, 0.0)], small_cell)


@given(rows=modes)
def test_fourier_roundtrip(small_cell, rows):
    f = evaluate_fourier(rows, small_cell, 0.5)
    keys = sorted({(m, n) if (m, n) > (-m, -n) else (-m, -n) for m, n, _, _ in rows if (m, n) != (0, 0)})
    got = fourier_project(f, keys)
    back = evaluate_fourier([(m, n, amp, ph) for (m, n), (amp, ph) in zip(keys, got)], small_cell,
                            float(f.values.mean()))
    assert np.max(np.abs(back.values - f.values)) < 1e-10


@given(t=st.lists(st.floats(-3.0, 3.0), min_size=1, max_size=6), m=st.integers(0, 7))
def test_time_interpolation_exact_for_resolved_modes(t, m):
    c = PeriodicCell(1.0, 1.0, 16, 8)
    f = evaluate_fourier([(m, 1, 1.0, 0.4)], c, 0.5)
    t = np.array(t)
    expect = 0.5 + np.cos(2 * np.pi * m * t[:, None] + 2 * np.pi * c.x[None, :] + 0.4)
    assert np.allclose(f.values_at(t), expect, atol=1e-12)


def test_values_at_exact_on_grid_and_stage_values(small_cell):
    f = evaluate_fourier([(1, 1, 0.4, 0.3)], small_cell, 1.0)
    assert np.allclose(f.values_at(small_cell.t), f.values, atol=1e-14)
    nodes, halves = f.stage_values(small_cell.n_t // 2)
    assert np.allclose(nodes, f.values[::2], atol=1e-14)
    assert halves.shape == nodes.shape


@given(rows=modes)
def test_reflection_is_an_involution(small_cell, rows):
    f = evaluate_fourier(rows, small_cell)
    assert np.array_equal(f.reflected().reflected().values, f.values)
    assert f.reflected().values[0, 0] == f.values[0, 0]


def test_time_average_and_hypotheses(small_cell):
    a = evaluate_fourier([(1, 0, 0.5, 0.0), (0, 1, 0.2, 0.0)], small_cell, 1.0)
    avg = time_average(a)
    assert np.allclose(avg, 1.0 + 0.2 * np.cos(2 * np.pi * small_cell.x / small_cell.p), atol=1e-13)
    fs = FitnessSpec(a, PeriodicField.constant(small_cell, 2.0))
    rep = check_hypotheses(fs, 1.3)
    assert rep.h1 and rep.h2 and rep.ok and rep.b_min == 2.0
    assert not check_hypotheses(fs, -0.1).ok


def test_fitness_cells_must_match(small_cell):
    other = PeriodicCell(1.0, 2.0, 64, 64)
    with pytest.raises(FieldError):
        FitnessSpec(PeriodicField.constant(small_cell, 1.0), PeriodicField.constant(other, 1.0))


def test_csv_roundtrip(tmp_path, small_cell):
    f = evaluate_fourier([(2, 3, 0.7, 1.1)], small_cell, 0.2)
    save_field_csv(f, tmp_path / "f.csv")
    g = load_field_csv(tmp_path / "f.csv")
    assert g.cell == small_cell
    assert np.array_equal(g.values, f.values)
    (tmp_path / "bad.csv").write_text("1,2\n")
    with pytest.raises(FieldError, match="header"):
        load_field_csv(tmp_path / "bad.csv")
