"""Classical RK4 for the tilted linear equation on periodic fields.

    du/dt = C_mu u - u + a(t, x) u

``C_mu`` is the circulant built by :func:`nlspread.kernel.periodize`.  The
monodromy (period map) is the composition of all steps over ``[0, T]``.

Arrays may carry leading batch axes; a bundle may also hold a stack of
circulants (one per batch row) so that several tilts run in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .fields import PeriodicField
from .kernel import Kernel, TiltedDirection, circulant_matrix, periodize

STEP_BOUND = 0.5


class EvolutionError(RuntimeError):
    pass


@dataclass(eq=False)
class LinearOperatorBundle:
    """Everything one RK4 sweep needs: circulant(s), coefficient stages, step size.

    ``n_steps`` defaults to the field's ``n_t``; it is doubled until
    ``dt * (max|a| + max row sum of C + 1) < 0.5``.
    """

    circulant: np.ndarray
    a: PeriodicField
    tilts: tuple[TiltedDirection, ...]
    n_steps: int
    nodes: np.ndarray = field(repr=False)
    halves: np.ndarray = field(repr=False)
    shifts: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return self.a.cell.T / self.n_steps

    @property
    def td(self) -> TiltedDirection:
        return self.tilts[0]

    @property
    def batched(self) -> bool:
        return self.circulant.ndim == 3

    def __post_init__(self):
        if self.shifts is None:
            self.shifts = np.zeros(len(self.tilts))
        self.shifts = np.asarray(self.shifts, dtype=float)
        if self.batched:
            # stacked circulants are applied by FFT; gemv batches are slower here
            first_rows = self.circulant[:, 0, :]
            v = np.roll(first_rows[:, ::-1], 1, axis=-1)
            self._spectra = sfft.rfft(v, axis=-1) - self.shifts[:, None]
        else:
            self._shifted = self.circulant - self.shifts[0] * np.eye(self.circulant.shape[0])

    def apply_circulant(self, u: np.ndarray) -> np.ndarray:
        if self.batched:
            n = u.shape[-1]
            return sfft.irfft(sfft.rfft(u, axis=-1) * self._spectra, n=n, axis=-1)
        return u @ self._shifted.T

    def subset(self, rows) -> "LinearOperatorBundle":
        """Bundle restricted to some rows of a stacked circulant."""
        if not self.batched:
            return self
        rows = np.atleast_1d(rows)
        return LinearOperatorBundle(self.circulant[rows], self.a,
                                    tuple(self.tilts[i] for i in rows),
                                    self.n_steps, self.nodes, self.halves, self.shifts[rows])

    def operator(self, u: np.ndarray, k: int) -> np.ndarray:
        """``(C - shift - I + a(t_k)) u`` at grid time ``t_k``."""
        return self.apply_circulant(u) + (self.a.values[k % self.a.cell.n_t] - 1.0) * u


def make_bundle(k: Kernel, td: TiltedDirection | list[TiltedDirection], a: PeriodicField,
                n_steps: int | None = None, shift_growth: bool = False) -> LinearOperatorBundle:
    """Bundle for one tilt (dense circulant) or several (stacked, applied by FFT).

    With ``shift_growth`` each row's operator is shifted by the constant
    ``sum(w) - 1 + mean(a)``, which keeps period maps at large ``mu`` from
    overflowing; the period map is then ``exp(-shift T)`` times the true one.
    """
    tilts = tuple(td) if isinstance(td, (list, tuple)) else (td,)
    cell = a.cell
    weights = [periodize(k, t, cell.p, cell.n_x) for t in tilts]
    mats = [circulant_matrix(w) for w in weights]
    circ = mats[0] if len(mats) == 1 else np.stack(mats)
    n = cell.n_t if n_steps is None else int(n_steps)
    # row sums of a nonnegative circulant are its operator norm in sup norm
    scale = np.max(np.abs(a.values)) + max(w.sum() for w in weights) + 1.0
    while (cell.T / n) * scale >= STEP_BOUND:
        n *= 2
    nodes, halves = a.stage_values(n)
    shifts = None
    if shift_growth:
        shifts = np.array([w.sum() for w in weights]) - 1.0 + float(a.values.mean())
    return LinearOperatorBundle(circ, a, tilts, n, nodes - 1.0, halves - 1.0, shifts)


def _rk4(u, q, b: LinearOperatorBundle):
    h = b.dt
    d0 = b.nodes[q]
    dh = b.halves[q]
    d1 = b.nodes[(q + 1) % b.n_steps]
    C = b.apply_circulant
    k1 = C(u) + d0 * u
    y = u + (0.5 * h) * k1
    k2 = C(y) + dh * y
    y = u + (0.5 * h) * k2
    k3 = C(y) + dh * y
    y = u + h * k3
    k4 = C(y) + d1 * y
    return u + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def step_linear(u: np.ndarray, t_index: int, bundle: LinearOperatorBundle) -> np.ndarray:
    """One RK4 step from ``t_index * dt``."""
    out = _rk4(np.asarray(u, dtype=float), t_index % bundle.n_steps, bundle)
    if not np.all(np.isfinite(out)):
        raise EvolutionError(f"non-finite state after linear step {t_index} "
                             f"(dt={bundle.dt:.3g}, max|u0|={np.max(np.abs(u)):.3g})")
    return out


def monodromy_apply(u0: np.ndarray, bundle: LinearOperatorBundle, record: bool = False):
    """Evolve ``u0`` over one period.  With ``record`` also return the states at
    every step start time, shaped ``(n_steps, *u0.shape)``."""
    u = np.asarray(u0, dtype=float)
    states = np.empty((bundle.n_steps,) + u.shape) if record else None
    for q in range(bundle.n_steps):
        if record:
            states[q] = u
        u = _rk4(u, q, bundle)
    if not np.all(np.isfinite(u)):
        raise EvolutionError(f"non-finite state after one period (n_steps={bundle.n_steps})")
    return (u, states) if record else u


def rk4_step(u: np.ndarray, h: float, rhs) -> np.ndarray:
    """Classical RK4 for ``u' = rhs(stage, u)``, ``stage`` 0 (start), 1 (midpoint), 2 (end)."""
    k1 = rhs(0, u)
    k2 = rhs(1, u + (0.5 * h) * k1)
    k3 = rhs(1, u + (0.5 * h) * k2)
    k4 = rhs(2, u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
