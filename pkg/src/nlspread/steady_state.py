"""The positive time-space periodic state ``u*`` of the nonlinear equation.

    u_t = K u - u + u (a0 - b u)

``u*`` is the attracting fixed point of the stroboscopic period map on the
periodic cell; two seeds (one above, one far below) are iterated in lockstep
and must land on the same orbit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .fields import FitnessSpec, PeriodicField
from .kernel import Kernel, TiltedDirection, circulant_matrix, periodize
from .linear_evolution import STEP_BOUND, rk4_step
from .spectrum import principal_eigen

log = logging.getLogger(__name__)


class SteadyStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class SteadyOptions:
    tol: float = 1e-10
    max_periods: int = 10000
    low_seed_fraction: float = 0.01


@dataclass(eq=False)
class PeriodicOrbit:
    u_star: PeriodicField
    period_map_residual: float
    seeds_agreement: float
    periods: int
    lambda0: float

    def summary(self) -> dict:
        return {"min_u_star": self.u_star.min(), "max_u_star": self.u_star.max(),
                "period_map_residual": self.period_map_residual,
                "seeds_agreement": self.seeds_agreement, "periods": self.periods,
                "lambda0_a0": self.lambda0}


class NonlinearCellMap:
    """RK4 period map of the nonlinear equation on periodic cell samples.

    Rows of the state are independent solutions.  ``n_steps`` starts at the
    cell's ``n_t`` and doubles until ``dt (max|a0| + 2 + max(b) u_max) < 0.5``.
    """

    def __init__(self, fs: FitnessSpec, k: Kernel, u_max: float):
        cell = fs.cell
        self.cell = cell
        self.C = circulant_matrix(periodize(k, TiltedDirection(1, 0.0), cell.p, cell.n_x))
        n = cell.n_t
        scale = np.max(np.abs(fs.a0.values)) + 2.0 + fs.b.max() * max(u_max, 1.0)
        while (cell.T / n) * scale >= STEP_BOUND:
            n *= 2
        self.n_steps = n
        self.h = cell.T / n
        self.a_nodes, self.a_halves = fs.a0.stage_values(n)
        self.b_nodes, self.b_halves = fs.b.stage_values(n)

    def _rhs(self, q):
        nxt = (q + 1) % self.n_steps
        stages = ((self.a_nodes[q], self.b_nodes[q]), (self.a_halves[q], self.b_halves[q]),
                  (self.a_nodes[nxt], self.b_nodes[nxt]))

        def rhs(stage, u):
            a, b = stages[stage]
            return u @ self.C.T - u + u * (a - b * u)

        return rhs

    def period(self, u: np.ndarray, record: bool = False):
        states = np.empty((self.n_steps,) + u.shape) if record else None
        for q in range(self.n_steps):
            if record:
                states[q] = u
            u = rk4_step(u, self.h, self._rhs(q))
        if not np.all(np.isfinite(u)):
            raise SteadyStateError("nonlinear period map diverged (non-finite state)")
        return (u, states) if record else u


def steady_periodic(fs: FitnessSpec, k: Kernel, opts: SteadyOptions = SteadyOptions(),
                    lambda0: float | None = None) -> PeriodicOrbit:
    """Iterate the period map from a high and a low constant seed until both settle."""
    if lambda0 is None:
        lambda0 = principal_eigen(k, TiltedDirection(1, 0.0), fs.a0).lambda0
    if not lambda0 > 0:
        raise SteadyStateError(f"zero state not linearly unstable (lambda0(a0)={lambda0:.6g} <= 0)")
    if not fs.b_min > 0:
        raise SteadyStateError("saturation must be strictly positive")
    cell = fs.cell
    top = fs.a0.max() / fs.b_min
    seeds = np.array([top, opts.low_seed_fraction * fs.a0.max() / fs.b.max()])
    u = np.repeat(seeds[:, None], cell.n_x, axis=1)
    cmap = NonlinearCellMap(fs, k, top)
    change = np.inf
    for n in range(1, opts.max_periods + 1):
        v = cmap.period(u)
        change = float(np.max(np.abs(v - u)))
        u = v
        if np.max(u) < 1e-12:
            raise SteadyStateError("solution collapsed to zero; growth condition fails numerically")
        if change < opts.tol:
            break
    else:
        raise SteadyStateError(f"period map did not settle in {opts.max_periods} periods "
                               f"(last change {change:.3g})")
    end, states = cmap.period(u, record=True)
    stride = cmap.n_steps // cell.n_t
    orbit = states[::stride]                      # (n_t, 2, n_x)
    if not np.min(orbit[:, 0]) > 0:
        raise SteadyStateError("periodic state is not positive")
    residual = float(np.max(np.abs(end[0] - u[0])))
    agreement = float(np.max(np.abs(orbit[:, 0] - orbit[:, 1])))
    log.info("steady state after %d periods: residual %.2e, seed agreement %.2e",
             n, residual, agreement)
    return PeriodicOrbit(PeriodicField(cell, orbit[:, 0]), residual, agreement, n, float(lambda0))
