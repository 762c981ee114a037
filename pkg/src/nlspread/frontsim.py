"""Direct simulation of the nonlinear equation on a truncated line.

The line grid is aligned with the periodic cell grid (``dx = p/n_x`` and
``x_L`` a multiple of ``dx``), so medium coefficients and ``u*`` are read off
the cell by index.  ``r0`` worth of pad nodes on each side stands in for the
rest of the line: ``u*`` on the left (or 0 for compact data) and 0 on the
right, refreshed at every RK stage.

Spreading to the left (direction -1) is simulated as spreading to the right in
the reflected medium.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import FitnessSpec, PeriodicField
from .kernel import Kernel, LineConvolver
from .linear_evolution import rk4_step
from .steady_state import PeriodicOrbit

log = logging.getLogger(__name__)

FRONT_KINDS = ("step", "exponential", "bump")


class SimulationError(RuntimeError):
    def __init__(self, msg, state=None, dump_path=None):
        super().__init__(msg if dump_path is None else f"{msg} (state dumped to {dump_path})")
        self.state = state
        self.dump_path = dump_path


@dataclass(frozen=True)
class SimOptions:
    x_left_cells: int = 10
    x_right_cells: int = 80
    n_periods: int = 100
    burn_in: float = 0.3
    theta: float = 0.5
    step_stride: int = 1          # time step is step_stride * T / n_t
    samples_per_period: int = 1
    dump_dir: str | None = None


@dataclass(eq=False)
class LineState:
    """Interior values on ``x_L + i dx``; ``step`` counts RK steps from ``t = 0``."""

    i_left: int                   # x_L / dx
    dx: float
    values: np.ndarray
    step: int = 0
    left_pad: str = "ustar"       # "ustar" or "zero"; the right pad is always zero

    @property
    def x_left(self) -> float:
        return self.i_left * self.dx

    @property
    def x(self) -> np.ndarray:
        return self.dx * (self.i_left + np.arange(self.values.shape[-1]))

    @property
    def x_right(self) -> float:
        return self.dx * (self.i_left + self.values.shape[-1] - 1)

    def copy(self) -> "LineState":
        return LineState(self.i_left, self.dx, self.values.copy(), self.step, self.left_pad)


class LineSimulator:
    """Holds the stage coefficients for RK4 steps of size ``stride * T / n_t``."""

    def __init__(self, fs: FitnessSpec, k: Kernel, orbit: PeriodicOrbit, stride: int = 1):
        cell = fs.cell
        if cell.n_t % stride:
            raise SimulationError(f"step stride {stride} does not divide n_t={cell.n_t}")
        self.cell = cell
        self.fs = fs
        self.orbit = orbit
        self.n_steps = cell.n_t // stride
        self.h = cell.T / self.n_steps
        self.conv = LineConvolver(k, cell.dx)
        self.pad = self.conv.half_width
        a_n, a_h = fs.a0.stage_values(self.n_steps)
        b_n, b_h = fs.b.stage_values(self.n_steps)
        u_n, u_h = orbit.u_star.stage_values(self.n_steps)
        self._a = (a_n, a_h)
        self._b = (b_n, b_h)
        self._u = (u_n, u_h)
        self.ceiling = orbit.u_star.max() + 1.0
        self._idx_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
        self.dump_dir: str | None = None

    @property
    def dt(self) -> float:
        return self.h

    def _indices(self, i_left: int, n: int):
        key = (i_left, n)
        if key not in self._idx_cache:
            nx = self.cell.n_x
            interior = (i_left + np.arange(n)) % nx
            left = (i_left - self.pad + np.arange(self.pad)) % nx
            self._idx_cache[key] = (interior, left)
        return self._idx_cache[key]

    def _stage(self, q: int, stage: int):
        """(row selector into node/half tables) for RK stage 0, 1, 2 of step ``q``."""
        if stage == 0:
            return 0, q % self.n_steps
        if stage == 1:
            return 1, q % self.n_steps
        return 0, (q + 1) % self.n_steps

    def rhs_factory(self, state: LineState):
        interior, left = self._indices(state.i_left, state.values.shape[-1])
        zero_left = state.left_pad == "zero"
        q = state.step
        lead = state.values.shape[:-1]
        right = np.zeros(lead + (self.pad,))

        def rhs(stage, u):
            which, row = self._stage(q, stage)
            a = self._a[which][row][interior]
            b = self._b[which][row][interior]
            if zero_left:
                lp = right
            else:
                lp = np.broadcast_to(self._u[which][row][left], lead + (self.pad,))
            ext = np.concatenate([lp, u, right], axis=-1)
            return self.conv(ext) - u + u * (a - b * u)

        return rhs

    def step(self, state: LineState) -> LineState:
        new = rk4_step(state.values, self.h, self.rhs_factory(state))
        out = LineState(state.i_left, state.dx, new, state.step + 1, state.left_pad)
        if not np.all(np.isfinite(new)) or np.max(new) > self.ceiling:
            raise self._abort(out, "solution left the invariant region "
                                   f"(max {np.nanmax(new):.4g} > {self.ceiling:.4g})")
        return out

    def _abort(self, state: LineState, msg: str) -> SimulationError:
        path = None
        if self.dump_dir:
            path = Path(self.dump_dir) / f"abort_step{state.step}.npz"
            np.savez(path, x=state.x, values=state.values, step=state.step)
        return SimulationError(f"{msg} at t={state.step * self.h:.6g}", state, path)

    def time(self, state: LineState) -> float:
        return state.step * self.h

    def u_star_on(self, state: LineState, t: float) -> np.ndarray:
        interior, _ = self._indices(state.i_left, state.values.shape[-1])
        return self.orbit.u_star.values_at(np.array([t]))[0][interior]


def step_nonlinear(state: LineState, sim: LineSimulator) -> LineState:
    """One RK4 step of the nonlinear equation with pads refreshed at every stage."""
    return sim.step(state)


def line_grid(cell, x_left: float, x_right: float) -> tuple[int, int]:
    """Cell-aligned node range: (index of x_L, number of interior nodes)."""
    i0 = int(np.floor(x_left / cell.dx + 1e-9))
    i1 = int(np.ceil(x_right / cell.dx - 1e-9))
    return i0, i1 - i0 + 1


def make_front_data(kind: str, orbit: PeriodicOrbit, x_left: float, x_right: float,
                    x0: float = 0.0, mu: float = 1.0, height: float = 0.5,
                    half_width: float | None = None) -> LineState:
    """Initial data on the cell-aligned grid covering ``[x_left, x_right]``.

    ``step``: ``u*(0, x)`` for ``x <= x0``, else 0.  ``exponential``:
    ``min(u*(0, x), exp(-mu (x - x0)))``.  ``bump``: ``height cos^2`` profile
    supported in ``|x - x0| < half_width`` (default one cell period), with zero
    pads on both sides.
    """
    if kind not in FRONT_KINDS:
        raise SimulationError(f"unknown front data kind {kind!r}; expected one of {FRONT_KINDS}")
    cell = orbit.u_star.cell
    i0, n = line_grid(cell, x_left, x_right)
    x = cell.dx * (i0 + np.arange(n))
    ustar0 = orbit.u_star.values[0][(i0 + np.arange(n)) % cell.n_x]
    if kind == "step":
        vals = np.where(x <= x0 + 1e-12, ustar0, 0.0)
        return LineState(i0, cell.dx, vals)
    if kind == "exponential":
        vals = np.minimum(ustar0, np.exp(-mu * (x - x0)))
        return LineState(i0, cell.dx, vals)
    w = cell.p if half_width is None else float(half_width)
    s = (x - x0) / w
    vals = np.where(np.abs(s) < 1.0, height * np.cos(0.5 * np.pi * s) ** 2, 0.0)
    return LineState(i0, cell.dx, vals, left_pad="zero")


def front_position(state: LineState, threshold: float) -> float:
    """Rightmost linearly interpolated crossing of ``threshold``.

    Returns ``x_L`` when nothing reaches the threshold and ``x_R`` when the
    last node is still above it.
    """
    u = state.values
    above = np.nonzero(u >= threshold)[0]
    if above.size == 0:
        return state.x_left
    i = int(above[-1])
    if i == u.size - 1:
        return state.x_right
    frac = (u[i] - threshold) / (u[i] - u[i + 1])
    return float(state.dx * (state.i_left + i + frac))


@dataclass
class FrontTrace:
    times: list[float] = field(default_factory=list)
    positions: list[float] = field(default_factory=list)
    speed: float = np.nan
    intercept: float = np.nan
    window: tuple[float, float] = (np.nan, np.nan)

    def append(self, t: float, x: float):
        if self.times and not t > self.times[-1]:
            raise SimulationError("front trace times must increase")
        self.times.append(float(t))
        self.positions.append(float(x))


@dataclass
class SpeedFit:
    speed: float
    intercept: float
    window: tuple[float, float]
    increments: np.ndarray


def estimate_speed(trace: FrontTrace, burn_in: float = 0.3, period: float | None = None) -> SpeedFit:
    """Least-squares slope of the front position over ``t >= burn_in * t_end``.

    ``increments`` holds the front advance per ``period`` (defaults to the
    sample spacing) within the window, for drift inspection.
    """
    t = np.asarray(trace.times)
    x = np.asarray(trace.positions)
    if t.size == 0:
        raise SimulationError("empty front trace")
    keep = t >= burn_in * t[-1]
    if keep.sum() < 20:
        raise SimulationError(f"only {int(keep.sum())} front samples after burn-in; need >= 20")
    tw, xw = t[keep], x[keep]
    A = np.vstack([tw, np.ones_like(tw)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, xw, rcond=None)
    if period is None:
        inc = np.diff(xw)
    else:
        per = np.interp(np.arange(tw[0], tw[-1] + 1e-12, period), tw, xw)
        inc = np.diff(per)
    trace.speed, trace.intercept, trace.window = float(slope), float(icpt), (float(tw[0]), float(tw[-1]))
    return SpeedFit(float(slope), float(icpt), trace.window, inc)


@dataclass(eq=False)
class SimulationResult:
    trace: FrontTrace
    fit: SpeedFit | None
    final: LineState
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list, repr=False)
    threshold: float = np.nan


def _oriented(fs: FitnessSpec, orbit: PeriodicOrbit, xi: int):
    if xi == 1:
        return fs, orbit
    if xi != -1:
        raise SimulationError(f"direction must be +1 or -1, got {xi}")
    o = PeriodicOrbit(orbit.u_star.reflected(), orbit.period_map_residual,
                      orbit.seeds_agreement, orbit.periods, orbit.lambda0)
    return fs.reflected(), o


def simulate_front(fs: FitnessSpec, k: Kernel, orbit: PeriodicOrbit, xi: int = 1,
                   opts: SimOptions = SimOptions(), kind: str = "step", mu: float = 1.0,
                   thetas=None, snapshot_every: int = 0) -> dict[float, SimulationResult] | SimulationResult:
    """Run front-like data in direction ``xi`` and fit the front speed.

    With several ``thetas`` one run feeds one trace per threshold and a dict
    keyed by threshold is returned.
    """
    fs_o, orbit_o = _oriented(fs, orbit, xi)
    p = fs.cell.p
    sim = LineSimulator(fs_o, k, orbit_o, opts.step_stride)
    sim.dump_dir = opts.dump_dir
    state = make_front_data(kind, orbit_o, -opts.x_left_cells * p, opts.x_right_cells * p, mu=mu)
    many = thetas is not None
    thetas = list(thetas) if many else [opts.theta]
    floor = orbit_o.u_star.min()
    traces = {th: FrontTrace() for th in thetas}
    every = sim.n_steps // opts.samples_per_period
    snaps = []
    total = opts.n_periods * sim.n_steps
    while state.step < total:
        state = sim.step(state)
        if state.step % every == 0:
            t = sim.time(state)
            for th in thetas:
                traces[th].append(t, front_position(state, th * floor))
        if snapshot_every and state.step % (snapshot_every * sim.n_steps) == 0:
            snaps.append((sim.time(state), state.values.copy()))
    out = {}
    for th in thetas:
        fit = estimate_speed(traces[th], opts.burn_in, period=fs.cell.T)
        out[th] = SimulationResult(traces[th], fit, state, snaps, th * floor)
        log.info("direction %+d theta %.2f: fitted speed %.6f", xi, th, fit.speed)
    return out if many else out[thetas[0]]


@dataclass
class SpreadingReport:
    c_star: dict[int, float]
    leading_max: dict[int, float]          # max u over x xi >= 1.2 c* t, final periods
    leading_max_fast: dict[int, float]     # same at 2 c*
    behind_deviation: dict[int, float]     # max |u - u*| over 0 <= x xi <= 0.8 c* t
    invaded: bool
    lead_tol: float = 1e-3
    behind_tol: float = 5e-2

    @property
    def flags(self) -> list[str]:
        out = []
        if not self.invaded:
            out.append("no invasion")
        return out

    def passed(self) -> dict[str, bool]:
        res = {}
        for xi in self.c_star:
            res[f"leading_{xi:+d}"] = bool(self.leading_max[xi] < self.lead_tol)
            res[f"behind_{xi:+d}"] = bool(self.invaded and self.behind_deviation[xi] < self.behind_tol)
        return res

    @property
    def ok(self) -> bool:
        return all(self.passed().values())

    def summary(self) -> dict:
        key = lambda d: {str(k): v for k, v in d.items()}
        return {"c_star": key(self.c_star), "leading_max_1.2c": key(self.leading_max),
                "leading_max_2c": key(self.leading_max_fast),
                "behind_deviation_0.8c": key(self.behind_deviation),
                "invaded": self.invaded, "flags": self.flags, "passed": self.passed()}


def verify_spreading(fs: FitnessSpec, k: Kernel, orbit: PeriodicOrbit, c_plus: float,
                     c_minus: float, n_periods: int = 60, final_periods: int = 10,
                     height: float = 0.5, fast: float = 1.2, slow: float = 0.8,
                     step_stride: int = 1, samples_per_period: int = 4,
                     margin_cells: int = 4) -> SpreadingReport:
    """Compact bump at the origin; inspect both sides over the final periods.

    One run serves both directions: the right flank spreads at ``c*(+1)``
    and the left flank at ``c*(-1)``.
    """
    p, T = fs.cell.p, fs.cell.T
    sim = LineSimulator(fs, k, orbit, step_stride)
    reach = 1.25 * max(c_plus, c_minus) * n_periods * T + margin_cells * p
    state = make_front_data("bump", orbit, -reach, reach, height=height)
    x = state.x
    every = sim.n_steps // samples_per_period
    total = n_periods * sim.n_steps
    start = (n_periods - final_periods) * sim.n_steps
    cs = {1: c_plus, -1: c_minus}
    lead = {1: 0.0, -1: 0.0}
    lead2 = {1: 0.0, -1: 0.0}
    behind = {1: 0.0, -1: 0.0}
    while state.step < total:
        state = sim.step(state)
        if state.step >= start and state.step % every == 0:
            t = sim.time(state)
            u = state.values
            ustar = sim.u_star_on(state, t)
            for xi, c in cs.items():
                s = xi * x
                ahead = s >= fast * c * t
                lead[xi] = max(lead[xi], float(u[ahead].max(initial=0.0)))
                lead2[xi] = max(lead2[xi], float(u[s >= 2.0 * c * t].max(initial=0.0)))
                back = (s >= 0) & (s <= slow * c * t)
                behind[xi] = max(behind[xi], float(np.abs(u - ustar)[back].max(initial=0.0)))
    invaded = bool(np.max(state.values) > 0.5 * orbit.u_star.min())
    return SpreadingReport(cs, lead, lead2, behind, invaded)


@dataclass
class ComparisonReport:
    n_pairs: int
    n_periods: int
    worst_violation: float        # max over steps and nodes of (lower - upper)
    tol: float = 1e-10

    @property
    def ok(self) -> bool:
        return self.worst_violation <= self.tol

    def summary(self) -> dict:
        return {"n_pairs": self.n_pairs, "n_periods": self.n_periods,
                "worst_violation": self.worst_violation, "ok": self.ok}


def ordered_pairs(rng: np.random.Generator, n_pairs: int, x: np.ndarray, top: float,
                  p: float) -> tuple[np.ndarray, np.ndarray]:
    """Random ordered data ``lower <= upper`` in ``[0, top]``: smooth, rough and touching pairs."""
    n = x.size
    upper = np.empty((n_pairs, n))
    lower = np.empty((n_pairs, n))
    for j in range(n_pairs):
        modes = rng.integers(1, 6, size=3)
        phases = rng.uniform(0, 2 * np.pi, size=3)
        smooth = sum(np.cos(2 * np.pi * m * x / p + ph) for m, ph in zip(modes, phases))
        hi = top * (0.5 + 0.5 * np.tanh(smooth + rng.normal(size=n) * (j % 3 == 0)))
        gap = rng.uniform(0, 1, size=n) * hi
        if j % 4 == 1:
            gap[rng.uniform(size=n) < 0.5] = 0.0          # touching on a random set
        upper[j], lower[j] = hi, hi - gap
    return lower, upper


def comparison_check(fs: FitnessSpec, k: Kernel, orbit: PeriodicOrbit, n_pairs: int = 50,
                     n_periods: int = 5, cells: int = 6, seed: int = 0,
                     step_stride: int = 1) -> ComparisonReport:
    """Evolve seeded ordered pairs side by side and track the worst order reversal."""
    cell = fs.cell
    sim = LineSimulator(fs, k, orbit, step_stride)
    i0, n = line_grid(cell, -0.5 * cells * cell.p, 0.5 * cells * cell.p)
    x = cell.dx * (i0 + np.arange(n))
    lower, upper = ordered_pairs(np.random.default_rng(seed), n_pairs, x,
                                 1.2 * orbit.u_star.max(), cell.p)
    state = LineState(i0, cell.dx, np.concatenate([lower, upper]), left_pad="zero")
    worst = float(np.max(lower - upper))
    for _ in range(n_periods * sim.n_steps):
        state = sim.step(state)
        v = state.values
        worst = max(worst, float(np.max(v[:n_pairs] - v[n_pairs:])))
    return ComparisonReport(n_pairs, n_periods, worst)
