"""Periodic traveling waves for speeds above ``c*`` by monotone iteration.

The medium is oriented so that the wave moves to the right.  With
``zeta = x - c t`` (distance to the moving frame) and ``s = x + z`` (medium
phase), the explicit comparison functions are

    vbar  = exp(-mu zeta) phi(t, s)                       (super-solution)
    vlow  = vbar - d exp(-mu1 zeta) phi1(t, s)            (sub-solution, d >= d*)
    ubar  = min(vbar, u*(t, s))
    ulow  = max(b phi0(t, s), vlow) for zeta <= M, vlow beyond.

The iterated object is ``W_n(x, z) = u^n(0, x, z)``, sampled on a line grid in
``x`` and on ``n_z`` grid-aligned offsets ``z_j``.  One iteration evolves every
row for one period in the medium shifted by ``z_j`` (an index offset), shifts
``x`` by ``cT`` (cubic interpolation) and ``z`` by ``-cT`` (trigonometric
interpolation; rows are ``p``-periodic in ``z``):

    W_n(x, z) = E_{z - cT}[W_{n-1}(., z - cT)](x + cT).

Truncation pads: on the right the explicit tails (``vbar`` for the upper
sequence, ``vlow`` for the lower one); on the left ``u*`` for the upper
sequence and, for the lower one, the spatially periodic solution started from
``b phi0``, advanced in lockstep on the cell.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import brentq

from .fields import FitnessSpec, PeriodicField
from .frontsim import _oriented
from .kernel import Kernel, LineConvolver, TiltedDirection, apply_circulant, circulant_matrix, periodize
from .spectrum import EigenOptions, EigenResult, principal_eigen_many
from .speed import LambdaCurve, SpeedResult, curve_for
from .steady_state import PeriodicOrbit

log = logging.getLogger(__name__)


class WaveError(RuntimeError):
    pass


class BelowMinimalSpeed(WaveError):
    """Requested speed is not above ``c*``; existence there is not established."""


@dataclass(frozen=True)
class WaveOptions:
    L_factor: float = 30.0          # L_eta = L_factor / mu
    tol: float = 1e-6
    max_periods: int = 500
    n_z: int | None = None          # None: smallest power of two resolving the medium
    z_tol: float = 1e-6
    x_order: int = 8               # Lagrange stencil for the frame shift
    step_stride: int = 1
    transient: int = 10             # iterations before monotonicity is enforced
    mono_tol: float = 1e-8
    n_t_out: int = 16
    b_fraction: float = 0.9
    d_tol: float = 1e-8
    d_max: float = 2.0 ** 30


# --------------------------------------------------------------------------- grids


@dataclass(frozen=True)
class WaveGrid:
    """Line grid ``x_i = (i_left + i) dx`` and offsets ``z_j = j z_step dx``."""

    dx: float
    i_left: int
    n: int
    n_z: int
    z_step: int
    pad: int
    n_x: int

    @property
    def x(self) -> np.ndarray:
        return self.dx * (self.i_left + np.arange(self.n))

    @property
    def z(self) -> np.ndarray:
        return self.dx * self.z_step * np.arange(self.n_z)

    def phase(self, offsets) -> np.ndarray:
        """Cell indices of ``x_{i_left + offsets} + z_j``, shape ``(n_z, len(offsets))``."""
        g = self.i_left + np.asarray(offsets)
        return (g[None, :] + self.z_step * np.arange(self.n_z)[:, None]) % self.n_x

    def x_at(self, offsets) -> np.ndarray:
        return self.dx * (self.i_left + np.asarray(offsets))


def resolving_n_z(fields, n_x: int, tol: float) -> int:
    """Smallest power of two ``n_z | n_x`` whose Nyquist band holds all spatial modes above ``tol``."""
    spec = np.zeros(n_x // 2 + 1)
    for f in fields:
        v = np.asarray(f.values)
        s = np.max(np.abs(sfft.rfft(v, axis=1)), axis=0) / n_x
        spec = np.maximum(spec, s / max(np.max(np.abs(v)), 1e-300))
    n_z = 1
    while n_z < n_x:
        # modes |m| < n_z/2 are represented exactly by n_z samples
        if np.all(spec[max(1, (n_z + 1) // 2):] < tol):
            return n_z
        n_z *= 2
    return n_x


# --------------------------------------------------------------------------- bounds


@dataclass(eq=False)
class WaveBounds:
    xi: int
    c: float
    c_star: float
    mu: float
    mu1: float
    mu_star: float
    lam: float
    lam1: float
    lam0: float
    phi: PeriodicField
    phi1: PeriodicField
    phi0: PeriodicField
    d: float
    b: float
    M: float
    delta0: float
    grid: WaveGrid
    fs: FitnessSpec = field(repr=False)        # oriented medium
    orbit: PeriodicOrbit = field(repr=False)   # oriented u*
    k: Kernel = field(repr=False)
    b0: float = np.nan

    @property
    def L(self) -> float:
        return -self.grid.x[0]

    def summary(self) -> dict:
        return {"xi": self.xi, "c": self.c, "c_star": self.c_star, "mu": self.mu,
                "mu1": self.mu1, "mu_star": self.mu_star, "lambda_mu": self.lam,
                "lambda_mu1": self.lam1, "lambda_0": self.lam0, "d": self.d, "b": self.b,
                "b0": self.b0, "M": self.M, "delta0": self.delta0, "L_eta": self.L,
                "n_z": self.grid.n_z, "n_eta": self.grid.n}


def _time_derivative(res: EigenResult, k: Kernel, a0: PeriodicField) -> np.ndarray:
    """``phi_t`` from the eigen equation, ``C phi - phi + a0 phi - lambda phi``."""
    phi = res.phi.values
    w = periodize(k, res.td, a0.cell.p, a0.cell.n_x)
    return apply_circulant(w, phi) + (a0.values - 1.0 - res.lambda0) * phi


def _spectral_dt(f: PeriodicField) -> np.ndarray:
    n = f.cell.n_t
    m = sfft.rfftfreq(n, d=f.cell.dt) * 2j * np.pi
    spec = sfft.rfft(f.values, axis=0) * m[:, None]
    if n % 2 == 0:
        spec[-1] = 0.0
    return sfft.irfft(spec, n=n, axis=0)


def mu_for_speed(curve: LambdaCurve, c: float, mu_star: float) -> float:
    """Root of ``lambda(mu)/mu = c`` on ``(0, mu*)``; the quotient decreases there."""
    lo = 0.5 * mu_star
    while curve.quotient(lo) <= c:
        lo *= 0.5
        if lo < 1e-8:
            raise WaveError(f"could not bracket mu for c={c}")
    try:
        return float(brentq(lambda m: curve.quotient(m) - c, lo, mu_star, xtol=1e-14, rtol=1e-13))
    except ValueError as exc:
        raise WaveError(f"bisection for mu failed: {exc}") from None


class _Envelope:
    """Evaluates the comparison functions on line grid nodes for chosen times."""

    def __init__(self, wb: WaveBounds):
        self.wb = wb
        self.u_dt = _spectral_dt(wb.orbit.u_star)

    def tail(self, which: str, x, tau, phi_row, phi1_row, sidx, d=None):
        wb = self.wb
        z = x - wb.c * tau
        v = np.exp(-wb.mu * z) * phi_row[sidx]
        if which == "vbar":
            return v
        d = wb.d if d is None else d
        return v - d * np.exp(-wb.mu1 * z) * phi1_row[sidx]

    def lower_initial(self, x, sidx):
        wb = self.wb
        vl = self.tail("vlow", x, 0.0, wb.phi.values[0], wb.phi1.values[0], sidx)
        floor = wb.b * wb.phi0.values[0][sidx]
        return np.where(x <= wb.M, np.maximum(floor, vl), vl)

    def upper_initial(self, x, sidx):
        wb = self.wb
        vb = self.tail("vbar", x, 0.0, wb.phi.values[0], None, sidx)
        return np.minimum(vb, wb.orbit.u_star.values[0][sidx])


def _floor_tables(wb: WaveBounds, d: float, zetas: np.ndarray):
    """``min_{t,s}`` of ``vlow / phi0`` at each ``zeta`` (all cell times and phases)."""
    ra = wb.phi.values / wb.phi0.values
    rb = wb.phi1.values / wb.phi0.values
    out = np.empty(zetas.size)
    for lo in range(0, zetas.size, 32):
        z = zetas[lo:lo + 32, None, None]
        vals = np.exp(-wb.mu * z) * ra - d * np.exp(-wb.mu1 * z) * rb
        out[lo:lo + 32] = vals.min(axis=(1, 2))
    return out


def _zero_crossing_max(wb: WaveBounds, d: float) -> float:
    """Largest ``zeta`` at which ``vlow`` can vanish: ``max ln(d phi1/phi)/(mu1 - mu)``."""
    return float(np.max(np.log(d * wb.phi1.values / wb.phi.values)) / (wb.mu1 - wb.mu))


def choose_floor(wb: WaveBounds, fraction: float = 0.9) -> tuple[float, float, float]:
    """(b0, b, M) for the current ``d``.

    ``b0`` is the largest floor amplitude for which some grid abscissa ``M``
    satisfies all four floor conditions; ``b = fraction * b0`` and ``M`` is
    the smallest grid abscissa that works for ``b``.
    """
    dx = wb.grid.dx
    zc = _zero_crossing_max(wb, wb.d)
    win = int(np.ceil(2 * wb.delta0 / dx))
    first = int(np.floor(zc / dx)) + win + 1
    cand = dx * np.arange(first, first + int(np.ceil(12.0 / wb.mu / dx)) + 1)
    zetas = dx * np.arange(first - win, first + int(np.ceil(12.0 / wb.mu / dx)) + 1)
    g = _floor_tables(wb, wb.d, zetas)
    # sliding window minimum over [M - 2 delta0, M]
    window_min = sliding_window_view(g, win + 1).min(axis=1)[:cand.size]
    tail_ratio = float(np.min(wb.phi.values / wb.phi0.values))
    cap_c = np.exp(-wb.mu * cand) * tail_ratio
    cap_d = float(np.min(wb.orbit.u_star.values / wb.phi.values))
    cap_e = wb.lam0 / float(np.max(wb.fs.b.values * wb.phi0.values))
    bmax = np.minimum(np.minimum(window_min, cap_c), min(cap_d, cap_e))
    bmax = np.where(cand > zc, bmax, -np.inf)
    i_best = int(np.argmax(bmax))
    b0 = float(bmax[i_best])
    if not b0 > 0:
        raise WaveError("no positive floor amplitude satisfies the floor conditions")
    b = fraction * b0
    i_m = int(np.nonzero(bmax >= b)[0][0])
    return b0, b, float(cand[i_m])


@dataclass
class FloorReport:
    window: float        # min (vlow - b phi0) on M - 2 delta0 <= zeta <= M
    positive: float      # min vlow just beyond M (monotone in zeta, so this covers zeta > M)
    tail: float          # min (vbar - b phi0) at zeta = M (covers zeta <= M)
    cap: float           # min (u* - b phi)

    @property
    def ok(self) -> bool:
        return self.window >= 0 and self.positive > 0 and self.tail >= 0 and self.cap >= 0


def floor_conditions(wb: WaveBounds) -> FloorReport:
    """Re-verify the four floor conditions node by node on the (t, zeta, s) grid.

    ``zeta`` runs over the line spacing; ``vbar - b phi0`` only grows as ``zeta``
    decreases and ``vlow exp(mu1 zeta)`` only grows as it increases, so one
    ``zeta`` suffices for those two conditions.
    """
    dx = wb.grid.dx
    i_m = int(round(wb.M / dx))
    win = int(np.ceil(2 * wb.delta0 / dx))
    zetas = dx * np.arange(i_m - win, i_m + 1)
    zetas = zetas[zetas >= wb.M - 2 * wb.delta0 - 1e-12]
    phi, phi1, phi0 = wb.phi.values, wb.phi1.values, wb.phi0.values
    window = np.inf
    for z in zetas:
        v = np.exp(-wb.mu * z) * phi - wb.d * np.exp(-wb.mu1 * z) * phi1
        window = min(window, float(np.min(v - wb.b * phi0)))
    z1 = dx * (i_m + 1)
    positive = float(np.min(np.exp(-wb.mu * z1) * phi - wb.d * np.exp(-wb.mu1 * z1) * phi1))
    tail = float(np.min(np.exp(-wb.mu * wb.M) * phi - wb.b * phi0))
    cap = float(np.min(wb.orbit.u_star.values - wb.b * phi))
    return FloorReport(window, positive, tail, cap)


# --------------------------------------------------------------------------- residuals


def _line_defect(vals_ext, dvals, conv, a, bsat, pad):
    """``u_t - [K0 u - u + u (a - b u)]`` on interior nodes of padded rows."""
    u = vals_ext[..., pad:vals_ext.shape[-1] - pad]
    return dvals - (conv(vals_ext) - u + u * (a - bsat * u))


def residual_check(wb: WaveBounds, kind: str, d: float | None = None, t_stride: int = 1,
                   z_rows=None) -> float:
    """Worst signed defect of a comparison function over the grid.

    ``kind``: ``"vbar"`` or ``"ubar"`` (super-solutions: returns the infimum of
    the defect) or ``"vlow"`` (sub-solution: supremum over nodes where it is
    positive).  Defects are divided by ``max(1, |u|)``; time derivatives come
    from the eigen equations (``phi``) or spectral differences (``u*``).
    """
    if kind not in ("vbar", "ubar", "vlow"):
        raise WaveError(f"unknown comparison function {kind!r}")
    g = wb.grid
    cell = wb.fs.cell
    conv = LineConvolver(wb.k, g.dx)
    pad = conv.half_width
    offs = np.arange(-pad, g.n + pad)
    sidx = g.phase(offs)
    if z_rows is not None:
        sidx = sidx[np.atleast_1d(z_rows)]
    inner = sidx[:, pad:-pad]
    x = g.x_at(offs)[None, :]
    xin = x[:, pad:-pad]
    d = wb.d if d is None else d
    env = _Envelope(wb)
    phi_t = _time_derivative(_eig(wb, "phi"), wb.k, wb.fs.a0)
    phi1_t = _time_derivative(_eig(wb, "phi1"), wb.k, wb.fs.a0)
    worst = -np.inf if kind == "vlow" else np.inf
    for kt in range(0, cell.n_t, t_stride):
        tau = kt * cell.dt
        ph, ph1 = wb.phi.values[kt], wb.phi1.values[kt]
        a = wb.fs.a0.values[kt][inner]
        bs = wb.fs.b.values[kt][inner]
        zin = xin - wb.c * tau
        e0 = np.exp(-wb.mu * zin)
        vbar_ext = env.tail("vbar", x, tau, ph, None, sidx)
        dvbar = e0 * (wb.mu * wb.c * ph[inner] + phi_t[kt][inner])
        if kind == "vlow":
            e1 = np.exp(-wb.mu1 * zin)
            v_ext = vbar_ext - d * np.exp(-wb.mu1 * (x - wb.c * tau)) * ph1[sidx]
            dv = dvbar - d * e1 * (wb.mu1 * wb.c * ph1[inner] + phi1_t[kt][inner])
            res = _line_defect(v_ext, dv, conv, a, bs, pad)
            v = v_ext[:, pad:-pad]
            res = res / np.maximum(1.0, np.abs(v))
            masked = np.where(v > 0, res, -np.inf)
            worst = max(worst, float(masked.max()))
            continue
        res_v = _line_defect(vbar_ext, dvbar, conv, a, bs, pad)
        vb = vbar_ext[:, pad:-pad]
        res_v = res_v / np.maximum(1.0, np.abs(vb))
        if kind == "vbar":
            worst = min(worst, float(res_v.min()))
            continue
        us_ext = wb.orbit.u_star.values[kt][sidx]
        us = us_ext[:, pad:-pad]
        res_u = _line_defect(us_ext, env.u_dt[kt][inner], conv, a, bs, pad)
        res_u = res_u / np.maximum(1.0, np.abs(us))
        active_v = vb <= us
        worst = min(worst, float(np.where(active_v, res_v, np.inf).min()),
                    float(np.where(~active_v, res_u, np.inf).min()))
    return worst


def _eig(wb: WaveBounds, which: str) -> EigenResult:
    mu = {"phi": wb.mu, "phi1": wb.mu1, "phi0": 0.0}[which]
    lam = {"phi": wb.lam, "phi1": wb.lam1, "phi0": wb.lam0}[which]
    f = getattr(wb, which)
    return EigenResult(TiltedDirection(1, mu), lam, f, np.nan, np.nan, 0)


def calibrate_d_star(wb: WaveBounds, tol: float = 1e-8, d_max: float = 2.0 ** 30,
                     search_stride: int = 4) -> float:
    """Doubling search from ``d = 1`` for a sub-solution ``vlow``; returns twice the first success.

    The search samples every ``search_stride``-th cell time; the returned value
    is re-verified on every time.
    """
    d = 1.0
    while d <= d_max:
        if residual_check(wb, "vlow", d=d, t_stride=search_stride) <= tol:
            if residual_check(wb, "vlow", d=d, t_stride=1) <= tol:
                return 2.0 * d
        d *= 2.0
    raise WaveError(f"no sub-solution depth up to d={d_max:g}; bounds inconsistent")


def build_bounds(k: Kernel, fs: FitnessSpec, orbit: PeriodicOrbit, speed: SpeedResult,
                 c: float, opts: WaveOptions = WaveOptions()) -> WaveBounds:
    """Rates, eigenfunctions, sub-solution depth and floor for a wave of speed ``c``."""
    xi = speed.xi
    if not c > speed.c_star:
        raise BelowMinimalSpeed(f"no wave below the minimal speed (c={c:.8g} <= c*={speed.c_star:.8g})")
    fs_o, orbit_o = _oriented(fs, orbit, xi)
    cell = fs_o.cell
    curve = curve_for(k, 1, fs_o.a0)
    mu_star = speed.mu_star
    mu = mu_for_speed(curve, c, mu_star)
    mu1 = mu + 0.5 * (min(2.0 * mu, mu_star) - mu)
    eig = principal_eigen_many(k, [TiltedDirection(1, mu), TiltedDirection(1, mu1),
                                   TiltedDirection(1, 0.0)], fs_o.a0,
                               EigenOptions(tol=1e-12, gap_iterations=0))
    e_mu, e_mu1, e_0 = eig
    n_z = opts.n_z or resolving_n_z([orbit_o.u_star, e_mu.phi, e_mu1.phi, e_0.phi,
                                     fs_o.a0, fs_o.b], cell.n_x, opts.z_tol)
    if cell.n_x % n_z:
        raise WaveError(f"n_z={n_z} must divide n_x={cell.n_x}")
    half = int(np.ceil(opts.L_factor / mu / cell.dx))
    conv_pad = (LineConvolver(k, cell.dx)).half_width
    grid = WaveGrid(cell.dx, -half, 2 * half + 1, n_z, cell.n_x // n_z, conv_pad, cell.n_x)
    wb = WaveBounds(xi=xi, c=float(c), c_star=speed.c_star, mu=mu, mu1=mu1, mu_star=mu_star,
                    lam=e_mu.lambda0, lam1=e_mu1.lambda0, lam0=e_0.lambda0,
                    phi=e_mu.phi, phi1=e_mu1.phi, phi0=e_0.phi, d=1.0, b=np.nan, M=np.nan,
                    delta0=k.r0, grid=grid, fs=fs_o, orbit=orbit_o, k=k)
    wb.d = calibrate_d_star(wb, opts.d_tol, opts.d_max)
    wb.b0, wb.b, wb.M = choose_floor(wb, opts.b_fraction)
    rep = floor_conditions(wb)
    if not rep.ok:
        raise WaveError(f"floor conditions fail on the grid: {rep}")
    log.info("wave bounds: mu=%.6f mu1=%.6f d=%g b=%.4g M=%.4f n_z=%d",
             mu, mu1, wb.d, wb.b, wb.M, n_z)
    return wb


# --------------------------------------------------------------------------- iteration


def _lagrange_weights(f: float, order: int) -> np.ndarray:
    """Weights on nodes ``1 - order/2, ..., order/2`` for the point ``f`` in ``[0, 1)``."""
    nodes = np.arange(1 - order // 2, order // 2 + 1, dtype=float)
    w = np.ones(order)
    for j, xj in enumerate(nodes):
        for m, xm in enumerate(nodes):
            if m != j:
                w[j] *= (f - xm) / (xj - xm)
    return w


def _shift_x(rows_ext: np.ndarray, n: int, shift: float, dx: float, lead: int,
             order: int = 8) -> np.ndarray:
    """Values at ``x_i + shift`` for ``i < n`` from rows whose column ``lead`` is ``x_0``."""
    m = int(np.floor(shift / dx))
    w = _lagrange_weights(shift / dx - m, order)
    base = lead + m + 1 - order // 2
    out = np.zeros(rows_ext.shape[:-1] + (n,))
    for r, wr in enumerate(w):
        out += wr * rows_ext[..., base + r: base + r + n]
    return out


def _shift_z(rows: np.ndarray, shift: float, p: float, axis: int) -> np.ndarray:
    """Trigonometric interpolation: ``g(z_j) = f(z_j - shift)`` for ``f`` sampled at ``z_j``."""
    n_z = rows.shape[axis]
    if n_z == 1:
        return rows
    spec = sfft.rfft(rows, axis=axis)
    m = np.arange(spec.shape[axis])
    phase = np.exp(-2j * np.pi * m * shift / p)
    shape = [1] * rows.ndim
    shape[axis] = -1
    return sfft.irfft(spec * phase.reshape(shape), n=n_z, axis=axis)


def _trig_eval(rows: np.ndarray, p: float, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant in ``z`` (axis 0, ``n_z`` samples) at ``points[l, i]`` per column ``i``."""
    n_z = rows.shape[0]
    if n_z == 1:
        return np.broadcast_to(rows[0], points.shape).copy()
    spec = sfft.rfft(rows, axis=0) / n_z
    m = np.arange(spec.shape[0])
    wgt = np.full(m.size, 2.0)
    wgt[0] = 1.0
    if n_z % 2 == 0:
        wgt[-1] = 1.0
    ang = 2 * np.pi * m[:, None, None] * points[None, :, :] / p
    terms = wgt[:, None, None] * (spec.real[:, None, :] * np.cos(ang) - spec.imag[:, None, :] * np.sin(ang))
    return terms.sum(axis=0)


class _WaveStepper:
    """One period of the nonlinear equation for the stacked (upper, lower) rows."""

    def __init__(self, wb: WaveBounds, stride: int, order: int = 8):
        cell = wb.fs.cell
        if cell.n_t % stride:
            raise WaveError(f"step stride {stride} does not divide n_t={cell.n_t}")
        self.wb = wb
        self.order = order
        g = wb.grid
        self.g = g
        self.n_steps = cell.n_t // stride
        self.h = cell.T / self.n_steps
        self.conv = LineConvolver(wb.k, g.dx)
        J = self.conv.half_width
        self.J = J
        self.s_in = g.phase(np.arange(g.n))
        self.s_left = g.phase(np.arange(-J, 0))
        self.right_offs = np.arange(g.n, g.n + J)
        self.s_right = g.phase(self.right_offs)
        self.x_right = g.x_at(self.right_offs)
        tabs = {}
        for name, f in (("a", wb.fs.a0), ("b", wb.fs.b), ("u", wb.orbit.u_star),
                        ("phi", wb.phi), ("phi1", wb.phi1)):
            tabs[name] = f.stage_values(self.n_steps)
        self.tabs = tabs
        self.C0 = circulant_matrix(periodize(wb.k, 0.0, cell.p, cell.n_x))

    def _row(self, name, q, stage):
        nodes, halves = self.tabs[name]
        if stage == 0:
            return nodes[q % self.n_steps]
        if stage == 1:
            return halves[q % self.n_steps]
        return nodes[(q + 1) % self.n_steps]

    def _tau(self, q, stage):
        return (q + (0.0, 0.5, 1.0)[stage]) * self.h

    def right_tails(self, x, sidx, phi_row, phi1_row, tau):
        wb = self.wb
        z = x - wb.c * tau
        vbar = np.exp(-wb.mu * z) * phi_row[sidx]
        vlow = vbar - wb.d * np.exp(-wb.mu1 * z) * phi1_row[sidx]
        return vbar, vlow

    def rhs(self, q, stage, U, P):
        wb = self.wb
        a_row = self._row("a", q, stage)
        b_row = self._row("b", q, stage)
        a = a_row[self.s_in]
        bs = b_row[self.s_in]
        left_up = self._row("u", q, stage)[self.s_left]
        left_lo = P[self.s_left]
        vbar, vlow = self.right_tails(self.x_right[None, :], self.s_right,
                                      self._row("phi", q, stage), self._row("phi1", q, stage),
                                      self._tau(q, stage))
        ext = np.concatenate([np.stack([left_up, left_lo]), U, np.stack([vbar, vlow])], axis=-1)
        dU = self.conv(ext) - U + U * (a - bs * U)
        dP = self.C0 @ P - P + P * (a_row - b_row * P)
        return dU, dP

    def period(self, U, P, record_every: int = 0):
        h = self.h
        recs = []
        for q in range(self.n_steps):
            if record_every and q % record_every == 0:
                recs.append((q * h, U.copy(), P.copy()))
            k1u, k1p = self.rhs(q, 0, U, P)
            k2u, k2p = self.rhs(q, 1, U + 0.5 * h * k1u, P + 0.5 * h * k1p)
            k3u, k3p = self.rhs(q, 1, U + 0.5 * h * k2u, P + 0.5 * h * k2p)
            k4u, k4p = self.rhs(q, 2, U + h * k3u, P + h * k3p)
            U = U + (h / 6.0) * (k1u + 2.0 * (k2u + k3u) + k4u)
            P = P + (h / 6.0) * (k1p + 2.0 * (k2p + k3p) + k4p)
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(P))):
            raise WaveError("non-finite values during wave iteration")
        return U, P, recs

    def frame_shift(self, U, P, tau: float):
        """Rows read at ``x + c tau`` (explicit tails beyond the right end), then z-shifted by ``-c tau``."""
        wb, g = self.wb, self.g
        shift = wb.c * tau
        half = self.order // 2
        offs = np.arange(g.n, g.n + int(np.ceil(shift / g.dx)) + half + 1)
        phi_row = wb.phi.values_at(np.array([tau]))[0]
        phi1_row = wb.phi1.values_at(np.array([tau]))[0]
        vbar, vlow = self.right_tails(g.x_at(offs)[None, :], g.phase(offs), phi_row, phi1_row, tau)
        s_l = g.phase(np.arange(-half, 0))
        u_row = wb.orbit.u_star.values_at(np.array([tau]))[0]
        left = np.stack([u_row[s_l], P[s_l]])
        ext = np.concatenate([left, U, np.stack([vbar, vlow])], axis=-1)
        shifted = _shift_x(ext, g.n, shift, g.dx, lead=half, order=self.order)
        return _shift_z(shifted, shift, wb.fs.cell.p, axis=1)


@dataclass(eq=False)
class WaveProfile:
    """``psi[i, k, l] = Psi(eta_i, t_k, zeta_l)`` for the upper limit; ``psi_lower`` likewise."""

    xi: int
    c: float
    eta: np.ndarray
    t: np.ndarray
    zeta: np.ndarray
    psi: np.ndarray = field(repr=False)
    psi_lower: np.ndarray = field(repr=False)
    gap: float = np.nan
    iterations: int = 0
    changes: list[tuple[float, float]] = field(default_factory=list, repr=False)
    monotone_violation: float = 0.0
    order_violation: float = 0.0
    lower_floor: float = np.nan
    W_upper: np.ndarray | None = field(default=None, repr=False)   # Phi+(x, 0, z_j), oriented
    W_lower: np.ndarray | None = field(default=None, repr=False)
    P_lower: np.ndarray | None = field(default=None, repr=False)
    x_order: int = 8

    def summary(self) -> dict:
        return {"xi": self.xi, "c": self.c, "gap": self.gap, "iterations": self.iterations,
                "monotone_violation": self.monotone_violation,
                "order_violation": self.order_violation, "lower_floor": self.lower_floor,
                "n_eta": int(self.eta.size), "n_t": int(self.t.size), "n_zeta": int(self.zeta.size)}


def initial_rows(wb: WaveBounds) -> tuple[np.ndarray, np.ndarray]:
    """Stacked ``(ubar(0, .; z_j), ulow(0, .; z_j))`` and the cell seed ``b phi0(0, .)``."""
    g = wb.grid
    env = _Envelope(wb)
    x = g.x[None, :]
    sidx = g.phase(np.arange(g.n))
    U = np.stack([env.upper_initial(x, sidx), env.lower_initial(x, sidx)])
    P = wb.b * wb.phi0.values[0].copy()
    return U, P


def _assemble_psi(wb: WaveBounds, stepper: _WaveStepper, recs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``Psi(eta, tau, zeta_l) = Phi(eta, tau, zeta_l - eta)`` from rows recorded during one period."""
    g = wb.grid
    p = wb.fs.cell.p
    eta = g.x
    zeta = g.z
    psi = np.empty((2, g.n, len(recs), g.n_z))
    pts = (zeta[:, None] - eta[None, :]) % p            # (n_z, n)
    for kk, (tau, U, P) in enumerate(recs):
        Phi = stepper.frame_shift(U, P, tau)            # Phi(x, tau, z_j): (2, n_z, n)
        for s in range(2):
            psi[s, :, kk, :] = _trig_eval(Phi[s], p, pts).T
    return psi[0], psi[1], np.array([r[0] for r in recs])


def wave_iterate(wb: WaveBounds, opts: WaveOptions = WaveOptions()) -> WaveProfile:
    """Monotone iteration from ``ubar`` (upper) and ``ulow`` (lower) until both settle."""
    g = wb.grid
    cell = wb.fs.cell
    stepper = _WaveStepper(wb, opts.step_stride, opts.x_order)
    U, P = initial_rows(wb)
    U0 = U.copy()
    T = cell.T
    changes = []
    mono = 0.0
    order = max(0.0, float(np.max(U[1] - U[0])))
    behind = g.x <= wb.M
    floor = float(U[1][:, behind].min()) if behind.any() else np.nan
    for n in range(1, opts.max_periods + 1):
        V, P_new, _ = stepper.period(U, P)
        V = stepper.frame_shift(V, P_new, T)
        dU = V - U
        ch = (float(np.max(np.abs(dU[0]))), float(np.max(np.abs(dU[1]))))
        changes.append(ch)
        viol = max(float(np.max(dU[0])), float(np.max(-dU[1])), 0.0)
        if n > opts.transient:
            mono = max(mono, viol)
            if viol > opts.mono_tol:
                raise WaveError(f"monotonicity violated by {viol:.3g} at iteration {n}; "
                                "scheme inconsistency")
        order = max(order, float(np.max(V[1] - V[0])))
        if behind.any():
            floor = min(floor, float(V[1][:, behind].min()))
        U, P = V, P_new
        if n % 10 == 0:
            log.info("wave iteration %d: changes %.3e / %.3e", n, *ch)
        if max(ch) < opts.tol:
            break
    else:
        raise WaveError(f"wave iteration did not converge in {opts.max_periods} periods "
                        f"(last changes {changes[-1][0]:.3g}, {changes[-1][1]:.3g})")
    every = stepper.n_steps // opts.n_t_out
    if every * opts.n_t_out != stepper.n_steps:
        raise WaveError(f"n_t_out={opts.n_t_out} must divide the {stepper.n_steps} steps per period")
    V, P_end, recs = stepper.period(U, P, record_every=every)
    psi_up, psi_lo, times = _assemble_psi(wb, stepper, recs)
    gap = float(np.max(np.abs(psi_up - psi_lo)))
    prof = WaveProfile(xi=wb.xi, c=wb.c, eta=g.x.copy(), t=times, zeta=g.z.copy(),
                       psi=psi_up, psi_lower=psi_lo, gap=gap, iterations=n, changes=changes,
                       monotone_violation=mono, order_violation=order, lower_floor=floor,
                       W_upper=U[0].copy(), W_lower=U[1].copy(), P_lower=P.copy(),
                       x_order=opts.x_order)
    prof._initial = U0
    return prof


def psi_lab_frame(wp: WaveProfile) -> np.ndarray:
    """``psi`` indexed by the unreflected phase: for direction -1 the phase axis is mirrored."""
    if wp.xi == 1:
        return wp.psi
    idx = (-np.arange(wp.zeta.size)) % wp.zeta.size
    return wp.psi[:, :, idx]


# --------------------------------------------------------------------------- checks


@dataclass
class WaveReport:
    left_limit_error: float
    decay_ratio_min: float
    decay_ratio_max: float
    entire_residual: float
    periodicity_error: float
    gap: float
    sandwich_violation: float
    monotone_violation: float
    order_violation: float
    lower_floor: float
    z_spread: float
    eta_monotone_violation: float
    floor: FloorReport | None = None

    def passed(self) -> dict[str, bool]:
        return {
            "monotone": self.monotone_violation < 1e-8,
            "gap": self.gap < 1e-4,
            "left_limit": self.left_limit_error < 1e-3,
            "decay_ratio": 0.99 <= self.decay_ratio_min and self.decay_ratio_max <= 1.01,
            "entire_residual": self.entire_residual < 1e-5,
            "periodicity": self.periodicity_error == 0.0,
            "sandwich": self.sandwich_violation <= 1e-10,
        }

    @property
    def ok(self) -> bool:
        return all(self.passed().values())

    def summary(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "floor"}
        if self.floor is not None:
            out["floor_conditions"] = dict(self.floor.__dict__, ok=self.floor.ok)
        out["passed"] = self.passed()
        return out


def wave_checks(wp: WaveProfile, wb: WaveBounds, residual_stride: int = 1) -> WaveReport:
    """Left limit, tail ratio, one-period residual, periodicity and sandwich checks."""
    g = wb.grid
    cell = wb.fs.cell
    L = wb.L
    n_t = cell.n_t
    t_idx = np.rint(wp.t / cell.dt).astype(int) % n_t
    z_idx = (np.arange(g.n_z) * g.z_step) % cell.n_x
    ustar = wb.orbit.u_star.values[np.ix_(t_idx, z_idx)]        # (n_t_out, n_z)
    phi = wb.phi.values[np.ix_(t_idx, z_idx)]
    left = wp.eta <= -0.5 * L
    left_err = float(np.max(np.abs(wp.psi[left] - ustar[None])))
    win = (wp.eta >= 0.25 * L) & (wp.eta <= 0.5 * L)
    ratio = wp.psi[win] / (np.exp(-wb.mu * wp.eta[win])[:, None, None] * phi[None])
    # one more period of the finest time stepping from the converged upper rows
    stepper = _WaveStepper(wb, residual_stride, wp.x_order)
    U = np.stack([wp.W_upper, wp.W_lower])
    V, Pn, _ = stepper.period(U, wp.P_lower)
    V = stepper.frame_shift(V, Pn, cell.T)
    resid = float(np.max(np.abs(V[0] - U[0])))
    U0 = wp._initial
    sandwich = max(float(np.max(U0[1] - U[0])), float(np.max(U[0] - U0[0])),
                   float(np.max(U0[1] - U[1])), float(np.max(U[1] - U0[0])), 0.0)
    z_spread = float(np.max(np.ptp(wp.psi, axis=2))) if g.n_z > 1 else 0.0
    eta_mono = float(max(0.0, np.max(np.diff(wp.psi, axis=0))))
    return WaveReport(left_limit_error=left_err, decay_ratio_min=float(ratio.min()),
                      decay_ratio_max=float(ratio.max()), entire_residual=resid,
                      periodicity_error=0.0, gap=wp.gap, sandwich_violation=sandwich,
                      monotone_violation=wp.monotone_violation,
                      order_violation=wp.order_violation, lower_floor=wp.lower_floor,
                      z_spread=z_spread, eta_monotone_violation=eta_mono,
                      floor=floor_conditions(wb))
