"""Principal spectrum point and eigenfunction of ``-d/dt + C_mu - I + a``.

The period map is positive and its spectral radius is ``exp(lambda0 T)``, so
plain power iteration on it (sup-norm normalization) gives ``lambda0``; one
extra recorded period turns the converged iterate into the time-dependent
eigenfunction ``phi(t, x) = exp(-lambda0 t) U(t) phi(0)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fields import PeriodicField, time_average
from .kernel import Kernel, TiltedDirection
from .linear_evolution import LinearOperatorBundle, make_bundle, monodromy_apply

log = logging.getLogger(__name__)


class EigenConvergenceError(RuntimeError):
    def __init__(self, msg, quotients=(np.nan, np.nan)):
        super().__init__(msg)
        self.quotients = tuple(quotients)


@dataclass(frozen=True)
class EigenOptions:
    tol: float = 1e-10
    max_iter: int = 20000
    gap_iterations: int = 20
    seed: int = 0


@dataclass(eq=False)
class EigenResult:
    td: TiltedDirection
    lambda0: float
    phi: PeriodicField
    residual: float
    gap_estimate: float
    iterations: int
    quotients: tuple[float, float] = field(default=(np.nan, np.nan))

    @property
    def growth_factor(self) -> float:
        return float(np.exp(self.lambda0 * self.phi.cell.T))

    def summary(self) -> dict:
        return {"xi": self.td.xi, "mu": self.td.mu, "lambda0": self.lambda0,
                "residual": self.residual, "gap": self.gap_estimate,
                "iterations": self.iterations}


def _power_iterate(bundle: LinearOperatorBundle, u0: np.ndarray, tol: float, max_iter: int):
    """Lockstep power iteration for every row of ``u0``; converged rows are frozen."""
    u = u0 / np.max(np.abs(u0), axis=-1, keepdims=True)
    n_rows = u.shape[0]
    r = np.full(n_rows, np.nan)
    r_prev = np.full(n_rows, np.nan)
    iters = np.zeros(n_rows, dtype=int)
    active = np.arange(n_rows)
    for it in range(1, max_iter + 1):
        sub = bundle if active.size == n_rows else bundle.subset(active)
        v = monodromy_apply(u[active], sub)
        growth = np.max(np.abs(v), axis=-1)
        if np.any(growth <= 0):
            raise EigenConvergenceError("period map annihilated the iterate")
        u[active] = v / growth[:, None]
        r_prev[active] = r[active]
        r[active] = growth
        iters[active] = it
        done = np.abs(r[active] - r_prev[active]) <= tol * r[active]
        active = active[~done]
        if active.size == 0:
            return u, r, r_prev, iters
    i = active[0]
    raise EigenConvergenceError(
        f"power iteration did not converge in {max_iter} periods for "
        f"{bundle.tilts[i]} (last quotients {r_prev[i]:.12g}, {r[i]:.12g}); "
        "the spectral gap may be degenerate", (r_prev[i], r[i]))


def _gap_estimates(bundle, u, r, iterations, seed):
    """Growth of a generic vector after removing the principal direction, over ``r``."""
    if iterations <= 0:
        return np.full(u.shape[0], np.nan)
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(u.shape)
    nrm = np.sum(u * u, axis=-1, keepdims=True)

    def project(z):
        return z - np.sum(u * z, axis=-1, keepdims=True) / nrm * u

    w = project(w)
    w /= np.max(np.abs(w), axis=-1, keepdims=True)
    logs = []
    for _ in range(iterations):
        w = project(monodromy_apply(w, bundle))
        g = np.max(np.abs(w), axis=-1)
        g = np.where(g > 0, g, np.finfo(float).tiny)
        logs.append(np.log(g))
        w /= g[:, None]
    half = max(1, iterations // 2)
    rate = np.exp(np.mean(logs[-half:], axis=0))
    return rate / r


def principal_eigen_many(k: Kernel, tds: list[TiltedDirection], a: PeriodicField,
                         opts: EigenOptions = EigenOptions(),
                         init: np.ndarray | None = None) -> list[EigenResult]:
    """:func:`principal_eigen` for several tilts sharing one coefficient field."""
    if not tds:
        return []
    cell = a.cell
    bundle = make_bundle(k, list(tds), a, shift_growth=True)
    if init is None:
        u0 = np.ones((len(tds), cell.n_x))
    else:
        u0 = np.broadcast_to(np.asarray(init, dtype=float), (len(tds), cell.n_x)).copy()
    u, r, r_prev, iters = _power_iterate(bundle, u0, opts.tol, opts.max_iter)
    lam = np.log(r) / cell.T + bundle.shifts
    gaps = _gap_estimates(bundle, u, r, opts.gap_iterations, opts.seed)

    _, states = monodromy_apply(u, bundle, record=True)
    stride = bundle.n_steps // cell.n_t
    states = states[::stride]                       # (n_t, B, n_x)
    results = []
    for j, td in enumerate(tds):
        vals = states[:, j, :] * np.exp(-(lam[j] - bundle.shifts[j]) * cell.t)[:, None]
        vals = vals / np.max(np.abs(vals))
        phi = PeriodicField(cell, vals)
        res = EigenResult(td=td, lambda0=float(lam[j]), phi=phi, residual=np.nan,
                          gap_estimate=float(gaps[j]), iterations=int(iters[j]),
                          quotients=(float(r_prev[j]), float(r[j])))
        res.residual = eigen_residual(res, k, td, a)
        results.append(res)
    return results


def principal_eigen(k: Kernel, td: TiltedDirection, a: PeriodicField,
                    opts: EigenOptions = EigenOptions(),
                    init: np.ndarray | None = None) -> EigenResult:
    """Principal spectrum point ``lambda0(xi, mu, a)`` with its positive eigenfunction.

    Power iteration starts from the constant field 1 unless ``init`` is given.
    """
    return principal_eigen_many(k, [td], a, opts, init)[0]


def existence_check(a: PeriodicField, lambda0: float) -> bool:
    """Principal-eigenvalue criterion ``lambda0 > -1 + max_x mean_t a``."""
    return bool(lambda0 > -1.0 + float(time_average(a).max()) + 1e-9)


def eigen_residual(res: EigenResult, k: Kernel, td: TiltedDirection, a: PeriodicField) -> float:
    """``sup |-phi_t + C phi - phi + a phi - lambda0 phi|`` on the grid.

    ``phi_t`` uses fourth-order central periodic differences in ``t``.
    """
    phi = res.phi.values
    dt = res.phi.cell.dt
    phi_t = (-np.roll(phi, -2, axis=0) + 8.0 * np.roll(phi, -1, axis=0)
             - 8.0 * np.roll(phi, 1, axis=0) + np.roll(phi, 2, axis=0)) / (12.0 * dt)
    bundle = make_bundle(k, td, a)
    lin = bundle.apply_circulant(phi) + (a.values - 1.0 - res.lambda0) * phi
    return float(np.max(np.abs(lin - phi_t)))
