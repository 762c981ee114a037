"""Spreading speed ``c*(xi) = inf_{mu > 0} lambda0(xi, mu, a0) / mu``.

``lambda0`` is convex in ``mu`` and ``lambda0(0) > 0``, so the quotient has a
single interior minimum: a geometric scan brackets it and a golden-section
search refines it.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .fields import PeriodicField
from .kernel import Kernel, TiltedDirection
from .spectrum import EigenOptions, principal_eigen_many

log = logging.getLogger(__name__)

SCAN_BASE = 0.05
SCAN_LIMIT = 100.0
MU_TOL = 1e-5


class SpeedError(RuntimeError):
    pass


class LambdaCurve:
    """Memoized ``mu -> lambda0(xi, mu, a0)`` for one kernel, direction and medium.

    Single evaluations start power iteration from the eigenvector of the
    nearest memoized ``mu`` (``warm=True``); this only changes the iteration
    count, not the converged value beyond the iteration tolerance.
    """

    def __init__(self, k: Kernel, xi: int, a0: PeriodicField,
                 opts: EigenOptions = EigenOptions(gap_iterations=0), warm: bool = True):
        self.k = k
        self.xi = int(xi)
        self.a0 = a0
        self.opts = opts
        self.warm = warm
        self._values: dict[float, float] = {}
        self._vectors: dict[float, np.ndarray] = {}

    def _store(self, results):
        for r in results:
            self._values[float(r.td.mu)] = r.lambda0
            self._vectors[float(r.td.mu)] = r.phi.values[0].copy()

    def many(self, mus) -> np.ndarray:
        mus = [float(m) for m in np.atleast_1d(mus)]
        todo = sorted({m for m in mus if m not in self._values})
        if todo:
            tds = [TiltedDirection(self.xi, m) for m in todo]
            self._store(principal_eigen_many(self.k, tds, self.a0, self.opts))
        return np.array([self._values[m] for m in mus])

    def __call__(self, mu: float) -> float:
        mu = float(mu)
        if mu not in self._values:
            init = None
            if self.warm and self._vectors:
                near = min(self._vectors, key=lambda m: abs(m - mu))
                init = self._vectors[near]
            res = principal_eigen_many(self.k, [TiltedDirection(self.xi, mu)], self.a0,
                                       self.opts, init=init)
            self._store(res)
        return self._values[mu]

    def quotient(self, mu: float) -> float:
        return self(mu) / mu

    def derivative(self, mus, h: float = 1e-4) -> np.ndarray:
        """Central differences at ``h`` and ``h/2`` combined by Richardson extrapolation."""
        mus = np.atleast_1d(np.asarray(mus, dtype=float))
        pts = np.concatenate([mus + h, mus - h, mus + h / 2, mus - h / 2])
        tight = LambdaCurve(self.k, self.xi, self.a0,
                            EigenOptions(tol=min(self.opts.tol, 1e-13), max_iter=self.opts.max_iter,
                                         gap_iterations=0))
        lam = tight.many(pts).reshape(4, -1)
        d1 = (lam[0] - lam[1]) / (2 * h)
        d2 = (lam[2] - lam[3]) / h
        return (4.0 * d2 - d1) / 3.0

    def samples(self) -> list[tuple[float, float, float]]:
        return [(m, lam, lam / m if m > 0 else np.inf)
                for m, lam in sorted(self._values.items())]


_CURVES: dict[tuple, LambdaCurve] = {}


def _curve_key(k: Kernel, xi: int, a0: PeriodicField) -> tuple:
    digest = hashlib.sha1(np.ascontiguousarray(a0.values).tobytes()).hexdigest()
    return (k.name, k.r0, int(xi), a0.cell, digest)


def curve_for(k: Kernel, xi: int, a0: PeriodicField) -> LambdaCurve:
    key = _curve_key(k, xi, a0)
    if key not in _CURVES:
        _CURVES[key] = LambdaCurve(k, xi, a0)
    return _CURVES[key]


def lambda_of_mu(k: Kernel, xi: int, a0: PeriodicField, mu: float) -> float:
    """``lambda0(xi, mu, a0)``, memoized per (kernel, xi, grid, medium, mu)."""
    if mu < 0:
        raise SpeedError(f"mu must be nonnegative, got {mu}")
    return curve_for(k, xi, a0)(mu)


@dataclass(eq=False)
class SpeedResult:
    xi: int
    c_star: float
    mu_star: float
    bracket: tuple[float, float]
    samples: list[tuple[float, float, float]] = field(repr=False)
    convexity_violations: int = 0
    derivative_violations: int | None = None

    def summary(self) -> dict:
        return {"xi": self.xi, "c_star": self.c_star, "mu_star": self.mu_star,
                "bracket": list(self.bracket),
                "convexity_violations": self.convexity_violations,
                "derivative_violations": self.derivative_violations}


def convexity_violations(samples, tol: float = 1e-8) -> int:
    """Count consecutive sample triples lying above their chord by more than ``tol``."""
    mus = np.array([s[0] for s in samples])
    lam = np.array([s[1] for s in samples])
    bad = 0
    for i in range(1, len(mus) - 1):
        w = (mus[i + 1] - mus[i]) / (mus[i + 1] - mus[i - 1])
        if lam[i] > w * lam[i - 1] + (1 - w) * lam[i + 1] + tol:
            bad += 1
    return bad


def _bracket(curve: LambdaCurve) -> tuple[float, float, float]:
    mus = [SCAN_BASE * 2.0 ** j for j in range(4)]
    q = list(curve.many(mus) / np.array(mus))
    while not (len(q) >= 3 and q[-1] > q[-2] > q[-3] and np.argmin(q) < len(q) - 2):
        nxt = mus[-1] * 2.0
        if nxt > SCAN_LIMIT:
            raise SpeedError(f"no bracket for the speed minimizer below mu={SCAN_LIMIT}")
        mus.append(nxt)
        q.append(curve.quotient(nxt))
    i = int(np.argmin(q))
    while i == 0:
        lo = mus[0] / 2.0
        mus.insert(0, lo)
        q.insert(0, curve.quotient(lo))
        i = int(np.argmin(q))
        if lo < 1e-8:
            raise SpeedError("speed quotient has no interior minimum")
    return mus[i - 1], mus[i], mus[i + 1]


def spreading_speed(k: Kernel, xi: int, a0: PeriodicField,
                    curve: LambdaCurve | None = None) -> SpeedResult:
    """Minimize ``lambda0(mu)/mu`` over ``mu > 0`` (bracket scan + golden section)."""
    curve = curve or curve_for(k, xi, a0)
    if not curve(0.0) > 0:
        raise SpeedError(f"zero state not linearly unstable (lambda0(a0)={curve(0.0):.6g} <= 0)")
    lo, mid, hi = _bracket(curve)
    opt = minimize_scalar(curve.quotient, bracket=(lo, mid, hi), method="golden",
                          options={"xtol": MU_TOL / (2.0 * hi)})
    mu_star = float(opt.x)
    if not lo < mu_star < hi:
        raise SpeedError(f"minimizer {mu_star} escaped its bracket [{lo}, {hi}]")
    samples = [s for s in curve.samples() if s[0] > 0]
    return SpeedResult(xi=int(xi), c_star=curve.quotient(mu_star), mu_star=mu_star,
                       bracket=(lo, hi), samples=samples,
                       convexity_violations=convexity_violations(curve.samples()))


@dataclass
class DerivativeReport:
    mu_star: float
    margins: list[tuple[float, float]]            # (mu, lambda/mu - lambda')
    optimality_gap: float                         # |mu* lambda'(mu*) - lambda(mu*)|
    convexity: list[tuple[float, float, float, float]]  # (mu1, mu2, alpha, violation)

    @property
    def derivative_violations(self) -> int:
        return sum(1 for _, m in self.margins if not m > 0)

    @property
    def convexity_violations(self) -> int:
        return sum(1 for *_, v in self.convexity if v > 1e-8)


def derivative_diagnostics(k: Kernel, xi: int, a0: PeriodicField, result: SpeedResult,
                           mus=None, triples=((0.2, 0.6, 0.5),),
                           curve: LambdaCurve | None = None) -> DerivativeReport:
    """Margins ``lambda/mu - lambda'`` below ``mu*``, optimality at ``mu*`` and convexity triples."""
    curve = curve or curve_for(k, xi, a0)
    mu_star = result.mu_star
    if mus is None:
        mus = mu_star * np.arange(1, 11) / 11.0
    mus = np.asarray(mus, dtype=float)
    pts = np.append(mus, mu_star)
    dlam = curve.derivative(pts)
    lam = curve.many(pts)
    margins = [(float(m), float(l / m - d)) for m, l, d in zip(mus, lam[:-1], dlam[:-1])]
    opt_gap = float(abs(mu_star * dlam[-1] - lam[-1]))
    conv = []
    mix_pts = [a * m1 + (1 - a) * m2 for m1, m2, a in triples]
    ends = [m for m1, m2, _ in triples for m in (m1, m2)]
    curve.many(ends + mix_pts)
    for (m1, m2, a), mm in zip(triples, mix_pts):
        viol = curve(mm) - (a * curve(m1) + (1 - a) * curve(m2))
        conv.append((m1, m2, a, float(viol)))
    report = DerivativeReport(mu_star, margins, opt_gap, conv)
    result.derivative_violations = report.derivative_violations
    return report
