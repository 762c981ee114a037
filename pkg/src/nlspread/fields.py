"""Time-space periodic coefficient fields and the KPP normal form ``f = a0 - b u``."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicCell:
    T: float
    p: float
    n_t: int = 512
    n_x: int = 256

    def __post_init__(self):
        if not (self.T > 0 and self.p > 0):
            raise FieldError(f"periods must be positive (T={self.T}, p={self.p})")
        if self.n_t < 8 or self.n_x < 8:
            raise FieldError(f"grid counts must be >= 8 (n_t={self.n_t}, n_x={self.n_x})")

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def dx(self) -> float:
        return self.p / self.n_x

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t)

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.n_x)

    def refined(self, factor: int = 2) -> "PeriodicCell":
        return PeriodicCell(self.T, self.p, self.n_t * factor, self.n_x * factor)


@dataclass(frozen=True, eq=False)
class PeriodicField:
    """Samples ``values[k, i] = u(k dt, i dx)`` of a (T, p)-periodic function."""

    cell: PeriodicCell
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.cell.n_t, self.cell.n_x):
            raise FieldError(f"field shape {v.shape} does not match cell "
                             f"({self.cell.n_t}, {self.cell.n_x})")
        if not np.all(np.isfinite(v)):
            raise FieldError("field has non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, cell: PeriodicCell, value: float) -> "PeriodicField":
        return cls(cell, np.full((cell.n_t, cell.n_x), float(value)))

    def at(self, k, i) -> np.ndarray:
        """Wrap-around indexing on both axes."""
        return self.values[np.mod(k, self.cell.n_t), np.mod(i, self.cell.n_x)]

    def __add__(self, other) -> "PeriodicField":
        if isinstance(other, PeriodicField):
            return PeriodicField(self.cell, self.values + other.values)
        return PeriodicField(self.cell, self.values + float(other))

    def __mul__(self, other) -> "PeriodicField":
        if isinstance(other, PeriodicField):
            return PeriodicField(self.cell, self.values * other.values)
        return PeriodicField(self.cell, self.values * float(other))

    __radd__ = __add__
    __rmul__ = __mul__

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def reflected(self) -> "PeriodicField":
        """``u(t, -x)``; maps direction ``xi`` problems to ``-xi`` problems."""
        idx = (-np.arange(self.cell.n_x)) % self.cell.n_x
        return PeriodicField(self.cell, self.values[:, idx])

    def is_time_independent(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.values - self.values[:1])) <= tol)

    def is_space_independent(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.values - self.values[:, :1])) <= tol)

    def values_at(self, times) -> np.ndarray:
        """Rows at arbitrary times by trigonometric interpolation in ``t``.

        Exact at grid times and for fields band-limited below the ``n_t``
        Nyquist frequency.
        """
        tau = np.asarray(times, dtype=float)
        n = self.cell.n_t
        coef = np.fft.rfft(self.values, axis=0) / n
        m = np.arange(coef.shape[0])
        wgt = np.full(m.size, 2.0)
        wgt[0] = 1.0
        if n % 2 == 0:
            wgt[-1] = 1.0
        ang = 2.0 * np.pi * np.multiply.outer(tau, m) / self.cell.T
        out = (np.cos(ang) * wgt) @ coef.real - (np.sin(ang) * wgt) @ coef.imag
        return out

    def stage_values(self, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
        """Values at ``q h`` and ``(q + 1/2) h`` for ``h = T/n_steps``, ``q < n_steps``."""
        h = self.cell.T / n_steps
        q = np.arange(n_steps)
        return self.values_at(q * h), self.values_at((q + 0.5) * h)


@dataclass(frozen=True, eq=False)
class FitnessSpec:
    """``f(t, x, u) = a0(t, x) - b(t, x) u`` with ``b >= b_min > 0``."""

    a0: PeriodicField
    b: PeriodicField

    def __post_init__(self):
        if self.a0.cell != self.b.cell:
            raise FieldError("a0 and b live on different cells")

    @property
    def cell(self) -> PeriodicCell:
        return self.a0.cell

    @property
    def b_min(self) -> float:
        return self.b.min()

    def reflected(self) -> "FitnessSpec":
        return FitnessSpec(self.a0.reflected(), self.b.reflected())


def evaluate_fourier(modes: Iterable[Sequence[float]], cell: PeriodicCell,
                     constant: float = 0.0) -> PeriodicField:
    """Sample ``constant + sum amp*cos(2 pi m t/T + 2 pi n x/p + phase)``.

    ``modes`` holds ``(m, n, amp, phase)`` rows; a sine mode is a cosine with
    phase ``-pi/2``.
    """
    t = cell.t[:, None]
    x = cell.x[None, :]
    out = np.full((cell.n_t, cell.n_x), float(constant))
    for row in modes:
        m, n, amp, phase = (list(row) + [0.0])[:4]
        if m != int(m) or n != int(n):
            raise FieldError(f"mode indices must be integers, got ({m}, {n})")
        m, n = int(m), int(n)
        if 2 * abs(m) >= cell.n_t or 2 * abs(n) >= cell.n_x:
            raise FieldError(f"mode ({m}, {n}) is beyond the Nyquist limit of the "
                             f"{cell.n_t}x{cell.n_x} grid")
        out += amp * np.cos(2 * np.pi * m * t / cell.T + 2 * np.pi * n * x / cell.p + phase)
    return PeriodicField(cell, out)


def fourier_project(field: PeriodicField, modes: Iterable[tuple[int, int]]) -> list[tuple[float, float]]:
    """Amplitude and phase of each ``(m, n)`` cosine mode (inverse of :func:`evaluate_fourier`)."""
    cell = field.cell
    t = cell.t[:, None]
    x = cell.x[None, :]
    out = []
    for m, n in modes:
        if m == 0 and n == 0:
            out.append((float(field.values.mean()), 0.0))
            continue
        c = np.mean(field.values * np.exp(-1j * (2 * np.pi * m * t / cell.T
                                                  + 2 * np.pi * n * x / cell.p)))
        out.append((2.0 * abs(c), float(np.angle(c))))
    return out


def time_average(a: PeriodicField) -> np.ndarray:
    """``(1/T) int_0^T a(t, x) dt``; periodic trapezoid rule, i.e. the row mean."""
    return a.values.mean(axis=0)


@dataclass(frozen=True)
class HypothesisReport:
    h1: bool
    h2: bool
    principal: bool
    b_min: float
    lambda0: float
    max_time_average: float

    @property
    def ok(self) -> bool:
        return self.h1 and self.h2 and self.principal


def check_hypotheses(fs: FitnessSpec, lambda0: float) -> HypothesisReport:
    """Report monostability (b_min > 0, lambda0(a0) > 0) and the principal-eigenvalue criterion."""
    top = float(time_average(fs.a0).max())
    return HypothesisReport(
        h1=fs.b_min > 0,
        h2=lambda0 > 0,
        principal=lambda0 > -1.0 + top + 1e-9,
        b_min=fs.b_min,
        lambda0=float(lambda0),
        max_time_average=top,
    )


def save_field_csv(field: PeriodicField, path: str | Path) -> None:
    """Write rows ``t_k`` x columns ``x_i`` with a metadata header line."""
    c = field.cell
    header = f"nlspread-field T={c.T!r} p={c.p!r} n_t={c.n_t} n_x={c.n_x}"
    np.savetxt(path, field.values, delimiter=",", header=header, fmt="%.17g")


def load_field_csv(path: str | Path) -> PeriodicField:
    with open(path) as fh:
        first = fh.readline().lstrip("#").split()
    if not first or first[0] != "nlspread-field":
        raise FieldError(f"{path}: missing field header")
    meta = dict(item.split("=", 1) for item in first[1:])
    cell = PeriodicCell(float(meta["T"]), float(meta["p"]), int(meta["n_t"]), int(meta["n_x"]))
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    return PeriodicField(cell, values)
