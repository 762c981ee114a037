"""Dispersal kernels: construction, tilted moments and grid discretizations.

A kernel is an even, compactly supported probability density ``k`` on
``[-r0, r0]``.  Two discretizations are provided, both built from the same
node samples so that they agree to round-off:

* :func:`periodize` folds ``exp(-mu*xi*s) k(s)`` onto one spatial cell and
  returns the weights of a circulant acting on ``p``-periodic samples;
* :class:`LineConvolver` applies the untilted kernel on a truncated line whose
  two ends are padded with ``r0`` worth of boundary values.

Discrete weights are rescaled so that the untilted weights sum to exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

BUILTIN_KERNELS = ("biweight", "triweight")


class KernelError(ValueError):
    pass


def _biweight(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1.0, (15.0 / 16.0) * (1.0 - s * s) ** 2, 0.0)


def _triweight(s):
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1.0, (35.0 / 32.0) * (1.0 - s * s) ** 3, 0.0)


_UNIT_PROFILES: dict[str, Callable] = {"biweight": _biweight, "triweight": _triweight}


@dataclass(frozen=True)
class TiltedDirection:
    """Direction ``xi`` (+1 or -1 on the line) and exponential rate ``mu``."""

    xi: int = 1
    mu: float = 0.0

    def __post_init__(self):
        if self.xi not in (1, -1):
            raise KernelError(f"direction must be +1 or -1, got {self.xi!r}")

    @property
    def rate(self) -> float:
        """Signed rate ``mu*xi``; the only combination the 1-D operator sees."""
        return float(self.mu) * self.xi


@dataclass(frozen=True)
class Kernel:
    name: str
    r0: float
    profile: Callable = field(repr=False, compare=False)
    samples: np.ndarray = field(repr=False, compare=False)
    second_moment: float = 0.0

    def __call__(self, s):
        return self.profile(s)

    @property
    def support(self) -> tuple[float, float]:
        return (-self.r0, self.r0)


def make_kernel(shape: str | Sequence[float] | np.ndarray = "biweight", r0: float = 1.0,
                n_samples: int = 257) -> Kernel:
    """Build a normalized kernel from a built-in name or a sample table.

    A sample table is a sequence of nonnegative values on a uniform grid over
    ``[-r0, r0]`` (endpoints included).  It is resampled with a clamped cubic
    spline so that the profile is C^1 and vanishes with its derivative at the
    support edges.  The profile is rescaled to unit integral either way.
    """
    if not r0 > 0:
        raise KernelError(f"kernel radius must be positive, got {r0!r}")
    if isinstance(shape, str):
        if shape not in _UNIT_PROFILES:
            raise KernelError(
                f"unknown kernel {shape!r}; built-in kernels are: {', '.join(BUILTIN_KERNELS)}")
        unit = _UNIT_PROFILES[shape]
        r = float(r0)

        def profile(s, _u=unit, _r=r):
            return _u(np.asarray(s, dtype=float) / _r) / _r

        name = shape
    else:
        profile = _profile_from_table(np.asarray(shape, dtype=float), float(r0))
        name = "table"

    total = quad(profile, -r0, r0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    if not total > 0:
        raise KernelError("kernel not positive on support")
    if abs(total - 1.0) > 1e-12:
        raw = profile

        def profile(s, _raw=raw, _z=total):
            return _raw(s) / _z

    m2 = quad(lambda s: s * s * profile(s), -r0, r0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    grid = np.linspace(-r0, r0, n_samples)
    return Kernel(name=name, r0=float(r0), profile=profile,
                  samples=np.asarray(profile(grid)), second_moment=m2)


def _profile_from_table(values: np.ndarray, r0: float) -> Callable:
    if values.ndim != 1 or values.size < 5:
        raise KernelError("kernel table needs at least 5 samples on a uniform grid")
    if np.any(values < 0):
        raise KernelError(f"negative kernel sample (min {values.min():.3g})")
    if not np.any(values > 0):
        raise KernelError("kernel not positive on support")
    asym = np.max(np.abs(values - values[::-1]))
    if asym > 1e-12:
        raise KernelError(f"kernel table is not even (asymmetry {asym:.3g})")
    if values[0] != 0.0 or values[-1] != 0.0:
        raise KernelError("kernel must vanish at the support edges")
    s = np.linspace(-r0, r0, values.size)
    h = s[1] - s[0]
    scale = np.max(values)
    # second-order one-sided slope at the edge; C^1 extension by zero needs it ~0
    edge_slope = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    if abs(edge_slope) > 0.1 * scale / r0:
        raise KernelError("kernel derivative does not vanish at the support edges")
    if np.any(values[1:-1] <= 0):
        raise KernelError("kernel not positive on support")
    spline = CubicSpline(s, values, bc_type="clamped")

    def profile(x):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) < r0
        out = np.zeros_like(x)
        out[inside] = spline(x[inside])
        return np.maximum(out, 0.0) if out.ndim else float(max(out, 0.0))

    return profile


def moment_transform(k: Kernel, mu: float) -> float:
    """``int exp(-mu s) k(s) ds`` by adaptive quadrature (sign of ``mu`` carries xi)."""
    return quad(lambda s: np.exp(-mu * s) * k(s), -k.r0, k.r0,
                epsabs=0.0, epsrel=1e-12, limit=200)[0]


def _discrete_mass(k: Kernel, dx: float) -> float:
    j = int(np.floor(k.r0 / dx))
    s = dx * np.arange(-j, j + 1)
    return dx * float(np.sum(k(s)))


def wrap_count(k: Kernel, p: float) -> int:
    """Number of distinct cell translates ``s + m p`` meeting the open support."""
    return int(np.ceil(2.0 * k.r0 / p)) + 1


def periodize(k: Kernel, td: TiltedDirection | float, p: float, n_x: int) -> np.ndarray:
    """Circulant weights ``w_j`` with ``(C u)_i = sum_j w_j u_{i+j}`` on ``n_x`` cell nodes.

    ``w_j = dx * sum_m exp(-rate (s_j + m p)) k(s_j + m p)`` with ``s_j = j dx``,
    divided by the untilted discrete mass.
    """
    if n_x < 8:
        raise KernelError("n_x must be at least 8")
    if not p > 0:
        raise KernelError("cell period must be positive")
    rate = td.rate if isinstance(td, TiltedDirection) else float(td)
    dx = p / n_x
    s = dx * np.arange(n_x)
    m_lo = int(np.floor(-k.r0 / p)) - 1
    m_hi = int(np.ceil(k.r0 / p)) + 1
    w = np.zeros(n_x)
    for m in range(m_lo, m_hi + 1):
        sm = s + m * p
        w += np.exp(-rate * sm) * k(sm)
    return w * dx / _discrete_mass(k, dx)


def circulant_matrix(w: np.ndarray) -> np.ndarray:
    """Dense matrix of the circulant defined by :func:`periodize` weights."""
    n = w.size
    idx = (np.arange(n)[None, :] - np.arange(n)[:, None]) % n
    return w[idx]


def apply_circulant(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``sum_j w_j u_{i+j}`` along the last axis, by FFT."""
    n = w.shape[-1]
    v = np.roll(w[..., ::-1], 1, axis=-1)
    return sfft.irfft(sfft.rfft(v, axis=-1) * sfft.rfft(u, axis=-1), n=n, axis=-1)


def line_weights(k: Kernel, dx: float) -> np.ndarray:
    """Untilted symmetric taps ``dx k(j dx)``, ``|j| <= floor(r0/dx)``, unit sum."""
    j = int(np.floor(k.r0 / dx))
    s = dx * np.arange(-j, j + 1)
    w = dx * k(s)
    return w / w.sum()


class LineConvolver:
    """Open-boundary convolution of interior values padded by ``half_width`` nodes per side.

    Works on arrays of shape ``(..., n + 2*half_width)`` and returns the
    ``(..., n)`` interior result.  Direct summation rather than FFT: exact zeros
    ahead of a front stay exactly zero, whereas FFT round-off there would be
    amplified by the unstable zero state.
    """

    def __init__(self, k: Kernel, dx: float):
        self.taps = line_weights(k, dx)
        self.half_width = (self.taps.size - 1) // 2

    def __call__(self, u_ext: np.ndarray) -> np.ndarray:
        u_ext = np.asarray(u_ext, dtype=float)
        if u_ext.ndim == 1:
            return np.convolve(u_ext, self.taps, mode="valid")
        flat = u_ext.reshape(-1, u_ext.shape[-1])
        out = np.stack([np.convolve(row, self.taps, mode="valid") for row in flat])
        return out.reshape(u_ext.shape[:-1] + (out.shape[-1],))
