"""Periodic spectral representation: grids, fields, the Airy group, and norms.

The real line is replaced by a torus of length L (chosen per experiment so that
wrap-around stays below tolerance over the run horizon).  Fourier convention:

    uhat(xi) = sum_j u(x_j) exp(-i x_j xi) * dx,
    u(x_j)   = (1/L) sum_xi uhat(xi) exp(+i x_j xi),

so Plancherel reads  sum |u|^2 dx = (1/L) sum |uhat|^2.  The linear group is the
diagonal multiplier exp(i t xi^3), which solves u_t + u_xxx = 0.

All values are immutable after construction; every operation is a pure function
of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "INF",
    "Grid",
    "Field",
    "SpectralField",
    "SpaceTimeTrace",
    "make_grid",
    "forward_transform",
    "inverse_transform",
    "fractional_derivative",
    "airy_propagate",
    "sobolev_norm",
    "mixed_norm_xt",
    "mixed_norm_tx",
]

#: Distinguished value encoding an infinite Lebesgue exponent (sup norm).
INF = math.inf


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with 2*pi*j/L dual frequencies, j in [-n/2, n/2)."""

    n: int
    length: float
    spacing: float = field(init=False)
    frequencies: np.ndarray = field(init=False, repr=False)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not _is_power_of_two(int(self.n)) or self.n < 8:
            raise ValueError(f"grid size must be a power of two >= 8, got {self.n}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"grid length must be positive and finite, got {self.length}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "length", float(self.length))
        object.__setattr__(self, "spacing", self.length / self.n)
        # FFT ordering: 0, 1, ..., n/2-1, -n/2, ..., -1 (times 2*pi/L)
        xi = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        xi.flags.writeable = False
        object.__setattr__(self, "frequencies", xi)
        x = self.spacing * np.arange(self.n)
        x.flags.writeable = False
        object.__setattr__(self, "nodes", x)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.n == other.n and self.length == other.length

    def __hash__(self):
        return hash((self.n, self.length))


def make_grid(n: int, length: float) -> Grid:
    """Build a periodic grid of n points (power of two) on [0, length)."""
    return Grid(n, length)


@dataclass(frozen=True)
class Field:
    """Real-valued state u on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"values shape {v.shape} does not match grid size {self.grid.n}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * self.grid.spacing))


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients uhat(xi_j) of a field, FFT ordering."""

    grid: Grid
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != (self.grid.n,):
            raise ValueError(f"coefficients shape {c.shape} does not match grid size {self.grid.n}")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)


def _check_same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise ValueError("fields live on different grids")


def forward_transform(f: Field) -> SpectralField:
    return SpectralField(f.grid, np.fft.fft(f.values) * f.grid.spacing)


def inverse_transform(sf: SpectralField) -> Field:
    vals = np.fft.ifft(sf.coefficients) / sf.grid.spacing
    return Field(sf.grid, vals.real)


def homogeneous_symbol(grid: Grid, order: float) -> np.ndarray:
    """|xi|^order with the zero mode mapped to 0, for every order."""
    xi = grid.frequencies
    sym = np.zeros(grid.n)
    nz = xi != 0.0
    sym[nz] = np.abs(xi[nz]) ** order
    return sym


def inhomogeneous_symbol(grid: Grid, order: float) -> np.ndarray:
    """(1 + xi^2)^(order/2)."""
    return (1.0 + grid.frequencies**2) ** (order / 2.0)


def fractional_derivative(f: Field, order: float, kind: str = "homogeneous",
                          force_zero_mode: bool = False) -> Field:
    """Fourier-multiplier derivative |xi|^order (homogeneous) or <xi>^order.

    Homogeneous with order < 0 requires a vanishing zero mode; pass
    force_zero_mode=True to discard it instead of raising.
    """
    if not math.isfinite(order):
        raise ValueError(f"derivative order must be finite, got {order}")
    if kind not in ("homogeneous", "inhomogeneous"):
        raise ValueError(f"unknown derivative kind {kind!r}")
    uhat = np.fft.fft(f.values) * f.grid.spacing
    if kind == "homogeneous":
        if order < 0 and not force_zero_mode:
            scale = np.sqrt(np.sum(np.abs(uhat) ** 2) / f.grid.length)
            if abs(uhat[0]) > 1e-10 * max(scale, 1e-300):
                raise ValueError(
                    "homogeneous derivative of negative order needs a vanishing "
                    "zero mode (pass force_zero_mode=True to zero it)")
        sym = homogeneous_symbol(f.grid, order)
    else:
        sym = inhomogeneous_symbol(f.grid, order)
    out = np.fft.ifft(sym * uhat) / f.grid.spacing
    return Field(f.grid, out.real)


def airy_propagate(f: Field, t: float) -> Field:
    """Apply the linear group: uhat -> exp(i t xi^3) uhat."""
    if not math.isfinite(t):
        raise ValueError(f"propagation time must be finite, got {t}")
    uhat = np.fft.fft(f.values)
    out = np.fft.ifft(np.exp(1j * t * f.grid.frequencies**3) * uhat)
    return Field(f.grid, out.real)


def propagate_coefficients(grid: Grid, uhat: np.ndarray, t: float) -> np.ndarray:
    """exp(i t xi^3) * uhat on raw coefficient arrays (batchable, last axis = n)."""
    return np.exp(1j * t * grid.frequencies**3) * uhat


def sobolev_norm(f: Field, s: float) -> float:
    """Discrete H^s norm: || <xi>^s uhat ||_2 with the grid measure (s=0 is L^2)."""
    uhat = np.fft.fft(f.values) * f.grid.spacing
    w = (1.0 + f.grid.frequencies**2) ** s
    return float(np.sqrt(np.sum(w * np.abs(uhat) ** 2) / f.grid.length))


@dataclass(frozen=True)
class SpaceTimeTrace:
    """Snapshots u(t_i, .) on a uniform time grid; substrate for mixed norms."""

    grid: Grid
    times: np.ndarray
    values: np.ndarray  # shape (m+1, n), row i = snapshot at times[i]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or len(t) < 1:
            raise ValueError("trace needs at least one time")
        if v.shape != (len(t), self.grid.n):
            raise ValueError(f"trace values shape {v.shape} incompatible with "
                             f"{len(t)} times on an n={self.grid.n} grid")
        if len(t) > 1:
            dts = np.diff(t)
            if np.any(dts <= 0):
                raise ValueError("trace times must be strictly increasing")
            if (dts.max() - dts.min()) > 1e-12 * max(dts.max(), 1e-300) * len(t):
                raise ValueError("trace times must be uniform")
        t = t.copy(); t.flags.writeable = False
        v = v.copy(); v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def snapshots(self) -> tuple:
        return tuple(Field(self.grid, row) for row in self.values)

    def snapshot(self, i: int) -> Field:
        return Field(self.grid, self.values[i])

    def restrict(self, n_times: int) -> "SpaceTimeTrace":
        """Keep the first n_times snapshots."""
        if not (1 <= n_times <= len(self.times)):
            raise ValueError(f"cannot restrict to {n_times} of {len(self.times)} snapshots")
        return SpaceTimeTrace(self.grid, self.times[:n_times], self.values[:n_times])

    def window(self, t_lo: float, t_hi: float) -> "SpaceTimeTrace":
        """Keep snapshots with t_lo - eps <= t <= t_hi + eps."""
        eps = 1e-9 * max(1.0, abs(t_hi))
        mask = (self.times >= t_lo - eps) & (self.times <= t_hi + eps)
        if not mask.any():
            raise ValueError(f"window [{t_lo}, {t_hi}] contains no snapshots")
        return SpaceTimeTrace(self.grid, self.times[mask], self.values[mask])


def _check_exponent(p: float, name: str) -> None:
    if p != INF and not (p >= 1.0):
        raise ValueError(f"exponent {name} must be in [1, inf], got {p}")


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    m = len(times)
    if m == 1:
        return np.zeros(1)
    dt = times[1] - times[0]
    w = np.full(m, dt)
    w[0] = w[-1] = dt / 2.0
    return w


def _lq_time(values: np.ndarray, times: np.ndarray, q: float) -> np.ndarray:
    """L^q in t (trapezoid; sup as max) along axis 0; returns per-x array."""
    a = np.abs(values)
    if q == INF:
        return a.max(axis=0)
    w = _trapezoid_weights(times)
    return np.einsum("t,tx->x", w, a**q) ** (1.0 / q)


def _lp_space(values_x: np.ndarray, spacing: float, p: float) -> float:
    """L^p in x (Riemann; sup as max) of a per-x array."""
    a = np.abs(values_x)
    if p == INF:
        return float(a.max())
    return float((np.sum(a**p) * spacing) ** (1.0 / p))


def mixed_norm_xt(tr: SpaceTimeTrace, p: float, q: float) -> float:
    """|| f ||_{L^p_x L^q_t}: inner L^q in time, outer L^p in space."""
    _check_exponent(p, "p")
    _check_exponent(q, "q")
    inner = _lq_time(tr.values, tr.times, q)
    return _lp_space(inner, tr.grid.spacing, p)


def mixed_norm_tx(tr: SpaceTimeTrace, q: float, p: float) -> float:
    """|| f ||_{L^q_t L^p_x}: inner L^p in space, outer L^q in time."""
    _check_exponent(p, "p")
    _check_exponent(q, "q")
    a = np.abs(tr.values)
    if p == INF:
        inner = a.max(axis=1)
    else:
        inner = (np.sum(a**p, axis=1) * tr.grid.spacing) ** (1.0 / p)
    if q == INF:
        return float(inner.max())
    w = _trapezoid_weights(tr.times)
    return float((np.sum(w * inner**q)) ** (1.0 / q))
