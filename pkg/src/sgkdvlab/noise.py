"""Additive forcing g(t) phi(x) dB: paths, stochastic convolution, and tail.

The convolution z(t) = int_0^t V(t-s) phi g(s) dB(s) is computed by the
exact-in-Fourier left-point recursion z_{n+1} = V(dt)(z_n + phi g(t_n) dB_n).
Its tail z_*(t) = int_t^inf V(t-s) phi g dB is truncated at a horizon chosen
by the mass rule int_horizon^inf g^2 <= 1e-4 int_t^inf g^2 and integrated on
a geometrically stretched cell lattice (for the default envelope
g = (1+t)^-gamma with gamma slightly above 1/2 the horizon sits ~1e10 t out,
far beyond any uniform grid).

Randomness is counter-based (Philox) keyed by (seed, stream): ensemble member
j draws its path from stream j and its far-tail cells from stream 2^32 + j,
so ensembles are order-independent and safely parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import Field, Grid, SpaceTimeTrace, sobolev_norm

__all__ = [
    "NoiseSpec",
    "BrownianPath",
    "sample_path",
    "stochastic_convolution",
    "tail_convolution",
    "tail_trace",
    "tail_decay_probe",
    "TailDecayFit",
    "expected_convolution_energy",
    "expected_tail_energy",
    "default_horizon",
    "gaussian_profile",
    "sech2_profile",
]

_TAIL_STREAM_OFFSET = 2**32
_TAIL_MASS_RULE = 1e-4
_TAIL_RATIO = 1.0 / 512.0


@dataclass(frozen=True)
class NoiseSpec:
    """Forcing dW = g(t) phi(x) dB with a deterministic envelope g.

    envelope=None means the power envelope (1+t)^-gamma; any callable
    t -> g(t) (vectorized over numpy arrays) may be supplied instead.
    """

    phi: Field
    gamma: float
    envelope: Callable | None = None
    seed: int = 0

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"envelope decay exponent must be positive, got {self.gamma}")
        if not math.isfinite(sobolev_norm(self.phi, 3.0)):
            raise ValueError("noise profile must have finite H^3 norm on its grid")

    def g(self, t):
        if self.envelope is not None:
            return self.envelope(t)
        return (1.0 + np.asarray(t, dtype=float)) ** (-self.gamma)


@dataclass(frozen=True)
class BrownianPath:
    """Uniform-step increments dB_n ~ N(0, dt), reproducible from the seed."""

    dt: float
    increments: np.ndarray
    seed: int

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"path step must be positive, got {self.dt}")
        inc = np.asarray(self.increments, dtype=float).copy()
        inc.flags.writeable = False
        object.__setattr__(self, "increments", inc)

    @property
    def m(self) -> int:
        return len(self.increments)


def _stream(seed: int, index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & (2**64 - 1)), np.uint64(index & (2**64 - 1))])
    return np.random.Generator(np.random.Philox(key=key))


def sample_path(seed: int, dt: float, m: int, stream: int = 0) -> BrownianPath:
    """m i.i.d. N(0, dt) increments from the counter-based stream (seed, stream)."""
    if not (dt > 0 and m >= 1):
        raise ValueError("need dt > 0 and at least one step")
    inc = _stream(seed, stream).standard_normal(m) * math.sqrt(dt)
    return BrownianPath(dt, inc, seed)


def _align_times(times: np.ndarray, dt: float, m: int) -> np.ndarray:
    idx = np.asarray(times, dtype=float) / dt
    rounded = np.rint(idx).astype(int)
    if np.max(np.abs(idx - rounded)) > 1e-8:
        raise ValueError("requested times do not sit on the path's step grid")
    if np.any(rounded < 0) or np.any(rounded > m):
        raise ValueError("requested times fall outside the path")
    if np.any(np.diff(rounded) <= 0) and len(rounded) > 1:
        raise ValueError("requested times must be increasing")
    return rounded


def stochastic_convolution(spec: NoiseSpec, path: BrownianPath, times) -> SpaceTimeTrace:
    """Trace of z(t) on the requested times (which must lie on the path grid)."""
    grid = spec.phi.grid
    times = np.asarray(times, dtype=float)
    snaps_at = _align_times(times, path.dt, path.m)
    phase = np.exp(1j * path.dt * grid.frequencies**3)
    phihat = np.fft.fft(spec.phi.values)
    zhat = np.zeros(grid.n, dtype=complex)
    out = np.empty((len(times), grid.n))
    pos = 0
    want = {int(k): i for i, k in enumerate(snaps_at)}
    if 0 in want:
        out[want[0]] = 0.0
    g_vals = np.asarray(spec.g(path.dt * np.arange(path.m)), dtype=float)
    for n in range(int(snaps_at.max())):
        zhat = phase * (zhat + phihat * (g_vals[n] * path.increments[n]))
        if (n + 1) in want:
            out[want[n + 1]] = np.fft.ifft(zhat).real
        pos = n + 1
    return SpaceTimeTrace(grid, times, out)


def convolution_sq_l2_ensemble(spec: NoiseSpec, n_paths: int, dt: float, times) -> np.ndarray:
    """||z(t)||_2^2 for an ensemble, batched over paths; shape (n_paths, n_times)."""
    grid = spec.phi.grid
    times = np.asarray(times, dtype=float)
    m = int(round(times.max() / dt))
    snaps_at = _align_times(times, dt, m)
    want = {int(k): i for i, k in enumerate(snaps_at)}
    inc = np.empty((n_paths, m))
    for j in range(n_paths):
        inc[j] = _stream(spec.seed, j).standard_normal(m)
    inc *= math.sqrt(dt)
    g_vals = np.asarray(spec.g(dt * np.arange(m)), dtype=float)
    phase = np.exp(1j * dt * grid.frequencies**3)
    phihat = np.fft.fft(spec.phi.values)
    zhat = np.zeros((n_paths, grid.n), dtype=complex)
    out = np.empty((n_paths, len(times)))
    if 0 in want:
        out[:, want[0]] = 0.0
    # discrete Plancherel: ||z||_2^2 = (dx/n) sum |zhat|^2
    w_pl = grid.spacing / grid.n
    for n in range(m):
        zhat += phihat[None, :] * (g_vals[n] * inc[:, n])[:, None]
        zhat *= phase[None, :]
        if (n + 1) in want:
            out[:, want[n + 1]] = w_pl * np.sum(np.abs(zhat) ** 2, axis=1)
    return out


def _g2_integral(spec: NoiseSpec, a: float, b: float) -> float:
    """int_a^b g^2, closed form for the power envelope, quadrature otherwise."""
    if spec.envelope is None:
        two_g = 2.0 * spec.gamma
        if b == math.inf:
            if two_g <= 1.0:
                return math.inf
            return (1.0 + a) ** (1.0 - two_g) / (two_g - 1.0)
        if two_g == 1.0:
            return math.log((1.0 + b) / (1.0 + a))
        return ((1.0 + a) ** (1.0 - two_g) - (1.0 + b) ** (1.0 - two_g)) / (two_g - 1.0)
    upper = b if b != math.inf else (1.0 + a) * 1e8
    s = np.geomspace(a + 1.0, upper + 1.0, 20001) - 1.0
    return float(np.trapezoid(np.asarray(spec.g(s), dtype=float) ** 2, s))


def expected_convolution_energy(spec: NoiseSpec, t: float) -> float:
    """E ||z(t)||_2^2 = ||phi||_2^2 int_0^t g^2 (isometry + unitarity)."""
    return spec.phi.l2_norm() ** 2 * _g2_integral(spec, 0.0, t)


def expected_tail_energy(spec: NoiseSpec, t: float) -> float:
    """E ||z_*(t)||_2^2 = ||phi||_2^2 int_t^inf g^2."""
    return spec.phi.l2_norm() ** 2 * _g2_integral(spec, t, math.inf)


def default_horizon(spec: NoiseSpec, t: float) -> float:
    """Smallest horizon satisfying the 1e-4 tail-mass truncation rule."""
    target = _TAIL_MASS_RULE * _g2_integral(spec, t, math.inf)
    if not (target > 0 and math.isfinite(target)):
        raise ValueError("tail mass is not finite; need int g^2 < inf (gamma > 1/2)")
    if spec.envelope is None:
        two_g = 2.0 * spec.gamma
        return (1.0 + t) * _TAIL_MASS_RULE ** (-1.0 / (two_g - 1.0)) - 1.0
    lo, hi = t, t + 1.0
    while _g2_integral(spec, hi, math.inf) > target:
        hi = 2.0 * hi + 1.0
        if hi > 1e18:
            raise ValueError("could not satisfy the tail truncation rule")
    return hi


def _tail_cells(t: float, horizon: float, head: float) -> tuple[np.ndarray, np.ndarray]:
    """Left endpoints and widths of the stretched lattice covering [t, horizon]."""
    if not (horizon > t):
        raise ValueError("horizon must exceed the evaluation time")
    lefts = [t]
    cur = t
    while cur < horizon:
        w = max(head, cur * _TAIL_RATIO)
        cur = min(cur + w, horizon)
        lefts.append(cur)
        if len(lefts) > 600_000:
            raise ValueError("tail lattice too fine; increase the head width")
    lefts = np.asarray(lefts)
    return lefts[:-1], np.diff(lefts)


def _check_horizon_rule(spec: NoiseSpec, t: float, horizon: float) -> None:
    total = _g2_integral(spec, t, math.inf)
    beyond = _g2_integral(spec, horizon, math.inf)
    if not (beyond <= _TAIL_MASS_RULE * total * (1.0 + 1e-9)):
        raise ValueError(
            f"horizon {horizon:g} keeps {beyond / total:.2e} of the tail mass; "
            f"the truncation rule requires <= {_TAIL_MASS_RULE:g}")


def _tail_hat(spec: NoiseSpec, stream: np.random.Generator, t: float,
              horizon: float, head: float, grid: Grid) -> np.ndarray:
    """Fourier coefficients of z_*(t) from freshly drawn cell increments."""
    tau, w = _tail_cells(t, horizon, head)
    g_vals = np.asarray(spec.g(tau), dtype=float)
    dB = stream.standard_normal(len(tau)) * np.sqrt(w)
    xi3 = grid.frequencies**3
    # z_*hat(t) = -sum_k exp(i (t - tau_k) xi^3) phihat g_k dB_k; the minus is
    # the orientation that closes the decomposition algebra: with it,
    # u_* = u - z_* evolves noise-free and V(s-t) z_*(t) = z_*(s) minus the
    # forward increment over [t, s].
    phases = np.exp(1j * np.outer(t - tau, xi3))
    phihat = np.fft.fft(spec.phi.values)
    return -(phihat * (g_vals * dB) @ phases)


def tail_convolution(spec: NoiseSpec, path: BrownianPath, t: float,
                     horizon: float, stream_index: int = 0) -> Field:
    """z_*(t) truncated at the horizon (which must obey the mass rule).

    The stretched lattice resolves the envelope at the path's step near t and
    relaxes geometrically; increments come from the tail stream of the path's
    seed, so the result is reproducible and independent of other draws.
    """
    _check_horizon_rule(spec, t, horizon)
    stream = _stream(path.seed, _TAIL_STREAM_OFFSET + stream_index)
    grid = spec.phi.grid
    zhat = _tail_hat(spec, stream, t, horizon, path.dt, grid)
    return Field(grid, np.fft.ifft(zhat).real)


def tail_sq_l2_ensemble(spec: NoiseSpec, n_paths: int, t: float, horizon: float,
                        head: float = 0.02) -> np.ndarray:
    """||z_*(t)||_2^2 over an ensemble (batched); shape (n_paths,)."""
    _check_horizon_rule(spec, t, horizon)
    grid = spec.phi.grid
    tau, w = _tail_cells(t, horizon, head)
    g_vals = np.asarray(spec.g(tau), dtype=float)
    sqrt_w = np.sqrt(w)
    phases = np.exp(1j * np.outer(t - tau, grid.frequencies**3))
    phihat = np.fft.fft(spec.phi.values)
    w_pl = grid.spacing / grid.n
    out = np.empty(n_paths)
    chunk = max(1, int(4e7 // max(len(tau), 1)))
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        dB = np.empty((hi - lo, len(tau)))
        for j in range(lo, hi):
            dB[j - lo] = _stream(spec.seed, _TAIL_STREAM_OFFSET + j).standard_normal(len(tau))
        coef = (dB * (g_vals * sqrt_w)[None, :]) @ phases
        coef *= phihat[None, :]
        out[lo:hi] = w_pl * np.sum(np.abs(coef) ** 2, axis=1)
    return out


def tail_trace(spec: NoiseSpec, path: BrownianPath, t_grid, horizon: float,
               stream_index: int = 0) -> SpaceTimeTrace:
    """z_*(t) sampled on a uniform t_grid, one shared cell lattice per call.

    All evaluation times share the cells of the lattice anchored at t_grid[0],
    so pathwise identities (pullback/increment consistency) hold exactly at
    the lattice times.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    t0 = float(t_grid[0])
    _check_horizon_rule(spec, t0, horizon)
    grid = spec.phi.grid
    tau, w = _tail_cells(t0, horizon, path.dt)
    stream = _stream(path.seed, _TAIL_STREAM_OFFSET + stream_index)
    dB = stream.standard_normal(len(tau)) * np.sqrt(w)
    g_vals = np.asarray(spec.g(tau), dtype=float)
    phihat = np.fft.fft(spec.phi.values)
    xi3 = grid.frequencies**3
    # prefix sums of V(-tau_k) phi g_k dB_k, then z_*(t) = -V(t) (S_inf - S_<t)
    terms = -phihat[None, :] * ((g_vals * dB)[:, None] * np.exp(-1j * np.outer(tau, xi3)))
    suffix = np.cumsum(terms[::-1], axis=0)[::-1]
    out = np.empty((len(t_grid), grid.n))
    for i, t in enumerate(t_grid):
        k = int(np.searchsorted(tau, t - 1e-12 * max(1.0, t)))
        zhat = suffix[k] * np.exp(1j * t * xi3) if k < len(tau) else np.zeros(grid.n, complex)
        out[i] = np.fft.ifft(zhat).real
    return SpaceTimeTrace(grid, t_grid, out)


@dataclass(frozen=True)
class TailDecayFit:
    slope: float
    stderr: float
    t_grid: tuple
    means: tuple
    n_paths: int


def tail_decay_probe(spec: NoiseSpec, t_grid, n_paths: int) -> TailDecayFit:
    """Least-squares slope of log E||z_*(t)||^2 against log t."""
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    if t_grid[-1] / t_grid[0] < 10.0 * (1 - 1e-12):
        raise ValueError("probe needs at least a decade of evaluation times")
    if n_paths < 500:
        raise ValueError("probe needs at least 500 paths")
    means = []
    for t in t_grid:
        horizon = default_horizon(spec, float(t))
        sq = tail_sq_l2_ensemble(spec, n_paths, float(t), horizon)
        means.append(float(np.mean(sq)))
    x = np.log(t_grid)
    y = np.log(np.asarray(means))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    dof = max(len(x) - 2, 1)
    se = math.sqrt(float(np.sum(resid**2)) / dof / float(np.sum((x - x.mean()) ** 2)))
    return TailDecayFit(float(slope), se, tuple(t_grid), tuple(means), n_paths)


def gaussian_profile(grid: Grid, amplitude: float = 1.0, width: float = 1.0,
                     center: float | None = None) -> Field:
    """amplitude * exp(-((x-c)/width)^2) centered in the box by default."""
    c = grid.length / 2.0 if center is None else center
    return Field(grid, amplitude * np.exp(-(((grid.nodes - c) / width) ** 2)))


def sech2_profile(grid: Grid, amplitude: float = 1.0, width: float = 1.0,
                  center: float | None = None) -> Field:
    c = grid.length / 2.0 if center is None else center
    return Field(grid, amplitude / np.cosh((grid.nodes - c) / width) ** 2)
