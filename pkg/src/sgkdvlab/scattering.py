"""Forward-scattering diagnostics at finite horizon.

The solution splits as u = u_* + z_* (difference off the future-noise
response); re-seeding the deterministic flow from y(T) = u_*(T) defines the
comparison solution y and the difference v = u - z_* - y, which starts at
zero and measures how much future noise perturbs the deterministic
asymptotics.  The pullbacks V(-t) u(t) supply Cauchy increments whose decay
is the finite-horizon surrogate for the existence of a scattering state.

"Infinite horizon" is realized as a finite run horizon plus the tail-mass
truncation rule of the noise module; every report carries the residual
integral int_horizon^inf g^2 so the truncation is quantified, not hidden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import (INF, Field, SpaceTimeTrace, airy_propagate,
                       mixed_norm_xt, sobolev_norm)
from .noise import NoiseSpec, BrownianPath, _g2_integral, _stream, _tail_cells, default_horizon
from .solver import SolverConfig, evolve

__all__ = [
    "ScatteringReport",
    "decompose",
    "solve_v",
    "scattering_size",
    "scattering_diagnostic",
    "coevolve",
    "CoevolvedPath",
    "vdiff_from_coevolved",
]


@dataclass(frozen=True)
class ScatteringReport:
    t_checkpoints: tuple
    cauchy_increments: tuple
    scattering_size: float
    u_plus: Field
    v_norms: dict | None = None

    def __post_init__(self):
        if any(c < 0 for c in self.cauchy_increments):
            raise ValueError("Cauchy increments are norms and cannot be negative")
        if any(b <= a for a, b in zip(self.t_checkpoints, self.t_checkpoints[1:])):
            raise ValueError("checkpoints must increase")


def decompose(u_trace: SpaceTimeTrace, zstar_trace: SpaceTimeTrace) -> SpaceTimeTrace:
    """u_* = u - z_* on aligned traces."""
    if u_trace.grid != zstar_trace.grid:
        raise ValueError("traces live on different grids")
    if u_trace.values.shape != zstar_trace.values.shape or \
            not np.allclose(u_trace.times, zstar_trace.times, rtol=0, atol=1e-10):
        raise ValueError("traces are not aligned in time")
    return SpaceTimeTrace(u_trace.grid, u_trace.times,
                          u_trace.values - zstar_trace.values)


def scattering_size(trace: SpaceTimeTrace, k: int) -> float:
    """The mixed norm that measures scattering: L^5_x L^10_t for k=4,
    L^{5k/4}_x L^{5k/2}_t for k>4."""
    if k < 4:
        raise ValueError("nonlinearity degree must be >= 4")
    if k == 4:
        return mixed_norm_xt(trace, 5.0, 10.0)
    return mixed_norm_xt(trace, 5.0 * k / 4.0, 5.0 * k / 2.0)


@dataclass(frozen=True)
class CoevolvedPath:
    """One noise realization: u (stochastic), its tail z_*, and u_* = u - z_*."""

    u: SpaceTimeTrace
    zstar: SpaceTimeTrace
    ustar: SpaceTimeTrace
    g2_residual: float  # int_{far horizon}^inf g^2, the quantified truncation


def coevolve(u0: Field, cfg: SolverConfig, spec: NoiseSpec, path: BrownianPath,
             horizon: float, snapshot_stride: int = 1,
             stream_index: int = 0) -> CoevolvedPath:
    """Drive u and its future-noise tail from the same increments.

    z_*(t) sums the path's own increments on [t, horizon) plus a far field
    over geometric cells on [horizon, H_far] drawn from the path's tail
    stream, where H_far obeys the truncation rule relative to t = 0.
    """
    grid = cfg.grid
    n_steps = int(round(horizon / cfg.dt))
    if abs(n_steps * cfg.dt - horizon) > 1e-9 * horizon:
        raise ValueError("horizon must be a multiple of the solver step")
    if path.m < n_steps:
        raise ValueError("path too short for the horizon")
    u_trace = evolve(u0, cfg, n_steps, snapshot_stride, spec=spec, path=path)

    xi3 = grid.frequencies**3
    phihat = np.fft.fft(spec.phi.values)
    # far field: sum over [horizon, H_far] of V(-tau) phi g dB from the tail stream
    h_far = max(default_horizon(spec, horizon), horizon * 1.0001)
    tau_far, w_far = _tail_cells(horizon, h_far, head=max(cfg.dt, horizon * 1e-3))
    stream = _stream(path.seed, 2**32 + stream_index)
    db_far = stream.standard_normal(len(tau_far)) * np.sqrt(w_far)
    g_far = np.asarray(spec.g(tau_far), dtype=float)
    far_hat = -phihat * ((g_far * db_far) @ np.exp(-1j * np.outer(tau_far, xi3)))

    # suffix sums over the path's own steps.  The kernel sits at t_{j+1} (not
    # t_j) to match the solver's splitting exactly: the solver adds the j-th
    # increment raw at the end of step j, so the linear flow propagates it
    # from t_{j+1} onward, and with this choice u - z_* - y carries no
    # noise-convention mismatch (only the nonlinear splitting residual).
    t_steps = cfg.dt * np.arange(n_steps)
    g_steps = np.asarray(spec.g(t_steps), dtype=float)
    terms = -phihat[None, :] * ((g_steps * path.increments[:n_steps])[:, None]
                                * np.exp(-1j * np.outer(t_steps + cfg.dt, xi3)))
    suffix = np.zeros((n_steps + 1, grid.n), dtype=complex)
    suffix[:-1] = np.cumsum(terms[::-1], axis=0)[::-1]

    z_rows = np.empty_like(u_trace.values)
    for i, t in enumerate(u_trace.times):
        j = int(round(t / cfg.dt))
        zhat = (suffix[j] + far_hat) * np.exp(1j * t * xi3)
        z_rows[i] = np.fft.ifft(zhat).real
    zstar = SpaceTimeTrace(grid, u_trace.times, z_rows)
    ustar = SpaceTimeTrace(grid, u_trace.times, u_trace.values - z_rows)
    residual = _g2_integral(spec, h_far, math.inf)
    return CoevolvedPath(u_trace, zstar, ustar, residual)


def solve_v(y_init: Field, spec: NoiseSpec, path: BrownianPath, T: float,
            horizon: float, k: int, dealias: float = 2.0 / 3.0,
            sign: int = 1, snapshot_stride: int = 1,
            stream_index: int = 0) -> SpaceTimeTrace:
    """The difference v = u - z_* - y on [T, horizon], v(T) = 0 exactly.

    y solves the deterministic flow from y(T) = y_init; u solves the
    stochastic flow from u(T) = y_init + z_*(T) with the same increments that
    define z_*.  The first row is zero by construction (the defining
    identity); later rows follow it pathwise.
    """
    if not (horizon > T):
        raise ValueError("horizon must exceed the start time")
    grid = y_init.grid
    cfg = SolverConfig(k=k, dt=path.dt, grid=grid, sign=sign, dealias=dealias)
    n0 = int(round(T / cfg.dt))
    if abs(n0 * cfg.dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("start time must sit on the path grid")

    # shift the path so its increments n0.. drive [T, horizon]; the envelope
    # is always evaluated at absolute time
    shifted = BrownianPath(path.dt, path.increments[n0:], path.seed)
    co = coevolve_from(y_init, cfg, spec, shifted, T, horizon,
                       snapshot_stride, stream_index, seed_for_far=path.seed)
    y_trace = evolve(y_init, cfg, int(round((horizon - T) / cfg.dt)),
                     snapshot_stride, t0=T)
    v_rows = co.u.values - co.zstar.values - y_trace.values
    v_rows[0] = 0.0
    return SpaceTimeTrace(grid, co.u.times, v_rows)


def coevolve_from(ustar_T: Field, cfg: SolverConfig, spec: NoiseSpec,
                  path_from_T: BrownianPath, T: float, horizon: float,
                  snapshot_stride: int, stream_index: int,
                  seed_for_far: int) -> CoevolvedPath:
    """coevolve() started at time T from u_*(T) (so u(T) = u_*(T) + z_*(T))."""
    grid = cfg.grid
    n_steps = int(round((horizon - T) / cfg.dt))
    if path_from_T.m < n_steps:
        raise ValueError("path too short for the window")
    xi3 = grid.frequencies**3
    phihat = np.fft.fft(spec.phi.values)

    h_far = max(default_horizon(spec, horizon), horizon * 1.0001)
    tau_far, w_far = _tail_cells(horizon, h_far, head=max(cfg.dt, horizon * 1e-3))
    stream = _stream(seed_for_far, 2**32 + stream_index)
    db_far = stream.standard_normal(len(tau_far)) * np.sqrt(w_far)
    g_far = np.asarray(spec.g(tau_far), dtype=float)
    far_hat = -phihat * ((g_far * db_far) @ np.exp(-1j * np.outer(tau_far, xi3)))

    t_steps = T + cfg.dt * np.arange(n_steps)
    g_steps = np.asarray(spec.g(t_steps), dtype=float)
    terms = -phihat[None, :] * ((g_steps * path_from_T.increments[:n_steps])[:, None]
                                * np.exp(-1j * np.outer(t_steps + cfg.dt, xi3)))
    suffix = np.zeros((n_steps + 1, grid.n), dtype=complex)
    suffix[:-1] = np.cumsum(terms[::-1], axis=0)[::-1]

    zstar_T_hat = (suffix[0] + far_hat) * np.exp(1j * T * xi3)
    zstar_T = np.fft.ifft(zstar_T_hat).real
    u_T = Field(grid, ustar_T.values + zstar_T)
    u_trace = evolve(u_T, cfg, n_steps, snapshot_stride, spec=spec,
                     path=path_from_T, t0=T)

    z_rows = np.empty_like(u_trace.values)
    for i, t in enumerate(u_trace.times):
        j = int(round((t - T) / cfg.dt))
        zhat = (suffix[j] + far_hat) * np.exp(1j * t * xi3)
        z_rows[i] = np.fft.ifft(zhat).real
    zstar = SpaceTimeTrace(grid, u_trace.times, z_rows)
    ustar = SpaceTimeTrace(grid, u_trace.times, u_trace.values - z_rows)
    return CoevolvedPath(u_trace, zstar, ustar, _g2_integral(spec, h_far, math.inf))


def vdiff_from_coevolved(co: CoevolvedPath, T: float, k: int,
                         dt: float, sign: int = 1,
                         dealias: float = 2.0 / 3.0) -> SpaceTimeTrace:
    """v on [T, end] from an already coevolved path (same semantics as solve_v).

    Restarting the stochastic flow at T from its own state reproduces the
    same floats, so u and z_* can be reused; only the deterministic
    comparison y (re-seeded from u_*(T)) needs a fresh run.
    """
    grid = co.u.grid
    t_end = float(co.u.times[-1])
    u_win = co.u.window(T, t_end)
    z_win = co.zstar.window(T, t_end)
    iT = int(np.argmin(np.abs(co.ustar.times - T)))
    if abs(co.ustar.times[iT] - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"restart time {T} is not a snapshot time")
    y_init = co.ustar.snapshot(iT)
    cfg = SolverConfig(k=k, dt=dt, grid=grid, sign=sign, dealias=dealias)
    stride = int(round((co.u.times[1] - co.u.times[0]) / dt))
    y_trace = evolve(y_init, cfg, int(round((t_end - T) / dt)), stride, t0=T)
    v_rows = u_win.values - z_win.values - y_trace.values
    v_rows[0] = 0.0
    return SpaceTimeTrace(grid, u_win.times, v_rows)


def _pullback(trace: SpaceTimeTrace, t: float) -> Field:
    i = int(np.argmin(np.abs(trace.times - t)))
    if abs(trace.times[i] - t) > 1e-9 * max(t, 1.0):
        raise ValueError(f"checkpoint {t} is not a snapshot time")
    return airy_propagate(trace.snapshot(i), -float(trace.times[i]))


def _space_norm(f: Field, space: str) -> float:
    if space == "L2":
        return f.l2_norm()
    if space == "H1":
        return sobolev_norm(f, 1.0)
    raise ValueError(f"space must be 'L2' or 'H1', got {space!r}")


def scattering_diagnostic(u_trace: SpaceTimeTrace, checkpoints, space: str = "L2",
                          k: int = 4, v_trace: SpaceTimeTrace | None = None) -> ScatteringReport:
    """Cauchy increments of the pullbacks V(-t) u(t) plus the size norms.

    With a v_trace supplied, also reports the four difference norms: the
    weighted L^5_x L^10_t norm, the size norm, sup_x ||d^2_x v||_{L^2_t}, and
    sup_t ||v||_{H^1_x}.
    """
    checkpoints = [float(t) for t in checkpoints]
    if len(checkpoints) < 3:
        raise ValueError("need at least three checkpoints")
    pulls = [_pullback(u_trace, t) for t in checkpoints]
    increments = tuple(
        _space_norm(b - a, space) for a, b in zip(pulls, pulls[1:]))
    size = scattering_size(u_trace, k)
    v_norms = None
    if v_trace is not None:
        grid = v_trace.grid
        sym = np.sqrt(1.0 + grid.frequencies**2)
        weighted = np.fft.ifft(sym * np.fft.fft(v_trace.values, axis=-1), axis=-1).real
        lam1 = mixed_norm_xt(SpaceTimeTrace(grid, v_trace.times, weighted), 5.0, 10.0)
        lam2 = scattering_size(v_trace, k)
        d2 = np.fft.ifft(-(grid.frequencies**2) * np.fft.fft(v_trace.values, axis=-1),
                         axis=-1).real
        d2_norm = mixed_norm_xt(SpaceTimeTrace(grid, v_trace.times, d2), INF, 2.0)
        h1_sup = max(sobolev_norm(Field(grid, row), 1.0) for row in v_trace.values)
        v_norms = {"lambda1": lam1, "lambda2": lam2,
                   "d2v_CxL2t": d2_norm, "v_CtH1x": h1_sup}
    return ScatteringReport(tuple(checkpoints), increments, size, pulls[-1], v_norms)
