"""Manifest-driven command line front end.

    sgkdvlab <kind> --manifest run.json [--seed N] [--out DIR] [--jobs N]
    sgkdvlab report <run-dir> [--out DIR]

Every run writes, atomically, its resolved manifest, a summary.json with the
pass/fail state of each gate it exercised, and the kind-specific CSV/JSON
data.  Reruns with the same manifest and seed reproduce the outputs byte for
byte.  `report` renders matplotlib figures next to an existing run's files.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import estimates, io, noise as noise_mod, oscillatory, scattering, solver
from .manifest import Manifest, ManifestError, parse_manifest, resolve_manifest
from .spectral import Field, make_grid

__all__ = ["main"]


def _build_grid(m: Manifest):
    return make_grid(m.grid["n"], float(m.grid["length"]))


def _build_noise(m: Manifest, grid) -> noise_mod.NoiseSpec:
    nz = m.noise
    maker = noise_mod.gaussian_profile if nz["profile"] == "gaussian" \
        else noise_mod.sech2_profile
    phi = maker(grid, float(nz["amplitude"]), float(nz["width"]),
                None if nz["center"] is None else float(nz["center"]))
    env = (lambda t: np.ones_like(np.asarray(t, dtype=float))) \
        if nz["envelope"] == "constant" else None
    return noise_mod.NoiseSpec(phi, float(nz["gamma"]), envelope=env, seed=m.seed)


def _initial_field(m: Manifest, grid) -> Field:
    sec = m.section
    kind = sec["initial"]
    c = grid.length / 2.0 if sec["center"] is None else float(sec["center"])
    x = grid.nodes
    if kind == "zero":
        return Field(grid, np.zeros(grid.n))
    if kind == "gaussian":
        return Field(grid, float(sec["amplitude"]) * np.exp(-(((x - c) / sec["width"]) ** 2)))
    if kind == "dgaussian":
        prof = -(x - c) * np.exp(-(((x - c) / sec["width"]) ** 2))
        prof *= float(sec["amplitude"]) / np.sqrt(np.sum(prof**2) * grid.spacing)
        return Field(grid, prof)
    if kind == "soliton":
        return solver.soliton(m.solver["k"], float(sec["speed"]), c, grid, sign=-1)
    raise ValueError(f"unknown initial condition {kind!r}")


def _gate(name: str, passed: bool, value: float, threshold: float) -> dict:
    return {"name": name, "passed": bool(passed), "value": value, "threshold": threshold}


def _finish(m: Manifest, out: Path, gates: list, extra: dict | None = None) -> int:
    io.atomic_write_text(out / "manifest.resolved.json", resolve_manifest(m))
    summary = {"kind": m.kind, "seed": m.seed,
               "gates": gates, "warnings": list(m.warnings)}
    if extra:
        summary.update(extra)
    io.write_json(out / "summary.json", summary)
    ok = all(g["passed"] for g in gates)
    print(f"{m.kind}: {'all gates passed' if ok else 'GATE FAILURES'} "
          f"({sum(g['passed'] for g in gates)}/{len(gates)}); outputs in {out}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def _run_simulate(m: Manifest, out: Path, jobs: int) -> int:
    grid = _build_grid(m)
    cfg = solver.SolverConfig(k=m.solver["k"], dt=float(m.solver["dt"]), grid=grid,
                              sign=m.solver["sign"], dealias=float(m.solver["dealias"]))
    u0 = _initial_field(m, grid)
    n_steps = int(round(float(m.solver["horizon"]) / cfg.dt))
    stride = int(m.solver["snapshot_stride"])
    spec = path = None
    if m.noise["enabled"]:
        spec = _build_noise(m, grid)
        path = noise_mod.sample_path(m.seed, cfg.dt, n_steps)
        io.path_to_files(out / "path", path)
    trace = solver.evolve(u0, cfg, n_steps, stride, spec=spec, path=path)
    io.trace_to_csv(out / "trace.csv", trace)
    io.trace_to_binary(out / "trace.bin", trace)

    rows = []
    for i, t in enumerate(trace.times):
        snap = trace.snapshot(i)
        if spec is not None:
            rep = solver.ito_drift(snap, spec, float(t), cfg.k, cfg.sign)
            rows.append((float(t), rep.mass, rep.energy, rep.F1, rep.F2))
        else:
            rows.append((float(t), solver.mass(snap),
                         solver.energy(snap, cfg.k, cfg.sign), 0.0, 0.0))
    io.write_csv(out / "energy.csv", ["t", "mass", "energy", "F1", "F2"], rows)

    gates = []
    if spec is None and cfg.sign != 0:
        m_drift = abs(rows[-1][1] - rows[0][1]) / max(abs(rows[0][1]), 1e-300)
        e_drift = abs(rows[-1][2] - rows[0][2]) / max(abs(rows[0][2]), 1e-300)
        gates.append(_gate("relative-mass-drift", m_drift <= 1e-10, m_drift, 1e-10))
        gates.append(_gate("relative-energy-drift", e_drift <= 1e-8, e_drift, 1e-8))
    gates.append(_gate("finite-state", bool(np.isfinite(trace.values).all()), 0.0, 0.0))
    return _finish(m, out, gates)


def _dominant_branch(b: float, alpha: float) -> str:
    return "origin" if alpha <= -0.5 else "stationary"


def _run_oscint(m: Manifest, out: Path, jobs: int) -> int:
    sec = m.section
    gates = []
    fits = []
    for b, alpha in sec["pairs"]:
        b = float(b)
        alpha = float(alpha)
        branch = _dominant_branch(b, alpha) if sec["branch"] == "auto" else sec["branch"]
        levels = [sec["x_min"] * 2.0**j for j in range(int(sec["levels"]) - 1)]
        levels.append(float(sec["x_max"]))
        levels = sorted(set(min(x, float(sec["x_max"])) for x in levels))
        fit = oscillatory.fit_decay_slope(b, alpha, branch, levels)
        fits.append({"b": b, "alpha": alpha, "branch": fit.branch,
                     "predicted_exponent": fit.predicted_exponent,
                     "fitted_exponent": fit.fitted_exponent,
                     "sample_points": list(fit.sample_points),
                     "envelope": list(fit.envelope)})
        dev = abs(fit.fitted_exponent - fit.predicted_exponent)
        gates.append(_gate(f"slope-b{b:g}-a{alpha:g}", dev <= 0.1, dev, 0.1))

        pred_max = max(oscillatory.predicted_exponent(b, alpha, "origin"),
                       oscillatory.predicted_exponent(b, alpha, "stationary"))
        env = np.asarray(fit.envelope)
        pts = np.asarray(fit.sample_points)
        c_fit = float(np.max(env / (1.0 + pts) ** pred_max))
        rows = []
        err_max = 0.0
        for sgn in (1.0, -1.0) if int(round(b)) % 2 else (1.0,):
            for x in pts:
                r = oscillatory.osc_integral_I(oscillatory.OscQuery(b, alpha, sgn * x))
                err_max = max(err_max, r.abs_error)
                rows.append((sgn * x, r.value.real, r.value.imag, r.abs_error,
                             abs(r.value), c_fit * (1.0 + x) ** pred_max))
        near = np.linspace(-100.0, 100.0, int(sec["near_samples"]))
        near_max = 0.0
        for x in near:
            r = oscillatory.osc_integral_I(oscillatory.OscQuery(b, alpha, float(x)))
            err_max = max(err_max, r.abs_error)
            near_max = max(near_max, abs(r.value))
            rows.append((float(x), r.value.real, r.value.imag, r.abs_error,
                         abs(r.value), float("nan")))
        rows.sort(key=lambda r: r[0])
        io.write_csv(out / f"osc_b{b:g}_a{alpha:g}.csv",
                     ["x", "Re", "Im", "abs_error", "envelope", "predicted_bound"],
                     rows)
        gates.append(_gate(f"abs-error-b{b:g}-a{alpha:g}", err_max <= 1e-8, err_max, 1e-8))
        gates.append(_gate(f"bounded-near-zero-b{b:g}-a{alpha:g}",
                           math.isfinite(near_max), near_max, math.inf))
    io.write_json(out / "decay_fits.json", fits)
    return _finish(m, out, gates)


def _run_probe(m: Manifest, out: Path, jobs: int) -> int:
    sec = m.section
    grid = _build_grid(m)
    if m.kind == "probe-kato":
        triple = estimates.KatoTriple(float(sec["p"]), float(sec["q"]), float(sec["alpha"]))
        res = estimates.kato_constant_probe(triple, grid, float(sec["horizon"]),
                                            int(sec["n_data"]), m.seed, int(sec["n_times"]))
        label = f"kato-p{sec['p']}-q{sec['q']}-a{sec['alpha']}"
    else:
        pair = estimates.StrichartzPair(float(sec["p"]), float(sec["q"]), float(sec["beta"]))
        res = estimates.strichartz_constant_probe(pair, grid, float(sec["horizon"]),
                                                  int(sec["n_data"]), m.seed,
                                                  int(sec["n_times"]))
        label = f"strichartz-p{sec['p']}-q{sec['q']}-b{sec['beta']}"
    io.write_csv(out / "probe.csv",
                 ["which", "ratio"],
                 [("base", res.ratio), ("grid-doubled", res.ratio_grid_refined),
                  ("horizon-doubled", res.ratio_horizon_refined)])
    gates = [_gate(f"{label}-refinement-stable", res.max_drift < 0.05,
                   res.max_drift, 0.05)]
    return _finish(m, out, gates, {"ratio": res.ratio})


def _run_beta(m: Manifest, out: Path, jobs: int) -> int:
    sec = m.section
    grid = _build_grid(m)
    spec = _build_noise(m, grid)
    k = int(sec["k"])
    t_grid = [float(t) for t in sec["T_grid"]]
    dt = float(sec["dt"])
    per_unit = int(sec["snapshots_per_unit"])
    t_max = max(t_grid)
    snap_times = np.linspace(0.0, t_max, int(round(t_max * per_unit)) + 1)

    def one(seed):
        path = noise_mod.sample_path(spec.seed, dt, int(round(t_max / dt)), stream=seed)
        tr = noise_mod.stochastic_convolution(spec, path, snap_times)
        vals = []
        for T in t_grid:
            a1, a2, a3, a4 = estimates.beta_functionals(tr, k, T)
            vals.extend([a1**2, a2**2, a3**2, a4**2, abs(a3 - a4)])
        return np.asarray(vals)

    flat_grid = np.arange(5 * len(t_grid), dtype=float)
    stats = estimates.ensemble_run(one, range(int(sec["n_paths"])), flat_grid,
                                   name="window-functionals", jobs=jobs)
    mean = np.asarray(stats.mean).reshape(len(t_grid), 5)
    se = np.asarray(stats.se).reshape(len(t_grid), 5)
    rows = [(T, mean[i, 0], se[i, 0], mean[i, 1], se[i, 1], mean[i, 2], se[i, 2],
             mean[i, 3], se[i, 3]) for i, T in enumerate(t_grid)]
    io.write_csv(out / "beta.csv",
                 ["T", "Ea1sq", "se1", "Ea2sq", "se2", "Ea3sq", "se3", "Ea4sq", "se4"],
                 rows)
    gates = []
    if k == 4:
        coincide = float(np.max(mean[:, 4]))
        gates.append(_gate("k4-third-equals-fourth", coincide <= 1e-9, coincide, 1e-9))
    slope = float(np.polyfit(np.log(t_grid), np.log(mean[:, 0]), 1)[0])
    if m.noise["envelope"] == "constant":
        gates.append(_gate("Ea1sq-linear-growth", 0.8 <= slope <= 1.2, slope, 1.2))
    return _finish(m, out, gates, {"Ea1sq_slope": slope})


def _run_ensemble(m: Manifest, out: Path, jobs: int) -> int:
    sec = m.section
    grid = _build_grid(m)
    spec = _build_noise(m, grid)
    times = [float(t) for t in sec["times"]]
    est_name = sec["estimator"]
    dt = float(m.solver["dt"])
    cfg = solver.SolverConfig(k=m.solver["k"], dt=dt, grid=grid,
                              sign=m.solver["sign"], dealias=float(m.solver["dealias"]))
    u0 = Field(grid, 0.1 * np.exp(-(((grid.nodes - grid.length / 2.0) / 2.0) ** 2)))
    n_steps = int(round(max(times) / dt))
    snap_steps = [int(round(t / dt)) for t in times]

    if est_name == "convolution-energy":
        def one(seed):
            path = noise_mod.sample_path(spec.seed, dt, n_steps, stream=seed)
            tr = noise_mod.stochastic_convolution(spec, path, times)
            return np.array([solver.mass(tr.snapshot(i)) for i in range(len(times))])
    else:
        def one(seed):
            snaps = solver.evolve_batch(u0.values[None, :], cfg, n_steps, snap_steps,
                                        spec=spec, seeds=[seed])[0]
            vals = []
            for row in snaps:
                f = Field(grid, row)
                v = solver.mass(f)
                if est_name == "mass-energy":
                    v += solver.energy(f, cfg.k, cfg.sign)
                vals.append(v)
            return np.asarray(vals)

    stats = estimates.ensemble_run(one, range(int(sec["n_paths"])), times,
                                   name=est_name, jobs=jobs)
    io.write_csv(out / "ensemble.csv", ["t", "mean", "se", "n"],
                 [(t, stats.mean[i], stats.se[i], stats.n) for i, t in enumerate(times)])
    gates = []
    if est_name == "mass":
        m0 = solver.mass(u0)
        worst = 0.0
        for i, t in enumerate(times):
            truth = m0 + noise_mod.expected_convolution_energy(spec, t)
            dev = abs(stats.mean[i] - truth) / max(stats.se[i], 1e-300)
            worst = max(worst, dev)
        gates.append(_gate("expected-mass-identity-3se", worst <= 3.0, worst, 3.0))
    if est_name == "convolution-energy":
        worst = 0.0
        for i, t in enumerate(times):
            truth = noise_mod.expected_convolution_energy(spec, t)
            dev = abs(stats.mean[i] - truth) / max(stats.se[i], 1e-300)
            worst = max(worst, dev)
        gates.append(_gate("isometry-identity-3se", worst <= 3.0, worst, 3.0))
    gates.append(_gate("no-member-failures", len(stats.errors) == 0,
                       float(len(stats.errors)), 0.0))
    return _finish(m, out, gates, {"errors": list(stats.errors)})


def _run_scatter(m: Manifest, out: Path, jobs: int) -> int:
    sec = m.section
    grid = _build_grid(m)
    spec = _build_noise(m, grid)
    k = int(m.solver["k"])
    dt = float(m.solver["dt"])
    horizon = float(m.solver["horizon"])
    cfg = solver.SolverConfig(k=k, dt=dt, grid=grid, sign=m.solver["sign"],
                              dealias=float(m.solver["dealias"]))
    x = grid.nodes
    prof = np.exp(-(((x - grid.length / 2.0) / float(sec["u0_width"])) ** 2))
    prof *= float(sec["u0_norm"]) / np.sqrt(np.sum(prof**2) * grid.spacing)
    u0 = Field(grid, prof)
    space = "L2" if k == 4 else "H1"
    checkpoints = [float(t) for t in sec["checkpoints"]]
    t_grid = [float(t) for t in sec["T_grid"]]
    stride = int(m.solver["snapshot_stride"])
    n_paths = int(sec["n_paths"])
    n_steps = int(round(horizon / dt))

    inc_rows = []
    v_rows = []
    n_dec = n_final = n_vtrend = 0
    reports = []
    for j in range(n_paths):
        path = noise_mod.sample_path(spec.seed, dt, n_steps, stream=j)
        co = scattering.coevolve(u0, cfg, spec, path, horizon,
                                 snapshot_stride=stride, stream_index=j)
        rep = scattering.scattering_diagnostic(co.u, checkpoints, space, k=k)
        incs = rep.cauchy_increments
        dec = all(b < a for a, b in zip(incs, incs[1:]))
        fin = incs[-1] <= 1e-3
        sizes = [scattering.scattering_size(
            scattering.vdiff_from_coevolved(co, T, k, dt, sign=cfg.sign), k)
            for T in t_grid]
        vtrend = all(b <= a * (1 + 1e-9) for a, b in zip(sizes, sizes[1:]))
        n_dec += dec
        n_final += fin
        n_vtrend += vtrend
        inc_rows.append((j, *incs))
        v_rows.append((j, *sizes))
        reports.append({"path": j, "cauchy_increments": list(incs),
                        "v_sizes": sizes, "decreasing": dec,
                        "final_ok": fin, "v_trend": vtrend,
                        "g2_residual": co.g2_residual})
    io.write_csv(out / "cauchy_increments.csv",
                 ["path"] + [f"inc_{a:g}_{b:g}" for a, b in zip(checkpoints, checkpoints[1:])],
                 inc_rows)
    io.write_csv(out / "v_sizes.csv",
                 ["path"] + [f"T{t:g}" for t in t_grid], v_rows)
    io.write_json(out / "scatter_report.json",
                  {"space": space, "paths": reports})
    need = int(math.ceil(0.9 * n_paths))
    gates = [
        _gate("cauchy-decreasing-18of20", n_dec >= need, float(n_dec), float(need)),
        _gate("final-increment-1e-3", n_final == n_paths, float(n_final), float(n_paths)),
        _gate("v-size-nonincreasing-18of20", n_vtrend >= need, float(n_vtrend), float(need)),
    ]
    return _finish(m, out, gates)


def _run_report(run_dir: str, out_dir: str | None) -> int:
    from . import figures
    made = figures.render_run(Path(run_dir), Path(out_dir) if out_dir else Path(run_dir))
    print(f"report: wrote {len(made)} figure(s): " + ", ".join(p.name for p in made))
    return 0


_RUNNERS = {
    "simulate": _run_simulate,
    "oscint": _run_oscint,
    "probe-kato": _run_probe,
    "probe-strichartz": _run_probe,
    "beta": _run_beta,
    "ensemble": _run_ensemble,
    "scatter": _run_scatter,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sgkdvlab",
        description="desk-scale experiments for the noise-driven generalized KdV flow")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        p = sub.add_parser(name, help=f"run a {name} experiment from a manifest")
        p.add_argument("--manifest", required=True, help="path to the run manifest (JSON)")
        p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for ensembles")
    rp = sub.add_parser("report", help="render figures for an existing run directory")
    rp.add_argument("run_dir")
    rp.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    if args.command == "report":
        return _run_report(args.run_dir, args.out)

    try:
        m = parse_manifest(Path(args.manifest).read_text())
    except ManifestError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    if m.kind != args.command:
        print(f"manifest kind {m.kind!r} does not match subcommand {args.command!r}",
              file=sys.stderr)
        return 2
    if args.seed is not None:
        m = Manifest(m.kind, m.grid, m.solver, m.noise, m.section,
                     m.out_dir, args.seed, m.warnings)
    out = Path(args.out) if args.out else Path(m.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for w in m.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return _RUNNERS[m.kind](m, out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
