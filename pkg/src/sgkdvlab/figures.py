"""Figure rendering for finished run directories (the `report` subcommand).

Reads the resolved manifest and the CSV outputs of a run and writes PNG
figures next to them.  Uses the Agg backend so it works headless.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_run"]

plt.rcParams.update({
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 130,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})


def _read_csv(path: Path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(v) if v not in ("", "nan") else np.nan for v in r]
                     for r in rows[1:]])
    return header, data


def _save(fig, path: Path, made: list) -> None:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    made.append(path)


def _render_oscint(run: Path, out: Path, made: list) -> None:
    fits = json.loads((run / "decay_fits.json").read_text())
    for fit in fits:
        b, a = fit["b"], fit["alpha"]
        header, data = _read_csv(run / f"osc_b{b:g}_a{a:g}.csv")
        x, env, bound = data[:, 0], data[:, 4], data[:, 5]
        far = np.abs(x) >= 100.0
        fig, ax = plt.subplots()
        ax.loglog(np.abs(x[far]), env[far], "o", ms=3, label="|I| envelope samples")
        ok = far & np.isfinite(bound)
        order = np.argsort(np.abs(x[ok]))
        ax.loglog(np.sort(np.abs(x[ok])), bound[ok][order], "-",
                  label=f"fitted bound, exponent {fit['predicted_exponent']:+.3f}")
        pts = np.asarray(fit["sample_points"])
        envf = np.asarray(fit["envelope"])
        ax.loglog(pts, envf, "s", ms=4, label=f"fit slope {fit['fitted_exponent']:+.3f}")
        ax.set_xlabel("|x|")
        ax.set_ylabel("envelope of |I|")
        ax.set_title(f"decay law, b={b:g}, alpha={a:g} ({fit['branch']} branch)")
        ax.legend()
        _save(fig, out / f"osc_b{b:g}_a{a:g}.png", made)


def _render_simulate(run: Path, out: Path, made: list) -> None:
    header, e = _read_csv(run / "energy.csv")
    fig, ax = plt.subplots()
    ax.plot(e[:, 0], e[:, 1], label="mass")
    ax.plot(e[:, 0], e[:, 2], label="energy")
    ax.set_xlabel("t")
    ax.set_title("mass and energy along the run")
    ax.legend()
    _save(fig, out / "energy.png", made)

    header, tr = _read_csv(run / "trace.csv")
    x = tr[:, 0]
    fig, ax = plt.subplots()
    ax.plot(x, tr[:, 1], label=header[1])
    ax.plot(x, tr[:, -1], label=header[-1])
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.set_title("first and last snapshots")
    ax.legend()
    _save(fig, out / "snapshots.png", made)


def _render_ensemble(run: Path, out: Path, made: list) -> None:
    header, e = _read_csv(run / "ensemble.csv")
    fig, ax = plt.subplots()
    ax.errorbar(e[:, 0], e[:, 1], yerr=3.0 * e[:, 2], fmt="o-", capsize=3,
                label="ensemble mean with 3 SE")
    ax.set_xlabel("t")
    ax.set_ylabel("estimator")
    ax.set_title("ensemble statistics")
    ax.legend()
    _save(fig, out / "ensemble.png", made)


def _render_scatter(run: Path, out: Path, made: list) -> None:
    header, inc = _read_csv(run / "cauchy_increments.csv")
    fig, ax = plt.subplots()
    for row in inc:
        ax.semilogy(range(1, len(row)), row[1:], "o-", alpha=0.4, color="tab:blue")
    ax.set_xticks(range(1, len(header)))
    ax.set_xticklabels(header[1:], rotation=20)
    ax.set_ylabel("pullback increment")
    ax.set_title("Cauchy increments per path")
    _save(fig, out / "cauchy_increments.png", made)

    header, vs = _read_csv(run / "v_sizes.csv")
    fig, ax = plt.subplots()
    for row in vs:
        ax.semilogy(range(1, len(row)), row[1:], "o-", alpha=0.4, color="tab:orange")
    ax.set_xticks(range(1, len(header)))
    ax.set_xticklabels(header[1:])
    ax.set_ylabel("size norm of v on [T, horizon)")
    ax.set_title("difference-solution size per path")
    _save(fig, out / "v_sizes.png", made)


def _render_probe(run: Path, out: Path, made: list) -> None:
    with open(run / "probe.csv") as fh:
        rows = list(csv.reader(fh))[1:]
    labels = [r[0] for r in rows]
    vals = [float(r[1]) for r in rows]
    fig, ax = plt.subplots()
    ax.bar(labels, vals, color="tab:green")
    ax.set_ylabel("sup ratio")
    ax.set_title("refinement stability of the probe ratio")
    _save(fig, out / "probe.png", made)


def _render_beta(run: Path, out: Path, made: list) -> None:
    header, b = _read_csv(run / "beta.csv")
    fig, ax = plt.subplots()
    for col, lab in ((1, "first"), (3, "second"), (5, "third"), (7, "fourth")):
        ax.loglog(b[:, 0], b[:, col], "o-", label=f"{lab} window functional^2")
    ax.set_xlabel("T")
    ax.set_title("window functionals vs horizon")
    ax.legend()
    _save(fig, out / "beta.png", made)


_RENDERERS = {
    "oscint": _render_oscint,
    "simulate": _render_simulate,
    "ensemble": _render_ensemble,
    "scatter": _render_scatter,
    "probe-kato": _render_probe,
    "probe-strichartz": _render_probe,
    "beta": _render_beta,
}


def render_run(run_dir: Path, out_dir: Path) -> list:
    """Render the figures appropriate to the run kind; returns written paths."""
    manifest = json.loads((run_dir / "manifest.resolved.json").read_text())
    kind = manifest["kind"]
    if kind not in _RENDERERS:
        raise ValueError(f"no renderer for run kind {kind!r}")
    out_dir.mkdir(parents=True, exist_ok=True)
    made: list = []
    _RENDERERS[kind](run_dir, out_dir, made)
    return made
