"""Discovery report persistence: JSON documents, plot-data CSVs, and figures.

Every report embeds the resolved configuration so a run is self-describing.
CSV emission covers the recovered kernels on a fine grid, the final-time
density profiles, and the per-snapshot reconstruction error series; each CSV
gets a rendered PNG companion.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .basis import eval_diff, eval_drift  # noqa: E402
from .design import estimate_density  # noqa: E402
from .discover import DiscoveryConfig, DiscoveryReport, _reconstruct  # noqa: E402
from .dynamics import KernelSpec, TrajectoryDataset  # noqa: E402
from .metrics import trajectory_error_series  # noqa: E402

__all__ = ["report_to_dict", "write_report", "emit_outputs"]


def _config_echo(config: DiscoveryConfig) -> dict:
    doc = asdict(config)
    for key in ("drift_basis", "diff_basis"):
        basis = doc[key]
        doc[key] = {"mesh_kind": basis["mesh_kind"],
                    "nodes": np.asarray(basis["nodes"]).tolist()}
    for key in ("drift_constraints", "diff_constraints"):
        if doc[key] is not None:
            doc[key] = {"n": doc[key]["n"],
                        "anchors": [list(a) for a in doc[key]["anchors"]],
                        "sign": list(doc[key]["sign"]),
                        "monotonicity": doc[key]["monotonicity"]}
    return doc


def _estimate_doc(est) -> dict:
    return {
        "mesh_kind": est.drift_basis.mesh_kind,
        "nodes": est.drift_basis.nodes.tolist(),
        "rho": est.rho.tolist(),
        "diff_mesh_kind": est.diff_basis.mesh_kind,
        "diff_nodes": est.diff_basis.nodes.tolist(),
        "zeta": est.zeta[0].tolist() if est.zeta.shape[0] == 1 else est.zeta.tolist(),
        "diffusion_mode": est.diffusion_mode,
        "factor_two_convention": True,
    }


def report_to_dict(report: DiscoveryReport) -> dict:
    return {
        "regime": report.regime,
        "estimate": _estimate_doc(report.estimate),
        "estimates": {rule: _estimate_doc(est) for rule, est in report.estimates.items()},
        "per_run": [
            {"rho": r.rho.tolist(), "zeta": np.atleast_2d(r.zeta).tolist(),
             "error": r.error, "weight_av": r.weight_av, "weight_best": r.weight_best}
            for r in report.per_run
        ],
        "weights": {rule: np.asarray(w).tolist() for rule, w in report.weights.items()},
        "weight_degenerate": report.weight_degenerate,
        "timings": report.timings,
        "validation": report.validation,
        "solver_info": report.solver_info,
        "config": _config_echo(report.config) if report.config is not None else None,
    }


def write_report(path, report: DiscoveryReport):
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2))


def _write_csv(path, header: list[str], columns: list[np.ndarray]):
    rows = np.column_stack(columns)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _plot_columns(path_png, xlabel, ylabel, xs, header, columns):
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for name, col in zip(header[1:], columns[1:]):
        style = "k--" if name.endswith("_true") else "-"
        ax.plot(xs, col, style, label=name, linewidth=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path_png, dpi=150)
    plt.close(fig)


def _rule_suffix(rule: str) -> str:
    return {"averaging": "av", "best": "best", "mean_field": "mf",
            "known_S": "known_S"}.get(rule, rule)


def emit_outputs(outdir, report: DiscoveryReport, data: TrajectoryDataset | None = None,
                 true_kernels: KernelSpec | None = None, grid_points: int = 401,
                 estimates: dict | None = None) -> list[str]:
    """Write the plot-data CSVs and companion figures for one report.

    ``estimates`` may merge results from several reports (e.g. the reproduce
    bundle combining RBM and mean-field estimates into one comparison).
    Returns the written file names.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    ests = estimates if estimates is not None else report.estimates
    config = report.config

    first = next(iter(ests.values()))
    r = np.linspace(first.drift_basis.a, first.drift_basis.b, grid_points)
    header = ["r"]
    cols = [r]
    if true_kernels is not None:
        header.append("P_true")
        cols.append(np.asarray(true_kernels.drift(r), dtype=float))
    for rule, est in ests.items():
        header.append(f"P_hat_{_rule_suffix(rule)}")
        cols.append(eval_drift(est, r))
    _write_csv(outdir / "kernel_drift.csv", header, cols)
    _plot_columns(outdir / "kernel_drift.png", "r", "P(r)", r, header, cols)
    written += ["kernel_drift.csv", "kernel_drift.png"]

    n_comp = first.n_diff_components
    db = first.diff_basis
    v = np.linspace(db.a, db.b, grid_points)
    for comp in range(n_comp):
        suffix = f"_{comp + 1}" if n_comp > 1 else ""
        header = ["v"]
        cols = [v]
        if true_kernels is not None and true_kernels.diffusion is not None:
            header.append(f"D{suffix}_true")
            if first.diffusion_mode == "local_state":
                fn = true_kernels.local_components(n_comp)[comp]
            else:
                fn = true_kernels.diffusion
            cols.append(np.asarray(fn(v), dtype=float))
        for rule, est in ests.items():
            header.append(f"D_hat{suffix}_{_rule_suffix(rule)}")
            cols.append(eval_diff(est, v, component=comp))
        name = f"kernel_diffusion{suffix}"
        _write_csv(outdir / f"{name}.csv", header, cols)
        _plot_columns(outdir / f"{name}.png", "v", "D", v, header, cols)
        written += [f"{name}.csv", f"{name}.png"]

    if data is not None and config is not None:
        recons = {rule: _reconstruct(data, config, est, 777_000 + i)
                  for i, (rule, est) in enumerate(ests.items())}
        bins = 100 if data.dim == 1 else 50
        final = data.state(data.n_frames - 1)
        grid = estimate_density(final, config.box_half, bins)
        header = ["x"] if data.dim == 1 else ["cell"]
        xs = grid.centers[:, 0] if data.dim == 1 else np.arange(grid.values.size, dtype=float)
        cols = [xs, grid.values]
        header.append("f_data")
        for rule, recon in recons.items():
            g = estimate_density(recon.state(recon.n_frames - 1), config.box_half, bins)
            header.append(f"f_hat_{_rule_suffix(rule)}")
            cols.append(g.values)
        _write_csv(outdir / "density_final.csv", header, cols)
        _plot_columns(outdir / "density_final.png", header[0], "density", xs,
                      header, cols)
        written += ["density_final.csv", "density_final.png"]

        header, cols = ["t"], []
        for rule, recon in recons.items():
            ts, series = trajectory_error_series(data, recon, half_width=config.box_half)
            if not cols:
                cols.append(ts)
            header.append(f"err_{_rule_suffix(rule)}")
            cols.append(series)
        _write_csv(outdir / "errors_time.csv", header, cols)
        _plot_columns(outdir / "errors_time.png", "t",
                      "W1" if data.dim == 1 else "L1", cols[0], header, cols)
        written += ["errors_time.csv", "errors_time.png"]
    return written
