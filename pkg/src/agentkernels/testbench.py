"""Built-in benchmark experiments: data generation plus all applicable
discovery methods, at desk scale (quick, relaxed accuracy) or paper scale.

Each entry fixes the generating kernels, the approximation spaces, the
coefficient constraints, and the per-setting window layouts; settings trade
window count against stride over a fixed training span (setting 1: 100
windows of stride 1; setting 2: 50 of stride 2; setting 3: 25 of stride 4).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels as klib
from .basis import make_basis
from .discover import DiscoveryConfig, discover
from .dynamics import KernelSpec, SimConfig, simulate
from .qp import build_constraints_for_diffusion, build_constraints_for_drift
from .reports import emit_outputs, write_report
from .trajio import write_trajectory

__all__ = ["BENCH_TESTS", "SETTINGS", "run_bench_test", "make_bench_data",
           "bench_discovery_config"]

SETTINGS = {1: (100, 1), 2: (50, 2), 3: (25, 4)}  # (windows, stride)

SCALES = {
    "paper": {"n_agents": 100_000, "ensemble": 10, "n_pairs_1d": 1000,
              "n_pairs_2d": 1000},
    "desk": {"n_agents": 20_000, "ensemble": 3, "n_pairs_1d": 800,
             "n_pairs_2d": 400},
}


@dataclass
class BenchTest:
    name: str
    dim: int
    dt: float
    n_frames: int
    make_kernels: object
    initial: tuple
    box_half: float
    drift_basis: tuple          # (a, b, size)
    drift_kappa: int
    drift_anchor: float | None
    diff_basis: tuple
    diff_kappa: int
    diff_anchors: tuple         # ((index, coefficient value), ...)
    m_diff: int | None          # None: coupled to the drift windows
    stride_diff: int = 1
    methods: tuple = ("rbm", "mean_field")
    settings: tuple = (1, 2, 3)
    desk_settings: tuple = (1, 2, 3)
    density_bins: int = 100
    notes: str = ""


def _t_known_s():
    return KernelSpec(drift=klib.cucker_smale(),
                      diffusion_mode="pairwise_radial_displacement",
                      diffusion=klib.inverse_square_radial_diffusion())


def _t_bounded_confidence():
    return KernelSpec(drift=klib.bounded_confidence(0.5),
                      diffusion_mode="local_state",
                      diffusion=klib.quartic_well_diffusion())


def _t_attraction_repulsion():
    return KernelSpec(drift=klib.attraction_repulsion(),
                      diffusion_mode="local_state",
                      diffusion=klib.quartic_well_diffusion())


def _t_power_law_2d():
    return KernelSpec(drift=klib.power_law_2d(), diffusion_mode="local_state",
                      diffusion=klib.anisotropic_local_diffusion())


def _t_bc_2d():
    return KernelSpec(drift=klib.bounded_confidence(1.0),
                      diffusion_mode="pairwise_radial_displacement",
                      diffusion=klib.cucker_smale_radial_diffusion())


_DIAG2 = 2.0 * np.sqrt(2.0)

BENCH_TESTS = {
    # Decoupled baseline with recorded pairings; unconstrained drift.
    "known_S": BenchTest(
        name="known_S", dim=1, dt=0.01, n_frames=201, make_kernels=_t_known_s,
        initial=("uniform", -1.0, 1.0), box_half=1.0,
        drift_basis=(0.0, 2.0, 10), drift_kappa=0, drift_anchor=None,
        diff_basis=(0.0, 2.0, 8), diff_kappa=0, diff_anchors=(),
        m_diff=10, methods=("known_S",), settings=(0,), desk_settings=(0,),
        notes="windows fixed at M_P=20, M_D=10, stride 1"),
    "1": BenchTest(
        name="1", dim=1, dt=0.05, n_frames=201, make_kernels=_t_bounded_confidence,
        initial=("uniform", -1.0, 1.0), box_half=1.0,
        drift_basis=(0.0, 2.0, 21), drift_kappa=-1, drift_anchor=1.0,
        diff_basis=(-1.0, 1.0, 15), diff_kappa=0,
        diff_anchors=((0, 0.0), (-1, 0.0)), m_diff=10),
    "2": BenchTest(
        name="2", dim=1, dt=0.05, n_frames=201, make_kernels=_t_attraction_repulsion,
        initial=("uniform", -1.0, 1.0), box_half=1.0,
        drift_basis=(0.0, 2.0, 8), drift_kappa=1, drift_anchor=-1.0,
        diff_basis=(-1.0, 1.0, 15), diff_kappa=0,
        diff_anchors=((0, 0.0), (-1, 0.0)), m_diff=10),
    # Nonlocal diffusion: the anchor pins D(0)=0.25, i.e. zeta_0 = 0.25^2/2.
    "3": BenchTest(
        name="3", dim=1, dt=0.01, n_frames=201, make_kernels=_t_known_s,
        initial=("uniform", -1.0, 1.0), box_half=1.0,
        drift_basis=(0.0, 2.0, 10), drift_kappa=-1, drift_anchor=1.0,
        diff_basis=(0.0, 2.0, 8), diff_kappa=0,
        diff_anchors=((0, 0.25 ** 2 / 2.0),), m_diff=None),
    "4": BenchTest(
        name="4", dim=2, dt=0.01, n_frames=201, make_kernels=_t_power_law_2d,
        initial=("uniform", -0.85, 0.85), box_half=1.0,
        drift_basis=(0.0, _DIAG2, 10), drift_kappa=1, drift_anchor=-7.0,
        diff_basis=(-1.0, 1.0, 15), diff_kappa=0,
        diff_anchors=((0, 0.0), (-1, 0.0)), m_diff=20,
        desk_settings=(3,), density_bins=50),
    # Anchor pins D(0)=1, i.e. zeta_0 = 1/2.
    "5": BenchTest(
        name="5", dim=2, dt=0.01, n_frames=201, make_kernels=_t_bc_2d,
        initial=("uniform", -1.0, 1.0), box_half=1.0,
        drift_basis=(0.0, _DIAG2, 21), drift_kappa=-1, drift_anchor=1.0,
        diff_basis=(0.0, _DIAG2, 10), diff_kappa=-1,
        diff_anchors=((0, 0.5),), m_diff=None,
        settings=(3,), desk_settings=(3,), density_bins=50,
        notes="settings 1-2 omitted for the ensemble method (cost)"),
}


def make_bench_data(test: BenchTest, scale: str, seed: int):
    preset = SCALES[scale]
    kernels = test.make_kernels()
    sim = SimConfig(n_agents=preset["n_agents"], dim=test.dim, dt=test.dt,
                    n_frames=test.n_frames, seed=seed, initial_law=test.initial,
                    domain_half_width=test.box_half)
    return simulate(sim, kernels, scheme="binary"), kernels


def bench_discovery_config(test: BenchTest, scale: str, regime: str, setting: int,
                           seed: int, threads: int = 1) -> DiscoveryConfig:
    preset = SCALES[scale]
    a, b, n = test.drift_basis
    drift_basis = make_basis(a, b, n)
    a, b, n = test.diff_basis
    diff_basis = make_basis(a, b, n)
    kernels = test.make_kernels()
    if test.name == "known_S":
        m_drift, stride = 20, 1
    else:
        m_drift, stride = SETTINGS[setting]
    coupled = kernels.diffusion_mode != "local_state"
    if regime == "rbm" and coupled:
        m_diff, stride_diff = m_drift, stride
    elif test.m_diff is None:
        m_diff, stride_diff = (10, 1) if regime == "mean_field" else (m_drift, stride)
    else:
        m_diff, stride_diff = test.m_diff, test.stride_diff
    n_pairs = preset["n_pairs_1d"] if test.dim == 1 else preset["n_pairs_2d"]
    return DiscoveryConfig(
        regime=regime,
        drift_basis=drift_basis,
        diff_basis=diff_basis,
        diffusion_mode=kernels.diffusion_mode,
        drift_constraints=build_constraints_for_drift(drift_basis.size,
                                                      test.drift_anchor,
                                                      test.drift_kappa),
        diff_constraints=build_constraints_for_diffusion(diff_basis.size,
                                                         test.diff_anchors,
                                                         test.diff_kappa),
        m_drift=m_drift, stride=stride, m_diff=m_diff, stride_diff=stride_diff,
        ensemble=preset["ensemble"], n_pairs=n_pairs,
        density_bins=test.density_bins, box_half=test.box_half,
        seed=seed, threads=threads,
    )


def run_bench_test(test_id: str, scale: str, outdir, seed: int = 0,
                   threads: int = 1, emit_plots: bool = False,
                   settings: tuple | None = None) -> dict:
    """Generate data for one benchmark test and run every applicable method.

    Writes the trajectory file, one report JSON per method/setting, and (on
    request) the combined kernel comparison CSV and figures.  Returns a
    summary of all validation metrics.
    """
    if scale not in SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    test = BENCH_TESTS[test_id]
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    data, kernels = make_bench_data(test, scale, seed)
    write_trajectory(outdir / "trajectory.bin", data)
    use_settings = settings if settings is not None else (
        test.desk_settings if scale == "desk" else test.settings)
    summary = {"test": test_id, "scale": scale, "seed": seed, "results": {}}
    merged_estimates = {}
    last_report = None
    for setting in use_settings:
        for regime in test.methods:
            config = bench_discovery_config(test, scale, regime, setting,
                                            seed=seed + 1, threads=threads)
            report = discover(data, config, kernels)
            tag = f"S{setting}_{regime}" if setting else regime
            write_report(outdir / f"report_{tag}.json", report)
            for rule, metrics in report.validation.items():
                label = tag if rule == regime or rule == "known_S" else f"{tag}_{rule}"
                summary["results"][label] = {k: float(v) for k, v in metrics.items()}
            if setting == use_settings[-1]:
                merged_estimates.update(report.estimates)
                last_report = report
    if emit_plots and last_report is not None:
        files = emit_outputs(outdir, last_report, data, kernels,
                             estimates=merged_estimates)
        summary["plots"] = files
    return summary
