"""Error metrics for kernels, trajectories and densities, plus the a-priori
mean-square trajectory error bound and its empirical check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .design import estimate_density
from .dynamics import KernelSpec, PairingPlan, ParticleState, TrajectoryDataset, step_binary

__all__ = [
    "ErrorSummary",
    "BoundInputs",
    "kernel_errors",
    "w1_sorted",
    "density_l1",
    "trajectory_errors",
    "trajectory_error_series",
    "apriori_bound",
    "supremum_gap",
    "lipschitz_estimate",
    "paired_trajectory_gap",
]

KERNEL_INTERVAL = (0.0, 2.0)
KERNEL_QUAD_POINTS = 2001
HIST_BINS_2D = 50


@dataclass
class ErrorSummary:
    """Relative kernel errors and trajectory reconstruction errors."""

    E1: float | None = None
    Einf: float | None = None
    E_f_ave: float | None = None
    E_f_fin: float | None = None
    E_f_1: float | None = None
    E_f_T: float | None = None


def kernel_errors(f_true, f_hat, interval=KERNEL_INTERVAL,
                  quad_points: int = KERNEL_QUAD_POINTS) -> tuple[float, float]:
    """Relative L1 (composite trapezoid) and Linf errors of f_hat against f_true."""
    if quad_points < 2:
        raise ValueError("need at least 2 quadrature points")
    grid = np.linspace(interval[0], interval[1], quad_points)
    ft = np.asarray(f_true(grid), dtype=float)
    fh = np.asarray(f_hat(grid), dtype=float)
    norm1 = np.trapezoid(np.abs(ft), grid)
    norm_inf = np.max(np.abs(ft))
    if norm1 == 0.0 or norm_inf == 0.0:
        raise ValueError("relative error undefined for a zero reference function")
    e1 = float(np.trapezoid(np.abs(ft - fh), grid) / norm1)
    einf = float(np.max(np.abs(ft - fh)) / norm_inf)
    return e1, einf


def w1_sorted(xa, xb, dim: int = 1) -> float:
    """1-Wasserstein distance of two equal-size empirical measures in 1D.

    Sorting both samples realizes the optimal assignment, so the distance is
    the mean absolute gap of the order statistics.
    """
    if dim != 1:
        raise ValueError("w1_sorted is 1D only; use density_l1 for d > 1")
    xa = np.sort(np.asarray(xa, dtype=float).ravel())
    xb = np.sort(np.asarray(xb, dtype=float).ravel())
    if xa.size != xb.size:
        raise ValueError("samples must have equal size")
    return float(np.mean(np.abs(xa - xb)))


def density_l1(xa, xb, dim: int, half_width: float = 1.0,
               bins: int = HIST_BINS_2D) -> tuple[float, float]:
    """(||f_a - f_b||_L1, ||f_a||_L1) of the histogram densities of two samples."""
    n = np.asarray(xa).size // dim
    sa = ParticleState(t=0.0, x=np.asarray(xa, float).ravel(), n_agents=n, dim=dim)
    sb = ParticleState(t=0.0, x=np.asarray(xb, float).ravel(), n_agents=n, dim=dim)
    ga = estimate_density(sa, half_width, bins)
    gb = estimate_density(sb, half_width, bins)
    gap = float(np.sum(np.abs(ga.values - gb.values)) * ga.cell_volume)
    ref = float(np.sum(np.abs(ga.values)) * ga.cell_volume)
    return gap, ref


def _check_grids(data: TrajectoryDataset, recon: TrajectoryDataset):
    if data.n_frames != recon.n_frames or abs(data.dt - recon.dt) > 1e-15:
        raise ValueError("datasets must share the snapshot grid")
    if data.n_agents != recon.n_agents or data.dim != recon.dim:
        raise ValueError("datasets must share N and d")


def trajectory_error_series(data: TrajectoryDataset, recon: TrajectoryDataset,
                            half_width: float = 1.0,
                            bins: int = HIST_BINS_2D) -> tuple[np.ndarray, np.ndarray]:
    """Per-snapshot reconstruction error for frames 1..M-1.

    1D: sorted-sample W1 per frame.  2D: normalized histogram L1 gap per frame.
    """
    _check_grids(data, recon)
    m = data.n_frames
    vals = np.empty(m - 1)
    for n in range(1, m):
        if data.dim == 1:
            vals[n - 1] = w1_sorted(data.snapshots[n], recon.snapshots[n])
        else:
            gap, ref = density_l1(data.snapshots[n], recon.snapshots[n],
                                  data.dim, half_width, bins)
            vals[n - 1] = gap / ref
    return data.times[1:], vals


def trajectory_errors(data: TrajectoryDataset, recon: TrajectoryDataset,
                      half_width: float = 1.0,
                      bins: int = HIST_BINS_2D) -> tuple[float, float]:
    """(time-averaged, final-time) reconstruction errors.

    1D uses the sorted-sample W1; 2D uses aggregated normalized histogram L1
    gaps (sum of gaps over frames divided by the sum of reference norms).
    """
    _check_grids(data, recon)
    if data.dim == 1:
        _, vals = trajectory_error_series(data, recon)
        return float(np.mean(vals)), float(vals[-1])
    gaps, refs = [], []
    for n in range(1, data.n_frames):
        gap, ref = density_l1(data.snapshots[n], recon.snapshots[n],
                              data.dim, half_width, bins)
        gaps.append(gap)
        refs.append(ref)
    return float(np.sum(gaps) / np.sum(refs)), float(gaps[-1] / refs[-1])


@dataclass
class BoundInputs:
    """Constants entering the a-priori trajectory error bound."""

    lip_P: float
    lip_D: float
    lip_P_hat: float
    lip_D_hat: float
    P_max: float
    P_hat_max: float
    D_max: float
    D_hat_max: float
    delta_P: float
    delta_D: float
    eta_S: float
    box_half: float
    n_dof: int      # d * N
    horizon: float
    dt: float

    def __post_init__(self):
        vals = [self.lip_P, self.lip_D, self.lip_P_hat, self.lip_D_hat,
                self.P_max, self.P_hat_max, self.D_max, self.D_hat_max,
                self.delta_P, self.delta_D, self.eta_S, self.box_half,
                self.horizon]
        if any(v < 0 for v in vals):
            raise ValueError("bound inputs must be nonnegative")
        if self.eta_S > 2.0 + 1e-12:
            raise ValueError("pairing gap cannot exceed 2")


def apriori_bound(inputs: BoundInputs) -> float:
    """Right-hand side of the mean-square trajectory error bound.

    (delta_P^2 + delta_D^2 + eta_S^2) * C2_hat * (exp(C1_hat * T) - 1), with
    the two Gronwall constants assembled from the Lipschitz and sup bounds of
    the true and reconstructed kernels.  The exponential is allowed to
    overflow to inf: the bound stays valid, just uninformative.
    """
    if inputs.dt > 1.0:
        raise ValueError("theorem hypothesis violated: dt must be <= 1")
    L, nd = inputs.box_half, float(inputs.n_dof)
    c1 = (8.0 * inputs.P_max ** 2 + 64.0 * L ** 2 * inputs.lip_P ** 2
          + 4.0 * inputs.P_max + 4.0 * L * inputs.lip_P
          + 8.0 * nd * inputs.lip_D ** 2 + 1.0)
    c2 = 18.0 * L ** 2 * nd + 2.0 * nd
    c3 = (1.0 + 4.0 * inputs.P_hat_max + 2.0 * L * inputs.lip_P_hat
          + 8.0 * nd * inputs.lip_D_hat ** 2 + 8.0 * inputs.P_hat_max ** 2
          + 64.0 * L ** 2 * inputs.lip_P_hat ** 2 * nd)
    c4 = ((inputs.P_hat_max + 2.0 * L * inputs.lip_P_hat) ** 2 * nd
          + 2.0 * nd ** 2 * inputs.lip_D_hat ** 2 * L ** 2
          + 4.0 * inputs.P_hat_max ** 2 * nd * L ** 2
          + 16.0 * L ** 4 * inputs.lip_P_hat ** 2 * nd ** 2)
    c1_hat = max(c1, c3)
    c2_hat = max(c2 / c1, c4 / c3)
    gaps = inputs.delta_P ** 2 + inputs.delta_D ** 2 + inputs.eta_S ** 2
    if gaps == 0.0 or inputs.horizon == 0.0:
        return 0.0
    with np.errstate(over="ignore"):
        growth = np.exp(c1_hat * inputs.horizon) - 1.0
    return float(gaps * c2_hat * growth)


def supremum_gap(f_true, f_hat, interval=KERNEL_INTERVAL, grid_points: int = 2001) -> float:
    """Grid supremum of |f_true - f_hat| on the interval."""
    if grid_points < 2:
        raise ValueError("need at least 2 grid points")
    grid = np.linspace(interval[0], interval[1], grid_points)
    return float(np.max(np.abs(np.asarray(f_true(grid)) - np.asarray(f_hat(grid)))))


def lipschitz_estimate(f, interval=KERNEL_INTERVAL, grid_points: int = 2001) -> float:
    """Largest absolute divided difference over adjacent grid points.

    A lower bound for the true Lipschitz constant; adequate for sanity checks
    of the error bound, which are not proofs.
    """
    grid = np.linspace(interval[0], interval[1], grid_points)
    vals = np.asarray(f(grid), dtype=float)
    return float(np.max(np.abs(np.diff(vals) / np.diff(grid))))


def paired_trajectory_gap(x0: np.ndarray, n_agents: int, dim: int,
                          kernels_true: KernelSpec, kernels_hat: KernelSpec,
                          dt: float, n_steps: int, n_paths: int,
                          seed: int) -> float:
    """max_n of the Monte Carlo mean of ||X^n - X_hat^n||^2 under shared noise.

    Both systems evolve from the same initial condition with identical pairing
    plans and identical Gaussian increments, which is the coupling under which
    the a-priori bound is stated.
    """
    acc = np.zeros(n_steps + 1)
    root = np.random.SeedSequence(seed)
    for path in range(n_paths):
        ss = np.random.SeedSequence(entropy=root.entropy, spawn_key=(path,))
        plan_rng = np.random.default_rng(ss)
        rng_a = np.random.default_rng(np.random.SeedSequence(entropy=root.entropy,
                                                             spawn_key=(path, 1)))
        rng_b = np.random.default_rng(np.random.SeedSequence(entropy=root.entropy,
                                                             spawn_key=(path, 1)))
        sa = ParticleState(t=0.0, x=x0.copy(), n_agents=n_agents, dim=dim)
        sb = ParticleState(t=0.0, x=x0.copy(), n_agents=n_agents, dim=dim)
        for n in range(n_steps):
            perm = plan_rng.permutation(n_agents)
            plan = PairingPlan(np.empty(n_agents, dtype=np.int64))
            plan.perm[perm[0::2]] = perm[1::2]
            plan.perm[perm[1::2]] = perm[0::2]
            sa = step_binary(sa, plan, kernels_true, dt, rng_a)
            sb = step_binary(sb, plan, kernels_hat, dt, rng_b)
            gap = sa.x - sb.x
            acc[n + 1] += float(gap @ gap)
    return float(np.max(acc / n_paths))
