"""Discovery pipelines: known-pairing baseline, informed random-batch
ensemble, and mean-field quadrature.

The random-batch pipeline runs K independent regressions on freshly sampled
pairings, scores each candidate kernel pair by re-simulating the dynamics it
induces and measuring the trajectory reconstruction error E_k, then solves a
final regression whose snapshot blocks are weighted by either the averaging
rule or the best-fit rule.  The mean-field pipeline needs no ensemble: the
histogram density closes the regression deterministically given the data.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisFamily, KernelEstimate, eval_diff, eval_drift
from .design import (assemble_batch, assemble_batch_pair, assemble_known_S,
                     assemble_mean_field)
from .dynamics import (KernelSpec, NumericError, SimConfig, TrajectoryDataset,
                       simulate_reconstructed)
from .metrics import kernel_errors, trajectory_errors
from .qp import ConstraintSet, solve_cls_gram

__all__ = [
    "DiscoveryConfig",
    "DiscoveryReport",
    "RunRecord",
    "compute_weights",
    "discover_known_S",
    "discover_rbm",
    "discover_mean_field",
    "discover",
]


@dataclass
class DiscoveryConfig:
    """Everything one discovery run needs besides the trajectory data."""

    regime: str                      # known_S | rbm | mean_field
    drift_basis: BasisFamily
    diff_basis: BasisFamily
    diffusion_mode: str = "pairwise_radial"
    drift_constraints: ConstraintSet | None = None
    diff_constraints: ConstraintSet | None = None
    m_drift: int = 1
    stride: int = 1
    m_diff: int = 1
    stride_diff: int = 1
    ensemble: int = 1                # K
    n_pairs: int = 1                 # N_p
    weight_rule: str = "averaging"
    density_bins: int = 100
    box_half: float = 1.0
    seed: int = 0
    recon_scheme: str | None = None  # default: binary matching (see resolved_recon_scheme)
    recon_n_pairs: int | None = None
    threads: int = 1

    def __post_init__(self):
        if self.regime not in ("known_S", "rbm", "mean_field"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.weight_rule not in ("averaging", "best"):
            raise ValueError(f"unknown weight rule {self.weight_rule!r}")
        if self.ensemble < 1:
            raise ValueError("ensemble size K must be at least 1")

    @property
    def coupled(self) -> bool:
        """Drift and diffusion share pair draws when the diffusion is pairwise."""
        return self.diffusion_mode != "local_state"

    def resolved_recon_scheme(self) -> str:
        """Scheme for re-simulating learned dynamics (E_k and validation).

        Binary matching by default: it carries the same per-agent noise level
        as the data, whereas batch averaging suppresses the density-level
        diffusion by 1/N_p and cannot reach the data's reconstruction error
        even with exact kernels.
        """
        if self.recon_scheme is not None:
            return self.recon_scheme
        return "binary"


@dataclass
class RunRecord:
    rho: np.ndarray
    zeta: np.ndarray
    error: float
    weight_av: float
    weight_best: float


@dataclass
class DiscoveryReport:
    estimate: KernelEstimate
    estimates: dict
    regime: str
    per_run: list = field(default_factory=list)
    weights: dict = field(default_factory=dict)
    weight_degenerate: bool = False
    timings: dict = field(default_factory=dict)
    validation: dict = field(default_factory=dict)
    solver_info: dict = field(default_factory=dict)
    config: DiscoveryConfig | None = None


def compute_weights(errors, rule: str) -> tuple[np.ndarray, bool]:
    """Ensemble weights from the per-run reconstruction errors.

    Averaging rule: w_k = (1 - E_k / sum E) / (K - 1), which is nonnegative
    and sums to one.  Best-fit rule: indicator of the smallest error, ties
    broken by the smallest run index.  Returns (weights, degenerate_flag);
    the flag marks an all-zero error vector, where the averaging rule is 0/0
    and uniform weights are substituted.
    """
    e = np.asarray(errors, dtype=float)
    k = e.size
    if k < 1:
        raise ValueError("need at least one run")
    if np.any(e < 0):
        raise ValueError("reconstruction errors must be nonnegative")
    if rule == "best":
        w = np.zeros(k)
        w[int(np.argmin(e))] = 1.0
        return w, False
    if rule != "averaging":
        raise ValueError(f"unknown weight rule {rule!r}")
    if k == 1:
        return np.ones(1), False
    total = e.sum()
    if total == 0.0:
        return np.full(k, 1.0 / k), True
    e_bar = e / total
    return (1.0 - e_bar) / (k - 1), False


def _child_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence((int(seed),) + tuple(int(v) for v in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _solve(gram: tuple, constraints: ConstraintSet | None, label: str, info: dict):
    g, c, y2 = gram
    sol = solve_cls_gram(g, c, constraints, y_norm2=y2)
    info[label] = {
        "status": sol.status,
        "kkt_residual": sol.kkt_residual,
        "iterations": sol.iterations,
        "objective": sol.objective,
        "regularized": sol.regularized,
    }
    if sol.status == "infeasible":
        raise NumericError(f"{label} regression has infeasible constraints: "
                           f"{sol.certificate}")
    return sol.theta


def _solve_diffusion_components(data: TrajectoryDataset, config: DiscoveryConfig,
                                assemble, info: dict) -> np.ndarray:
    """Solve one diffusion regression per state component (local-state mode)."""
    rows = []
    for c in range(data.dim):
        ds = assemble(c)
        rows.append(_solve(ds.gram(), config.diff_constraints,
                           f"diffusion[{c}]", info))
    return np.vstack(rows)


def _make_estimate(config: DiscoveryConfig, rho: np.ndarray, zeta: np.ndarray) -> KernelEstimate:
    return KernelEstimate(drift_basis=config.drift_basis, rho=rho,
                          diff_basis=config.diff_basis, zeta=zeta,
                          diffusion_mode=config.diffusion_mode)


def _reconstruct(data: TrajectoryDataset, config: DiscoveryConfig,
                 estimate: KernelEstimate, seed: int) -> TrajectoryDataset:
    scheme = config.resolved_recon_scheme()
    if scheme == "binary" and data.n_agents % 2:
        scheme, n_pairs = "batch", 1  # matching needs even N; one random pair is closest
    else:
        n_pairs = config.recon_n_pairs if config.recon_n_pairs is not None else config.n_pairs
    sim = SimConfig(
        n_agents=data.n_agents, dim=data.dim, dt=data.dt, n_frames=data.n_frames,
        seed=seed, batch_size=min(n_pairs, data.n_agents - 1),
        initial_law=data.snapshots[0].copy(),
        domain_half_width=data.domain_half_width,
    )
    return simulate_reconstructed(sim, estimate, scheme)


def _reconstruction_error(data: TrajectoryDataset, recon: TrajectoryDataset,
                          config: DiscoveryConfig) -> float:
    ave, _ = trajectory_errors(data, recon, half_width=config.box_half)
    return ave


def validate_estimate(data: TrajectoryDataset, estimate: KernelEstimate,
                      true_kernels: KernelSpec, config: DiscoveryConfig,
                      kernel_interval=(0.0, 2.0), seed_salt: int = 9090) -> dict:
    """Errors of an estimate against the generating kernels.

    Kernel errors are relative L1/Linf on the declared interval; trajectory
    errors come from re-simulating the learned dynamics from the data's
    initial condition over the full horizon.
    """
    out = {}
    out["E_P_1"], out["E_P_inf"] = kernel_errors(
        true_kernels.drift, lambda r: eval_drift(estimate, r), kernel_interval)
    if true_kernels.diffusion is not None:
        if config.diffusion_mode == "local_state":
            interval = (float(estimate.diff_basis.a), float(estimate.diff_basis.b))
            fns = true_kernels.local_components(data.dim)
            for c in range(estimate.n_diff_components):
                e1, einf = kernel_errors(
                    fns[c], lambda v, c=c: eval_diff(estimate, v, component=c), interval)
                suffix = f"_{c + 1}" if estimate.n_diff_components > 1 else ""
                out[f"E_D{suffix}_1"], out[f"E_D{suffix}_inf"] = e1, einf
        else:
            out["E_D_1"], out["E_D_inf"] = kernel_errors(
                true_kernels.diffusion, lambda r: eval_diff(estimate, r), kernel_interval)
    recon = _reconstruct(data, config, estimate, _child_seed(config.seed, seed_salt))
    ave, fin = trajectory_errors(data, recon, half_width=config.box_half)
    if data.dim == 1:
        out["E_f_ave"], out["E_f_fin"] = ave, fin
    else:
        out["E_f_1"], out["E_f_T"] = ave, fin
    return out


def discover_known_S(data: TrajectoryDataset, config: DiscoveryConfig,
                     true_kernels: KernelSpec | None = None) -> DiscoveryReport:
    """Decoupled drift and diffusion regressions with recorded pairings."""
    t0 = time.perf_counter()
    info: dict = {}
    ds_p = assemble_known_S(data, config.drift_basis, "drift", config.m_drift)
    rho = _solve(ds_p.gram(), config.drift_constraints, "drift", info)
    if config.diffusion_mode == "local_state":
        zeta = _solve_diffusion_components(
            data, config,
            lambda c: assemble_known_S(data, config.diff_basis, "diffusion",
                                       config.m_diff, diffusion_mode="local_state",
                                       component=c),
            info)
    else:
        ds_d = assemble_known_S(data, config.diff_basis, "diffusion", config.m_diff,
                                diffusion_mode=config.diffusion_mode)
        zeta = _solve(ds_d.gram(), config.diff_constraints, "diffusion", info)
    t_solve = time.perf_counter()
    estimate = _make_estimate(config, rho, np.atleast_2d(zeta))
    report = DiscoveryReport(estimate=estimate, estimates={"known_S": estimate},
                             regime="known_S", solver_info=info, config=config)
    report.timings["assemble_and_solve_s"] = t_solve - t0
    if true_kernels is not None:
        report.validation["known_S"] = validate_estimate(data, estimate, true_kernels,
                                                         config)
    report.timings["total_s"] = time.perf_counter() - t0
    return report


def _rbm_member(data: TrajectoryDataset, config: DiscoveryConfig, k: int):
    """Assemble and solve ensemble member k; return Grams, coefficients, E_k."""
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, k)))
    info: dict = {}
    if config.coupled:
        ds_p, ds_d = assemble_batch_pair(
            data, config.drift_basis, config.diff_basis, config.m_drift,
            config.stride, config.n_pairs, rng, diffusion_mode=config.diffusion_mode)
        gram_d = ds_d.gram()
    else:
        ds_p = assemble_batch(data, config.drift_basis, "drift", config.m_drift,
                              config.stride, config.n_pairs, rng)
        gram_d = None
    gram_p = ds_p.gram()
    rho = _solve(gram_p, config.drift_constraints, f"drift[k={k}]", info)
    if gram_d is not None:
        zeta = _solve(gram_d, config.diff_constraints, f"diffusion[k={k}]", info)
        zeta = np.atleast_2d(zeta)
    else:
        zeta = None
    return gram_p, gram_d, rho, zeta, info


def discover_rbm(data: TrajectoryDataset, config: DiscoveryConfig,
                 true_kernels: KernelSpec | None = None) -> DiscoveryReport:
    """Informed random-batch ensemble discovery.

    K regressions on independent batch draws produce candidate kernels; each
    candidate is scored by the trajectory error of its re-simulated dynamics;
    the final coefficient vectors solve regressions whose K snapshot blocks
    carry the averaging-rule and best-fit weights.  When the diffusion is
    pairwise, drift and diffusion consume identical draws, which forces a
    shared window count and stride.
    """
    t0 = time.perf_counter()
    if config.coupled and (config.m_drift != config.m_diff
                           or config.stride != config.stride_diff):
        raise ValueError("pairwise diffusion couples the regressions: "
                         "m_drift == m_diff and shared stride are required")
    info: dict = {}

    # State-local diffusion never depends on the sampled pairs: solve it once.
    zeta_fixed = None
    if not config.coupled:
        zeta_fixed = _solve_diffusion_components(
            data, config,
            lambda c: assemble_batch(data, config.diff_basis, "diffusion",
                                     config.m_diff, config.stride_diff,
                                     config.n_pairs,
                                     np.random.default_rng(_child_seed(config.seed, 7, c)),
                                     diffusion_mode="local_state", component=c),
            info)

    k_total = config.ensemble
    t_assemble0 = time.perf_counter()

    def member(k):
        return _rbm_member(data, config, k)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            members = list(pool.map(member, range(k_total)))
    else:
        members = [member(k) for k in range(k_total)]
    for _, _, _, _, member_info in members:
        info.update(member_info)
    t_assemble = time.perf_counter() - t_assemble0

    t_recon0 = time.perf_counter()

    def score(k):
        gram_p, gram_d, rho, zeta, _ = members[k]
        est = _make_estimate(config, rho, zeta if zeta is not None else zeta_fixed)
        recon = _reconstruct(data, config, est, _child_seed(config.seed, k, 3))
        return _reconstruction_error(data, recon, config), est

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            scored = list(pool.map(score, range(k_total)))
    else:
        scored = [score(k) for k in range(k_total)]
    errors = np.array([s[0] for s in scored])
    t_recon = time.perf_counter() - t_recon0

    w_av, degenerate = compute_weights(errors, "averaging")
    w_best, _ = compute_weights(errors, "best")

    def weighted_solve(weights, label):
        gp = sum(w / config.m_drift * np.asarray(members[k][0][0])
                 for k, w in enumerate(weights))
        cp = sum(w / config.m_drift * np.asarray(members[k][0][1])
                 for k, w in enumerate(weights))
        y2p = sum(w / config.m_drift * members[k][0][2] for k, w in enumerate(weights))
        rho = _solve((gp, cp, y2p), config.drift_constraints, f"drift[{label}]", info)
        if config.coupled:
            gd = sum(w / config.m_diff * np.asarray(members[k][1][0])
                     for k, w in enumerate(weights))
            cd = sum(w / config.m_diff * np.asarray(members[k][1][1])
                     for k, w in enumerate(weights))
            y2d = sum(w / config.m_diff * members[k][1][2] for k, w in enumerate(weights))
            zeta = np.atleast_2d(_solve((gd, cd, y2d), config.diff_constraints,
                                        f"diffusion[{label}]", info))
        else:
            zeta = zeta_fixed
        return _make_estimate(config, rho, zeta)

    estimates = {
        "averaging": weighted_solve(w_av, "averaging"),
        "best": weighted_solve(w_best, "best"),
    }
    per_run = [
        RunRecord(rho=members[k][2],
                  zeta=(members[k][3] if members[k][3] is not None else zeta_fixed),
                  error=float(errors[k]), weight_av=float(w_av[k]),
                  weight_best=float(w_best[k]))
        for k in range(k_total)
    ]
    report = DiscoveryReport(
        estimate=estimates[config.weight_rule], estimates=estimates, regime="rbm",
        per_run=per_run, weights={"averaging": w_av, "best": w_best},
        weight_degenerate=degenerate, solver_info=info, config=config,
    )
    report.timings.update(assemble_s=t_assemble, reconstruction_s=t_recon)
    if true_kernels is not None:
        for rule, est in estimates.items():
            report.validation[rule] = validate_estimate(data, est, true_kernels, config)
    report.timings["total_s"] = time.perf_counter() - t0
    return report


def discover_mean_field(data: TrajectoryDataset, config: DiscoveryConfig,
                        true_kernels: KernelSpec | None = None) -> DiscoveryReport:
    """Mean-field discovery: density estimation, quadrature assembly, two solves."""
    t0 = time.perf_counter()
    info: dict = {}
    ds_p = assemble_mean_field(data, config.drift_basis, "drift", config.m_drift,
                               config.stride, config.box_half, config.density_bins)
    rho = _solve(ds_p.gram(), config.drift_constraints, "drift", info)
    if config.diffusion_mode == "local_state":
        zeta = _solve_diffusion_components(
            data, config,
            lambda c: assemble_mean_field(data, config.diff_basis, "diffusion",
                                          config.m_diff, config.stride_diff,
                                          config.box_half, config.density_bins,
                                          diffusion_mode="local_state", component=c),
            info)
    else:
        ds_d = assemble_mean_field(data, config.diff_basis, "diffusion", config.m_diff,
                                   config.stride_diff, config.box_half,
                                   config.density_bins,
                                   diffusion_mode=config.diffusion_mode)
        zeta = np.atleast_2d(_solve(ds_d.gram(), config.diff_constraints,
                                    "diffusion", info))
    estimate = _make_estimate(config, rho, zeta)
    report = DiscoveryReport(estimate=estimate, estimates={"mean_field": estimate},
                             regime="mean_field", solver_info=info, config=config)
    if true_kernels is not None:
        report.validation["mean_field"] = validate_estimate(data, estimate,
                                                            true_kernels, config)
    report.timings["total_s"] = time.perf_counter() - t0
    return report


def discover(data: TrajectoryDataset, config: DiscoveryConfig,
             true_kernels: KernelSpec | None = None) -> DiscoveryReport:
    """Dispatch to the pipeline selected by ``config.regime``."""
    if config.regime == "known_S":
        return discover_known_S(data, config, true_kernels)
    if config.regime == "rbm":
        return discover_rbm(data, config, true_kernels)
    return discover_mean_field(data, config, true_kernels)
