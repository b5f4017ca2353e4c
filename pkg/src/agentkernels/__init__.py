"""Simulation of stochastic pairwise-interacting agent systems and recovery of
their drift interaction kernel and diffusion kernel from trajectory data."""

from .basis import (BasisFamily, KernelEstimate, estimate_from_json,
                    estimate_to_json, eval_basis, eval_basis_many, eval_diff,
                    eval_diff_squared, eval_drift, make_basis)
from .design import (DensityGrid, DesignSystem, assemble_batch,
                     assemble_batch_pair, assemble_known_S, assemble_mean_field,
                     estimate_density, moment_identity_residuals)
from .discover import (DiscoveryConfig, DiscoveryReport, RunRecord,
                       compute_weights, discover, discover_known_S,
                       discover_mean_field, discover_rbm)
from .dynamics import (KernelSpec, NumericError, PairingPlan, ParticleState,
                       SimConfig, TrajectoryDataset, sample_pairing, simulate,
                       simulate_reconstructed, step_batch, step_binary, step_full)
from .metrics import (BoundInputs, ErrorSummary, apriori_bound, density_l1,
                      kernel_errors, lipschitz_estimate, paired_trajectory_gap,
                      supremum_gap, trajectory_errors, w1_sorted)
from .qp import (ConstraintSet, QpSolution, build_constraints_for_diffusion,
                 build_constraints_for_drift, solve_cls, solve_cls_gram)
from .trajio import export_csv, read_trajectory, write_trajectory

__version__ = "0.1.0"
