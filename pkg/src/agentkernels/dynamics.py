"""Forward simulators for stochastic pairwise-interacting agent systems.

Three schemes share the same Euler-Maruyama step structure:

* ``binary``: each agent interacts with exactly one partner per step, drawn
  as a uniformly random perfect matching, so both partners update
  symmetrically.
* ``batch``: each agent averages drift and noise over a random subset of
  ``batch_size`` partners, drawn uniformly without replacement and
  independently per agent and step; unbiased for the full interaction.
* ``full``: the O(N^2) mean-field system with all pairwise terms (small-N
  reference only).

States are flat vectors of length d*N laid out in d-blocks per agent.  All
steps are pure functions of (state, rng); a fixed seed reproduces a run
bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .basis import KernelEstimate, eval_diff, eval_drift

__all__ = [
    "NumericError",
    "ParticleState",
    "PairingPlan",
    "KernelSpec",
    "SimConfig",
    "TrajectoryDataset",
    "sample_pairing",
    "step_binary",
    "step_batch",
    "step_full",
    "simulate",
    "simulate_reconstructed",
    "estimate_as_kernel_spec",
]

DIFFUSION_MODES = ("pairwise_radial", "pairwise_radial_displacement", "local_state")


class NumericError(RuntimeError):
    """A kernel evaluation or state update produced non-finite values."""


@dataclass
class ParticleState:
    """Snapshot of the agent ensemble at one time."""

    t: float
    x: np.ndarray  # flat, length d*N, d-blocks per agent
    n_agents: int
    dim: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.shape != (self.n_agents * self.dim,):
            raise ValueError("state vector length must be dim * n_agents")

    def view(self) -> np.ndarray:
        """(N, d) view of the flat state."""
        return self.x.reshape(self.n_agents, self.dim)

    def validate(self, box_half: float | None = None):
        if not np.all(np.isfinite(self.x)):
            raise NumericError(f"non-finite state at t={self.t}")
        if box_half is not None and np.max(np.abs(self.x), initial=0.0) > box_half:
            i = int(np.argmax(np.abs(self.x)) // self.dim)
            raise ValueError(f"agent {i} outside [-{box_half}, {box_half}]^d at t={self.t}")


@dataclass
class PairingPlan:
    """One interaction partner per agent, as a fixed-point-free permutation."""

    perm: np.ndarray

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=np.int64)

    def validate(self, n_agents: int, involutive: bool = False):
        p = self.perm
        if sorted(p.tolist()) != list(range(n_agents)):
            raise ValueError("pairing is not a permutation")
        if np.any(p == np.arange(n_agents)):
            raise ValueError("pairing has a fixed point (self-interaction)")
        if involutive and np.any(p[p] != np.arange(n_agents)):
            raise ValueError("pairing is not an involution")


@dataclass
class KernelSpec:
    """Ground-truth interaction law.

    ``drift`` is the radial weight P(r).  ``diffusion`` is the radial
    amplitude for the pairwise modes, or a sequence of per-component state
    functions D_c(x_c) for ``local_state``.  All callables must accept numpy
    arrays.
    """

    drift: Callable
    diffusion_mode: str = "pairwise_radial"
    diffusion: Callable | Sequence[Callable] | None = None

    def __post_init__(self):
        if self.diffusion_mode not in DIFFUSION_MODES:
            raise ValueError(f"unknown diffusion_mode {self.diffusion_mode!r}")

    def local_components(self, dim: int) -> list:
        fns = self.diffusion
        if callable(fns):
            return [fns] * dim
        fns = list(fns)
        if len(fns) == 1:
            return fns * dim
        if len(fns) != dim:
            raise ValueError("need one local diffusion function per state dimension")
        return fns


@dataclass
class SimConfig:
    n_agents: int
    dim: int
    dt: float
    n_frames: int
    seed: int
    batch_size: int = 0
    initial_law: object = ("uniform", -1.0, 1.0)
    domain_half_width: float | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_frames < 1:
            raise ValueError("need at least one frame")


@dataclass
class TrajectoryDataset:
    """Times, stacked snapshots, and (for the binary scheme) pairing plans."""

    times: np.ndarray            # (M,)
    snapshots: np.ndarray        # (M, d*N)
    n_agents: int
    dim: int
    dt: float
    seed: int
    scheme: str
    pairings: np.ndarray | None = None  # (M, N) partner indices
    domain_half_width: float | None = None

    @property
    def n_frames(self) -> int:
        return self.snapshots.shape[0]

    def state(self, n: int) -> ParticleState:
        return ParticleState(
            t=float(self.times[n]), x=self.snapshots[n].copy(),
            n_agents=self.n_agents, dim=self.dim,
        )

    def pairing(self, n: int) -> PairingPlan:
        if self.pairings is None:
            raise ValueError("dataset has no recorded pairings")
        return PairingPlan(self.pairings[n])


def sample_pairing(n_agents: int, rng: np.random.Generator) -> PairingPlan:
    """Uniformly random perfect matching as an involutive permutation."""
    if n_agents < 2 or n_agents % 2:
        raise ValueError("pairing requires even N")
    order = rng.permutation(n_agents)
    perm = np.empty(n_agents, dtype=np.int64)
    perm[order[0::2]] = order[1::2]
    perm[order[1::2]] = order[0::2]
    return PairingPlan(perm)


def _pair_quantities(xi: np.ndarray, xj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diff = xj - xi
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    return diff, r


def _check_finite(values: np.ndarray, r: np.ndarray, what: str):
    if np.all(np.isfinite(values)):
        return
    flat = ~np.isfinite(values.reshape(values.shape[0], -1)).all(axis=1)
    i = int(np.argmax(flat))
    raise NumericError(f"non-finite {what} for agent {i} at r={np.atleast_1d(r)[i]!r}")


def _noise_amplitude(kernels: KernelSpec, x: np.ndarray, diff: np.ndarray,
                     r: np.ndarray) -> np.ndarray:
    """Per-agent, per-component diffusion amplitude D_i (shape like x)."""
    mode = kernels.diffusion_mode
    if kernels.diffusion is None:
        return np.zeros_like(x)
    if mode == "pairwise_radial":
        d = np.asarray(kernels.diffusion(r), dtype=float)
        _check_finite(d[:, None], r, "diffusion value")
        return np.repeat(d[:, None], x.shape[1], axis=1)
    if mode == "pairwise_radial_displacement":
        d = np.asarray(kernels.diffusion(r), dtype=float)
        _check_finite(d[:, None], r, "diffusion value")
        return d[:, None] * diff
    amp = np.empty_like(x)
    for c, fn in enumerate(kernels.local_components(x.shape[1])):
        amp[:, c] = fn(x[:, c])
    _check_finite(amp, x[:, 0], "diffusion value")
    return amp


def step_binary(state: ParticleState, plan: PairingPlan, kernels: KernelSpec,
                dt: float, rng: np.random.Generator) -> ParticleState:
    """One matched-pair interaction step.

    x_i <- x_i + dt P(r_i)(x_j - x_i) + sqrt(dt) D_i xi_i with r_i the block
    Euclidean distance to the partner and xi_i iid standard Gaussian.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    xi = state.view()
    xj = xi[plan.perm]
    diff, r = _pair_quantities(xi, xj)
    p = np.asarray(kernels.drift(r), dtype=float)
    _check_finite(p[:, None], r, "drift value")
    amp = _noise_amplitude(kernels, xi, diff, r)
    noise = rng.standard_normal(xi.shape)
    x_new = xi + dt * p[:, None] * diff + np.sqrt(dt) * amp * noise
    return ParticleState(t=state.t + dt, x=x_new.reshape(-1),
                         n_agents=state.n_agents, dim=state.dim)


def sample_batch_partners(rng: np.random.Generator, n_agents: int,
                          batch_size: int) -> np.ndarray:
    """(N, batch_size) partner indices, uniform without replacement, != self.

    Duplicate slots are redrawn until each row is distinct; the procedure is
    equivariant under relabeling of the candidates, so the resulting subsets
    are uniform.  Only rows that still contain duplicates are re-examined.
    """
    if not 1 <= batch_size < n_agents:
        raise ValueError("need 1 <= batch_size < N")
    v = rng.integers(0, n_agents - 1, size=(n_agents, batch_size))
    if batch_size > 1:
        todo = np.arange(n_agents)
        while todo.size:
            sub = v[todo]
            order = np.argsort(sub, axis=1, kind="stable")
            sv = np.take_along_axis(sub, order, axis=1)
            dup_sorted = np.zeros_like(sub, dtype=bool)
            dup_sorted[:, 1:] = sv[:, 1:] == sv[:, :-1]
            hit = dup_sorted.any(axis=1)
            if not hit.any():
                break
            todo = todo[hit]
            sub, order, dup_sorted = sub[hit], order[hit], dup_sorted[hit]
            dup = np.zeros_like(dup_sorted)
            np.put_along_axis(dup, order, dup_sorted, axis=1)
            sub[dup] = rng.integers(0, n_agents - 1, size=int(dup.sum()))
            v[todo] = sub
    return v + (v >= np.arange(n_agents)[:, None])


def step_batch(state: ParticleState, kernels: KernelSpec, batch_size: int,
               dt: float, rng: np.random.Generator) -> ParticleState:
    """One random-batch step: drift and noise averaged over batch_size partners."""
    if batch_size >= state.n_agents:
        raise ValueError("batch size must be smaller than N")
    xi = state.view()
    partners = sample_batch_partners(rng, state.n_agents, batch_size)
    xj = xi[partners]                       # (N, Np, d)
    diff = xj - xi[:, None, :]
    r = np.sqrt(np.sum(diff * diff, axis=2))
    p = np.asarray(kernels.drift(r), dtype=float)
    _check_finite(p, r[:, 0], "drift value")
    drift = np.einsum("ij,ijc->ic", p, diff) / batch_size

    noise = rng.standard_normal(diff.shape)
    mode = kernels.diffusion_mode
    if kernels.diffusion is None:
        amp_noise = np.zeros_like(xi)
    elif mode == "pairwise_radial":
        d = np.asarray(kernels.diffusion(r), dtype=float)
        _check_finite(d, r[:, 0], "diffusion value")
        amp_noise = np.einsum("ij,ijc->ic", d, noise) / batch_size
    elif mode == "pairwise_radial_displacement":
        d = np.asarray(kernels.diffusion(r), dtype=float)
        _check_finite(d, r[:, 0], "diffusion value")
        amp_noise = np.einsum("ij,ijc->ic", d, diff * noise) / batch_size
    else:
        amp = np.empty_like(xi)
        for c, fn in enumerate(kernels.local_components(xi.shape[1])):
            amp[:, c] = fn(xi[:, c])
        _check_finite(amp, xi[:, 0], "diffusion value")
        amp_noise = amp * noise.sum(axis=1) / batch_size

    x_new = xi + dt * drift + np.sqrt(dt) * amp_noise
    return ParticleState(t=state.t + dt, x=x_new.reshape(-1),
                         n_agents=state.n_agents, dim=state.dim)


def step_full(state: ParticleState, kernels: KernelSpec, dt: float,
              rng: np.random.Generator) -> ParticleState:
    """One step of the fully coupled mean-field system (O(N^2), small N only)."""
    xi = state.view()
    n = state.n_agents
    diff = xi[None, :, :] - xi[:, None, :]        # (N, N, d), row i: x_j - x_i
    r = np.sqrt(np.sum(diff * diff, axis=2))
    p = np.asarray(kernels.drift(r), dtype=float)
    _check_finite(p, r[:, 0], "drift value")
    drift = np.einsum("ij,ijc->ic", p, diff) / n

    noise = rng.standard_normal(diff.shape)
    mode = kernels.diffusion_mode
    if kernels.diffusion is None:
        amp_noise = np.zeros_like(xi)
    elif mode == "pairwise_radial":
        d = np.asarray(kernels.diffusion(r), dtype=float)
        amp_noise = np.einsum("ij,ijc->ic", d, noise) / n
    elif mode == "pairwise_radial_displacement":
        d = np.asarray(kernels.diffusion(r), dtype=float)
        amp_noise = np.einsum("ij,ijc->ic", d, diff * noise) / n
    else:
        amp = np.empty_like(xi)
        for c, fn in enumerate(kernels.local_components(xi.shape[1])):
            amp[:, c] = fn(xi[:, c])
        amp_noise = amp * noise.sum(axis=1) / n
    x_new = xi + dt * drift + np.sqrt(dt) * amp_noise
    return ParticleState(t=state.t + dt, x=x_new.reshape(-1),
                         n_agents=state.n_agents, dim=state.dim)


def draw_initial(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    law = config.initial_law
    size = config.n_agents * config.dim
    if isinstance(law, np.ndarray):
        x0 = np.asarray(law, dtype=float).reshape(-1)
        if x0.size != size:
            raise ValueError("explicit initial samples have wrong length")
        return x0.copy()
    if isinstance(law, tuple) and law and law[0] == "uniform":
        _, lo, hi = law
        return rng.uniform(lo, hi, size=size)
    raise ValueError(f"unsupported initial law {law!r}")


def simulate(config: SimConfig, kernels: KernelSpec, scheme: str = "binary",
             pairings: np.ndarray | None = None) -> TrajectoryDataset:
    """Generate a trajectory of ``n_frames`` snapshots at t_n = n*dt.

    ``scheme`` is one of ``binary``, ``batch``, ``full``.  For ``binary`` the
    matching used at every frame is recorded (the final frame stores a freshly
    drawn, unused plan so files keep one plan per frame); ``pairings`` replays
    a recorded set of plans instead of sampling new ones.
    """
    if scheme not in ("binary", "batch", "full"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "batch" and not 1 <= config.batch_size < config.n_agents:
        raise ValueError("batch scheme needs 1 <= batch_size < N")
    if scheme == "binary" and config.n_agents % 2:
        raise ValueError("pairing requires even N")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    n, d, m = config.n_agents, config.dim, config.n_frames
    snapshots = np.empty((m, n * d))
    snapshots[0] = draw_initial(config, rng)
    recorded = np.empty((m, n), dtype=np.int64) if scheme == "binary" else None
    state = ParticleState(t=0.0, x=snapshots[0].copy(), n_agents=n, dim=d)
    for step in range(m - 1):
        if scheme == "binary":
            if pairings is not None:
                plan = PairingPlan(pairings[step])
            else:
                plan = sample_pairing(n, rng)
            recorded[step] = plan.perm
            state = step_binary(state, plan, kernels, config.dt, rng)
        elif scheme == "batch":
            state = step_batch(state, kernels, config.batch_size, config.dt, rng)
        else:
            state = step_full(state, kernels, config.dt, rng)
        snapshots[step + 1] = state.x
    if scheme == "binary":
        if pairings is not None:
            recorded[m - 1] = pairings[m - 1]
        else:
            recorded[m - 1] = sample_pairing(n, rng).perm
    times = config.dt * np.arange(m)
    return TrajectoryDataset(
        times=times, snapshots=snapshots, n_agents=n, dim=d, dt=config.dt,
        seed=config.seed, scheme=scheme, pairings=recorded,
        domain_half_width=config.domain_half_width,
    )


def estimate_as_kernel_spec(estimate: KernelEstimate) -> KernelSpec:
    """Wrap a KernelEstimate so the simulators can run the learned dynamics."""
    if estimate.diffusion_mode == "local_state":
        fns = [
            (lambda v, c=c: eval_diff(estimate, v, component=c))
            for c in range(estimate.n_diff_components)
        ]
        diffusion = fns
    else:
        diffusion = lambda r: eval_diff(estimate, r)  # noqa: E731
    return KernelSpec(
        drift=lambda r: eval_drift(estimate, r),
        diffusion_mode=estimate.diffusion_mode,
        diffusion=diffusion,
    )


def simulate_reconstructed(config: SimConfig, estimate: KernelEstimate,
                           scheme: str = "binary",
                           pairings: np.ndarray | None = None) -> TrajectoryDataset:
    """Evolve the learned dynamics from the configured initial condition."""
    return simulate(config, estimate_as_kernel_spec(estimate), scheme, pairings=pairings)
