"""Assembly of regression targets and design matrices for kernel discovery.

Three observation regimes produce the same kind of stacked least-squares
system:

* ``known_S``: the recorded pairing permutations are used directly, one
  partner per agent per snapshot.
* ``batch``: the latent pairings are replaced by ``n_pairs`` independent
  single-partner draws per agent whose design contributions are averaged
  (unbiased for the full interaction).
* ``mean_field``: partners are replaced by a histogram estimate of the agent
  density and a midpoint quadrature over the occupied cells.

Drift systems are scaled so the residual is ``(X^{n+l} - X^n) - l*dt * Theta
rho``; diffusion systems so it is ``(X^{n+l}-X^n)^2 - 2*l*dt * Lambda zeta``
componentwise.  Snapshots enter at indices 0, l, 2l, ..., (m_used-1)*l, so a
larger stride looks at the same time span through fewer, wider windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisFamily, eval_basis_many
from .dynamics import KernelSpec, ParticleState, TrajectoryDataset, _noise_amplitude

try:
    from numba import njit as _njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

__all__ = [
    "DesignSystem",
    "DensityGrid",
    "assemble_known_S",
    "assemble_batch",
    "assemble_batch_pair",
    "assemble_mean_field",
    "estimate_density",
    "moment_identity_residuals",
]

# Element budget for the (samples,) temporaries of the chunked accumulation loops.
_CHUNK_BUDGET = 4_000_000


def _hat_interp(basis: BasisFamily, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left-node index and local coordinate of each (clamped) evaluation point.

    Hat functions have at most two nonzero values, (1 - t) at ``idx`` and
    ``t`` at ``idx + 1``, which lets design sums accumulate via bincount
    scatter-adds instead of dense basis matrices.
    """
    nodes = basis.nodes
    x = np.clip(r, nodes[0], nodes[-1])
    if basis.mesh_kind == "uniform":
        h = (nodes[-1] - nodes[0]) / (nodes.size - 1)
        idx = ((x - nodes[0]) / h).astype(np.int64)
        np.clip(idx, 0, nodes.size - 2, out=idx)
    else:
        idx = np.searchsorted(nodes, x, side="right") - 1
        np.clip(idx, 0, nodes.size - 2, out=idx)
    t = (x - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    return idx, t


def _scatter_hat_sums(basis: BasisFamily, idx: np.ndarray, t: np.ndarray,
                      row_ids: np.ndarray, weights: np.ndarray,
                      n_rows: int) -> np.ndarray:
    """Accumulate sum_s phi_k(r_s) * weights_s into rows: (n_rows, n_basis)."""
    nb = basis.size
    base = row_ids * nb + idx
    out = np.bincount(base, weights=weights * (1.0 - t), minlength=n_rows * nb)
    out += np.bincount(base + 1, weights=weights * t, minlength=n_rows * nb)
    return out.reshape(n_rows, nb)


@dataclass
class DesignSystem:
    """Stacked regression system for one discovery problem."""

    A: np.ndarray
    y: np.ndarray
    kind: str       # drift | diffusion
    regime: str     # known_S | batch | mean_field
    stride: int
    dt: float
    snapshots_used: np.ndarray

    def __post_init__(self):
        if self.A.shape[0] != self.y.shape[0]:
            raise ValueError("design matrix and target length mismatch")

    def gram(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(A'A, A'y, ||y||^2) for normal-equation solvers."""
        return self.A.T @ self.A, self.A.T @ self.y, float(self.y @ self.y)


@dataclass
class DensityGrid:
    """Histogram density on a uniform partition of [-L, L]^d."""

    centers: np.ndarray      # (n_cells, d)
    values: np.ndarray       # (n_cells,), nonnegative, integrates to 1
    cell_volume: float
    bins_per_axis: int
    half_width: float


def _window_starts(n_frames: int, m_used: int, stride: int) -> np.ndarray:
    if m_used < 1 or stride < 1:
        raise ValueError("need m_used >= 1 and stride >= 1")
    if m_used * stride > n_frames - 1:
        raise ValueError(
            f"{m_used} windows of stride {stride} exceed the {n_frames} available frames"
        )
    return stride * np.arange(m_used)


def _drift_block(x: np.ndarray, diff: np.ndarray, r: np.ndarray,
                 basis: BasisFamily) -> np.ndarray:
    """(N*d, n_basis) drift design rows phi_k(r_i) * diff_ic."""
    w = eval_basis_many(basis, r)
    n, d = diff.shape
    return (w[:, None, :] * diff[:, :, None]).reshape(n * d, basis.size)


def _diffusion_block(x: np.ndarray, diff: np.ndarray, r: np.ndarray,
                     basis: BasisFamily, mode: str, component: int) -> np.ndarray:
    n, d = x.shape
    if mode == "local_state":
        return eval_basis_many(basis, x[:, component])
    w = eval_basis_many(basis, r)
    if mode == "pairwise_radial":
        return np.repeat(w, d, axis=0)
    if mode == "pairwise_radial_displacement":
        sq = diff * diff
        return (w[:, None, :] * sq[:, :, None]).reshape(n * d, basis.size)
    raise ValueError(f"unknown diffusion mode {mode!r}")


def _targets(data: TrajectoryDataset, n: int, stride: int, kind: str,
             mode: str, component: int) -> np.ndarray:
    inc = data.snapshots[n + stride] - data.snapshots[n]
    if kind == "drift":
        return inc
    sq = inc * inc
    if mode == "local_state":
        return sq.reshape(data.n_agents, data.dim)[:, component].copy()
    return sq


def assemble_known_S(data: TrajectoryDataset, basis: BasisFamily, kind: str,
                     m_used: int, stride: int = 1, *,
                     diffusion_mode: str = "pairwise_radial",
                     component: int = 0) -> DesignSystem:
    """Design system from recorded pairings (stride fixed to 1 in this regime)."""
    if data.pairings is None:
        raise ValueError("regime requires recorded S^n pairings")
    if stride != 1:
        raise ValueError("known-pairing regime uses stride 1")
    starts = _window_starts(data.n_frames, m_used, stride)
    blocks, targets = [], []
    for n in starts:
        x = data.snapshots[n].reshape(data.n_agents, data.dim)
        xj = x[data.pairings[n]]
        diff = xj - x
        r = np.sqrt(np.sum(diff * diff, axis=1))
        if kind == "drift":
            blocks.append(data.dt * _drift_block(x, diff, r, basis))
        else:
            blocks.append(2.0 * data.dt *
                          _diffusion_block(x, diff, r, basis, diffusion_mode, component))
        targets.append(_targets(data, n, stride, kind, diffusion_mode, component))
    return DesignSystem(A=np.vstack(blocks), y=np.concatenate(targets), kind=kind,
                        regime="known_S", stride=stride, dt=data.dt,
                        snapshots_used=starts)


@_njit(cache=True, nogil=True)
def _hat_locate(nodes, uniform, inv_h, r):
    """(left node index, local coordinate) of the clamped point r."""
    n = nodes.shape[0]
    rc = min(max(r, nodes[0]), nodes[n - 1])
    if uniform:
        k = int((rc - nodes[0]) * inv_h)
    else:
        lo, hi = 0, n - 1
        while hi - lo > 1:       # nodes[lo] <= rc < nodes[hi] (right-closed at b)
            mid = (lo + hi) // 2
            if rc < nodes[mid]:
                hi = mid
            else:
                lo = mid
        k = lo
    if k > n - 2:
        k = n - 2
    elif k < 0:
        k = 0
    t = (rc - nodes[k]) / (nodes[k + 1] - nodes[k])
    return k, t


@_njit(cache=True, nogil=True)
def _batch_accumulate(x, partners, nodes_p, unif_p, invh_p, nodes_d, unif_d,
                      invh_d, want_p, want_d, disp, th, la):
    """Fused accumulation of drift/diffusion hat-product sums over pair draws.

    Single pass per sample: partner difference, block distance, hat weights on
    each requested basis, scatter into the (N, d, n_basis) accumulators.
    """
    n, b = partners.shape
    d = x.shape[1]
    dv = np.empty(d)
    for i in range(n):
        for h in range(b):
            j = partners[i, h]
            r2 = 0.0
            for c in range(d):
                dv[c] = x[j, c] - x[i, c]
                r2 += dv[c] * dv[c]
            r = np.sqrt(r2)
            if want_p:
                k, t = _hat_locate(nodes_p, unif_p, invh_p, r)
                for c in range(d):
                    th[i, c, k] += (1.0 - t) * dv[c]
                    th[i, c, k + 1] += t * dv[c]
            if want_d:
                k, t = _hat_locate(nodes_d, unif_d, invh_d, r)
                if disp:
                    for c in range(d):
                        sq = dv[c] * dv[c]
                        la[i, c, k] += (1.0 - t) * sq
                        la[i, c, k + 1] += t * sq
                else:
                    for c in range(d):
                        la[i, c, k] += 1.0 - t
                        la[i, c, k + 1] += t


def _batch_snapshot_sums(x: np.ndarray, rng: np.random.Generator, n_pairs: int,
                         drift_basis: BasisFamily | None,
                         diff_basis: BasisFamily | None,
                         mode: str) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Sum over single-partner draws of the per-draw design blocks.

    Partners are uniform over the other agents, independent across draws,
    agents and snapshots.  Returns (N, d, n_basis) sums for whichever of the
    drift/diffusion bases are requested.
    """
    n, d = x.shape
    if mode == "local_state" and diff_basis is not None:
        raise ValueError("local_state diffusion does not use batch draws")
    if _HAVE_NUMBA:
        th = np.zeros((n, d, drift_basis.size if drift_basis else 1))
        la = np.zeros((n, d, diff_basis.size if diff_basis else 1))
        chunk = max(1, _CHUNK_BUDGET // n)
        rows = np.arange(n, dtype=np.int64)[:, None]
        done = 0

        def _nodes_info(basis):
            if basis is None:
                return np.zeros(2), False, 1.0
            nodes = basis.nodes
            h = (nodes[-1] - nodes[0]) / (nodes.size - 1)
            return nodes, basis.mesh_kind == "uniform", 1.0 / h

        nodes_p, unif_p, invh_p = _nodes_info(drift_basis)
        nodes_d, unif_d, invh_d = _nodes_info(diff_basis)
        while done < n_pairs:
            b = min(chunk, n_pairs - done)
            v = rng.integers(0, n - 1, size=(n, b), dtype=np.int64)
            partners = v + (v >= rows)
            _batch_accumulate(x, partners, nodes_p, unif_p, invh_p,
                              nodes_d, unif_d, invh_d,
                              drift_basis is not None, diff_basis is not None,
                              mode == "pairwise_radial_displacement", th, la)
            done += b
        return (th if drift_basis is not None else None,
                la if diff_basis is not None else None)
    chunk = max(1, _CHUNK_BUDGET // n)
    th = np.zeros((n, d, drift_basis.size)) if drift_basis is not None else None
    la = np.zeros((n, d, diff_basis.size)) if diff_basis is not None else None
    done = 0
    rows = np.arange(n, dtype=np.int64)[:, None]
    x1 = x[:, 0] if d == 1 else None
    while done < n_pairs:
        b = min(chunk, n_pairs - done)
        v = rng.integers(0, n - 1, size=(n, b), dtype=np.int64)
        partners = v + (v >= rows)
        if d == 1:
            diff = (x1[partners] - x1[:, None])[:, :, None]
            r = np.abs(diff[:, :, 0])
        else:
            diff = x[partners] - x[:, None, :]      # (N, b, d)
            r = np.sqrt(np.sum(diff * diff, axis=2))
        row_ids = np.broadcast_to(rows, (n, b)).ravel()
        rf = r.ravel()
        if drift_basis is not None:
            idx, t = _hat_interp(drift_basis, rf)
            for c in range(d):
                th[:, c, :] += _scatter_hat_sums(drift_basis, idx, t, row_ids,
                                                 diff[:, :, c].ravel(), n)
        if diff_basis is not None:
            idx, t = _hat_interp(diff_basis, rf)
            if mode == "pairwise_radial":
                s = _scatter_hat_sums(diff_basis, idx, t, row_ids,
                                      np.ones(rf.size), n)
                la += s[:, None, :]
            elif mode == "pairwise_radial_displacement":
                for c in range(d):
                    sq = diff[:, :, c] ** 2
                    la[:, c, :] += _scatter_hat_sums(diff_basis, idx, t, row_ids,
                                                     sq.ravel(), n)
            else:
                raise ValueError("local_state diffusion does not use batch draws")
        done += b
    return th, la


def assemble_batch_pair(data: TrajectoryDataset, drift_basis: BasisFamily,
                        diff_basis: BasisFamily, m_used: int, stride: int,
                        n_pairs: int, rng: np.random.Generator, *,
                        diffusion_mode: str) -> tuple[DesignSystem, DesignSystem]:
    """Drift and diffusion systems built from identical partner draws.

    Required when the diffusion depends on the pair, so both regressions see
    the same sampled interaction structure.
    """
    if n_pairs < 1:
        raise ValueError("need at least one sampled pair")
    starts = _window_starts(data.n_frames, m_used, stride)
    scale_p = stride * data.dt / n_pairs
    scale_d = 2.0 * stride * data.dt / n_pairs
    a_blocks, b_blocks, yp, yd = [], [], [], []
    for n in starts:
        x = data.snapshots[n].reshape(data.n_agents, data.dim)
        th, la = _batch_snapshot_sums(x, rng, n_pairs, drift_basis, diff_basis,
                                      diffusion_mode)
        a_blocks.append(scale_p * th.reshape(-1, drift_basis.size))
        b_blocks.append(scale_d * la.reshape(-1, diff_basis.size))
        yp.append(_targets(data, n, stride, "drift", diffusion_mode, 0))
        yd.append(_targets(data, n, stride, "diffusion", diffusion_mode, 0))
    ds_p = DesignSystem(A=np.vstack(a_blocks), y=np.concatenate(yp), kind="drift",
                        regime="batch", stride=stride, dt=data.dt, snapshots_used=starts)
    ds_d = DesignSystem(A=np.vstack(b_blocks), y=np.concatenate(yd), kind="diffusion",
                        regime="batch", stride=stride, dt=data.dt, snapshots_used=starts)
    return ds_p, ds_d


def assemble_batch(data: TrajectoryDataset, basis: BasisFamily, kind: str,
                   m_used: int, stride: int, n_pairs: int,
                   rng: np.random.Generator, *,
                   diffusion_mode: str = "pairwise_radial",
                   component: int = 0) -> DesignSystem:
    """Design system with latent pairings approximated by random batching."""
    if kind == "diffusion" and diffusion_mode == "local_state":
        # Pure state dependence: the batch draws drop out entirely.
        starts = _window_starts(data.n_frames, m_used, stride)
        blocks, targets = [], []
        for n in starts:
            x = data.snapshots[n].reshape(data.n_agents, data.dim)
            blocks.append(2.0 * stride * data.dt *
                          eval_basis_many(basis, x[:, component]))
            targets.append(_targets(data, n, stride, kind, diffusion_mode, component))
        return DesignSystem(A=np.vstack(blocks), y=np.concatenate(targets),
                            kind=kind, regime="batch", stride=stride, dt=data.dt,
                            snapshots_used=starts)
    if n_pairs < 1:
        raise ValueError("need at least one sampled pair")
    starts = _window_starts(data.n_frames, m_used, stride)
    scale = (1.0 if kind == "drift" else 2.0) * stride * data.dt / n_pairs
    blocks, targets = [], []
    for n in starts:
        x = data.snapshots[n].reshape(data.n_agents, data.dim)
        th, la = _batch_snapshot_sums(
            x, rng, n_pairs,
            basis if kind == "drift" else None,
            basis if kind == "diffusion" else None,
            diffusion_mode,
        )
        block = th if kind == "drift" else la
        blocks.append(scale * block.reshape(-1, basis.size))
        targets.append(_targets(data, n, stride, kind, diffusion_mode, component))
    return DesignSystem(A=np.vstack(blocks), y=np.concatenate(targets), kind=kind,
                        regime="batch", stride=stride, dt=data.dt, snapshots_used=starts)


def estimate_density(state: ParticleState, half_width: float,
                     bins_per_axis: int) -> DensityGrid:
    """Normalized histogram of the agent positions on [-L, L]^d.

    Agents on a cell boundary go to the lower-index cell; agents outside the
    box are clipped into the boundary cells, so the density always integrates
    to one.
    """
    if bins_per_axis < 1:
        raise ValueError("need at least one bin per axis")
    x = state.view()
    n, d = x.shape
    h = 2.0 * half_width / bins_per_axis
    idx = np.ceil((x + half_width) / h).astype(np.int64) - 1
    np.clip(idx, 0, bins_per_axis - 1, out=idx)
    flat = np.ravel_multi_index(tuple(idx[:, c] for c in range(d)),
                                dims=(bins_per_axis,) * d)
    counts = np.bincount(flat, minlength=bins_per_axis ** d).astype(float)
    vol = h ** d
    axis_centers = -half_width + h * (np.arange(bins_per_axis) + 0.5)
    mesh = np.meshgrid(*([axis_centers] * d), indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    return DensityGrid(centers=centers, values=counts / (n * vol), cell_volume=vol,
                       bins_per_axis=bins_per_axis, half_width=half_width)


def _mean_field_snapshot(x: np.ndarray, grid: DensityGrid, basis: BasisFamily,
                         kind: str, mode: str) -> np.ndarray:
    """Quadrature design block over the occupied density cells."""
    occupied = grid.values > 0
    z = grid.centers[occupied]
    mass = grid.values[occupied] * grid.cell_volume
    n, d = x.shape
    n_cells = z.shape[0]
    out = np.zeros((n, d, basis.size))
    chunk = max(1, _CHUNK_BUDGET // max(n_cells, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        nb_rows = hi - lo
        diffs = z[None, :, :] - x[lo:hi, None, :]          # (B, L, d)
        r = np.sqrt(np.sum(diffs * diffs, axis=2))
        idx, t = _hat_interp(basis, r.ravel())
        row_ids = np.broadcast_to(np.arange(nb_rows)[:, None], (nb_rows, n_cells)).ravel()
        wmass = np.broadcast_to(mass, (nb_rows, n_cells))
        if kind == "drift":
            for c in range(d):
                out[lo:hi, c, :] = _scatter_hat_sums(
                    basis, idx, t, row_ids, (wmass * diffs[:, :, c]).ravel(), nb_rows)
        elif mode == "pairwise_radial":
            s = _scatter_hat_sums(basis, idx, t, row_ids, wmass.ravel(), nb_rows)
            out[lo:hi] = s[:, None, :]
        elif mode == "pairwise_radial_displacement":
            for c in range(d):
                out[lo:hi, c, :] = _scatter_hat_sums(
                    basis, idx, t, row_ids,
                    (wmass * diffs[:, :, c] ** 2).ravel(), nb_rows)
        else:
            raise ValueError(f"unknown diffusion mode {mode!r}")
    return out.reshape(n * d, basis.size)


def assemble_mean_field(data: TrajectoryDataset, basis: BasisFamily, kind: str,
                        m_used: int, stride: int, half_width: float,
                        bins_per_axis: int, *,
                        diffusion_mode: str = "pairwise_radial",
                        component: int = 0) -> DesignSystem:
    """Design system with pairings replaced by histogram-density quadrature."""
    starts = _window_starts(data.n_frames, m_used, stride)
    scale = (1.0 if kind == "drift" else 2.0) * stride * data.dt
    blocks, targets = [], []
    for n in starts:
        x = data.snapshots[n].reshape(data.n_agents, data.dim)
        if kind == "diffusion" and diffusion_mode == "local_state":
            block = eval_basis_many(basis, x[:, component])
        else:
            grid = estimate_density(data.state(int(n)), half_width, bins_per_axis)
            block = _mean_field_snapshot(x, grid, basis, kind, diffusion_mode)
        blocks.append(scale * block)
        targets.append(_targets(data, n, stride, kind, diffusion_mode, component))
    return DesignSystem(A=np.vstack(blocks), y=np.concatenate(targets), kind=kind,
                        regime="mean_field", stride=stride, dt=data.dt,
                        snapshots_used=starts)


def moment_identity_residuals(data: TrajectoryDataset, kernels: KernelSpec,
                              m_used: int | None = None) -> tuple[float, float]:
    """Mean-square residuals of the increment identities under the true kernels.

    Drift: ``(X^{n+1}-X^n) - dt * P(r) (x_j - x_i)``; its mean square equals
    the per-step noise variance, so it shrinks linearly in dt.  Diffusion:
    ``(X^{n+1}-X^n)^2 - dt * D_i^2`` componentwise, whose mean square shrinks
    quadratically.
    """
    if data.pairings is None:
        raise ValueError("identity check requires recorded S^n pairings")
    m = data.n_frames - 1 if m_used is None else m_used
    drift_acc, diff_acc, count = 0.0, 0.0, 0
    for n in range(m):
        x = data.snapshots[n].reshape(data.n_agents, data.dim)
        xj = x[data.pairings[n]]
        diff = xj - x
        r = np.sqrt(np.sum(diff * diff, axis=1))
        p = np.asarray(kernels.drift(r), dtype=float)
        amp = _noise_amplitude(kernels, x, diff, r)
        inc = (data.snapshots[n + 1] - data.snapshots[n]).reshape(x.shape)
        dres = inc - data.dt * p[:, None] * diff
        sres = inc * inc - data.dt * amp * amp
        drift_acc += float(np.sum(dres * dres))
        diff_acc += float(np.sum(sres * sres))
        count += inc.size
    return drift_acc / count, diff_acc / count
