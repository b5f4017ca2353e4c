"""Piecewise-linear hat-function bases and the kernel estimates built on them.

A basis is a strictly increasing node vector on an interval [a, b]; the k-th
hat function is 1 at node k, 0 at all other nodes, linear in between, with
half-hats at the endpoints.  Evaluation outside [a, b] clamps to the nearest
endpoint value (far pairs carry little data, and clamping avoids spurious
zero diffusion there).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisFamily",
    "KernelEstimate",
    "make_basis",
    "eval_basis",
    "eval_basis_many",
    "eval_drift",
    "eval_diff",
    "eval_diff_squared",
    "estimate_to_json",
    "estimate_from_json",
]


@dataclass(frozen=True)
class BasisFamily:
    """Node vector of a compactly supported piecewise-linear basis on [a, b]."""

    nodes: np.ndarray
    mesh_kind: str = "uniform"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("basis needs at least 2 nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("basis nodes must be finite")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("basis nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def size(self) -> int:
        return int(self.nodes.size)


def make_basis(a: float, b: float, n_basis: int, mesh_kind: str = "uniform") -> BasisFamily:
    """Build a hat basis with ``n_basis`` functions on [a, b].

    ``uniform`` places equispaced nodes; ``chebyshev`` uses Chebyshev-Lobatto
    points mapped to [a, b] and sorted ascending, which clusters resolution
    near the interval ends.
    """
    if not a < b:
        raise ValueError(f"need a < b, got ({a}, {b})")
    if n_basis < 2:
        raise ValueError("need at least 2 basis functions")
    if mesh_kind == "uniform":
        nodes = np.linspace(a, b, n_basis)
    elif mesh_kind == "chebyshev":
        j = np.arange(n_basis)
        nodes = a + (b - a) * np.sin(0.5 * np.pi * j / (n_basis - 1)) ** 2
        nodes[0], nodes[-1] = a, b
    else:
        raise ValueError(f"unknown mesh_kind {mesh_kind!r}")
    return BasisFamily(nodes=nodes, mesh_kind=mesh_kind)


def eval_basis_many(basis: BasisFamily, r) -> np.ndarray:
    """Evaluate all hat functions at the points ``r``.

    Returns an array of shape ``(len(r), n_basis)``.  At most two entries per
    row are nonzero (one when ``r`` hits a node), rows sum to 1, and points
    outside [a, b] are clamped to the endpoint value.
    """
    nodes = basis.nodes
    n = nodes.size
    r = np.atleast_1d(np.asarray(r, dtype=float))
    x = np.clip(r, nodes[0], nodes[-1])
    idx = np.searchsorted(nodes, x, side="right") - 1
    idx = np.clip(idx, 0, n - 2)
    t = (x - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    out = np.zeros((x.size, n))
    rows = np.arange(x.size)
    out[rows, idx] = 1.0 - t
    out[rows, idx + 1] += t
    return out


def eval_basis(basis: BasisFamily, r: float) -> np.ndarray:
    """Hat-function weight vector at a single point."""
    return eval_basis_many(basis, [r])[0]


@dataclass
class KernelEstimate:
    """Recovered kernels: drift coefficients rho, diffusion coefficients zeta.

    The drift kernel is ``P_hat(r) = sum_k rho[k] * phi_k(r)``.  The squared
    diffusion uses the factor-two convention ``D_hat^2 = 2 * sum_k zeta[c, k]
    * psi_k(.)``; ``zeta`` has one row per diffusion component (a single row
    for the radial modes, one row per state dimension for ``local_state``).
    """

    drift_basis: BasisFamily
    rho: np.ndarray
    diff_basis: BasisFamily
    zeta: np.ndarray
    diffusion_mode: str = "pairwise_radial"

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.zeta = np.atleast_2d(np.asarray(self.zeta, dtype=float))
        if self.rho.shape != (self.drift_basis.size,):
            raise ValueError("rho length must match the drift basis")
        if self.zeta.shape[1] != self.diff_basis.size:
            raise ValueError("zeta row length must match the diffusion basis")

    @property
    def n_diff_components(self) -> int:
        return self.zeta.shape[0]


def eval_drift(estimate: KernelEstimate, r) -> np.ndarray:
    """Evaluate the recovered drift kernel P_hat at ``r`` (clamped)."""
    nodes = estimate.drift_basis.nodes
    return np.interp(np.asarray(r, dtype=float), nodes, estimate.rho)


def eval_diff_squared(estimate: KernelEstimate, v, component: int = 0) -> np.ndarray:
    """Evaluate D_hat^2 = 2 * sum_k zeta_k psi_k at ``v`` (may undershoot 0)."""
    nodes = estimate.diff_basis.nodes
    return 2.0 * np.interp(np.asarray(v, dtype=float), nodes, estimate.zeta[component])


def eval_diff(estimate: KernelEstimate, v, component: int = 0) -> np.ndarray:
    """Evaluate the recovered diffusion amplitude sqrt(max(D_hat^2, 0))."""
    d2 = eval_diff_squared(estimate, v, component)
    return np.sqrt(np.maximum(d2, 0.0))


def estimate_to_json(estimate: KernelEstimate) -> str:
    """Serialize a KernelEstimate to its JSON document.

    ``zeta`` is a flat list for single-component diffusion and a list of
    per-component lists otherwise; ``diff_nodes``/``diff_mesh_kind`` carry the
    diffusion mesh when it differs from the drift one.
    """
    zeta = estimate.zeta
    doc = {
        "mesh_kind": estimate.drift_basis.mesh_kind,
        "nodes": estimate.drift_basis.nodes.tolist(),
        "rho": estimate.rho.tolist(),
        "diff_mesh_kind": estimate.diff_basis.mesh_kind,
        "diff_nodes": estimate.diff_basis.nodes.tolist(),
        "zeta": zeta[0].tolist() if zeta.shape[0] == 1 else zeta.tolist(),
        "diffusion_mode": estimate.diffusion_mode,
        "factor_two_convention": True,
    }
    return json.dumps(doc, indent=2)


def estimate_from_json(text: str) -> KernelEstimate:
    doc = json.loads(text)
    if not doc.get("factor_two_convention", False):
        raise ValueError("unsupported serialization: factor_two_convention must be true")
    drift_basis = BasisFamily(np.asarray(doc["nodes"], float), doc["mesh_kind"])
    diff_basis = BasisFamily(
        np.asarray(doc["diff_nodes"], float), doc.get("diff_mesh_kind", doc["mesh_kind"])
    )
    return KernelEstimate(
        drift_basis=drift_basis,
        rho=np.asarray(doc["rho"], float),
        diff_basis=diff_basis,
        zeta=np.asarray(doc["zeta"], float),
        diffusion_mode=doc["diffusion_mode"],
    )
