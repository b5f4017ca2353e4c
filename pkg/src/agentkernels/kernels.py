"""Named interaction and diffusion laws used by the benchmark experiments."""

from __future__ import annotations

import numpy as np

from .dynamics import KernelSpec

__all__ = [
    "bounded_confidence",
    "attraction_repulsion",
    "cucker_smale",
    "power_law_2d",
    "quartic_well_diffusion",
    "inverse_square_radial_diffusion",
    "cucker_smale_radial_diffusion",
    "anisotropic_local_diffusion",
    "piecewise_linear",
    "drift_from_config",
    "diffusion_from_config",
    "kernel_spec_from_config",
]


def bounded_confidence(tau: float = 0.5):
    """Indicator kernel chi(r < tau): compromise only below the threshold."""
    return lambda r: np.where(np.asarray(r) < tau, 1.0, 0.0)


def attraction_repulsion():
    """Short-range repulsion, long-range attraction: ((0.1+r)^2 - 0.05 (0.1+r)^-2)/5."""
    return lambda r: ((0.1 + np.asarray(r)) ** 2 - 0.05 * (0.1 + np.asarray(r)) ** -2) / 5.0


def cucker_smale(beta: float = 2.0):
    """Influence decaying with distance: (1 + r^2)^-beta."""
    return lambda r: (1.0 + np.asarray(r) ** 2) ** -beta


def power_law_2d():
    """2-D attraction-repulsion kernel (-(0.1+r)^-1.15 + r^2)/2."""
    return lambda r: (-((0.1 + np.asarray(r)) ** -1.15) + np.asarray(r) ** 2) / 2.0


def quartic_well_diffusion():
    """State-local amplitude (1 - x^2)^2 / 2, vanishing at the domain ends."""
    return lambda x: (1.0 - np.asarray(x) ** 2) ** 2 / 2.0


def inverse_square_radial_diffusion(scale: float = 0.25):
    """Radial amplitude scale / (1 + r)^2."""
    return lambda r: scale / (1.0 + np.asarray(r)) ** 2


def cucker_smale_radial_diffusion():
    """Radial amplitude (1 + r^2)^-2."""
    return lambda r: (1.0 + np.asarray(r) ** 2) ** -2


def anisotropic_local_diffusion():
    """Per-component amplitudes ((1-x1^2)/4, sqrt(1-x2^2)/5)."""
    d1 = lambda x: (1.0 - np.asarray(x) ** 2) / 4.0  # noqa: E731
    d2 = lambda x: np.sqrt(np.maximum(1.0 - np.asarray(x) ** 2, 0.0)) / 5.0  # noqa: E731
    return [d1, d2]


def piecewise_linear(nodes, values):
    """Kernel defined by nodal values, constant outside the node range."""
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    if nodes.ndim != 1 or nodes.shape != values.shape or nodes.size < 2:
        raise ValueError("piecewise kernel needs matching node/value vectors")
    if not np.all(np.diff(nodes) > 0):
        raise ValueError("piecewise kernel nodes must be strictly increasing")
    return lambda r: np.interp(np.asarray(r, dtype=float), nodes, values)


_DRIFT_BUILDERS = {
    "bounded_confidence": bounded_confidence,
    "attraction_repulsion": attraction_repulsion,
    "cucker_smale": cucker_smale,
    "power_law_2d": power_law_2d,
}

_DIFFUSION_BUILDERS = {
    "quartic_well": quartic_well_diffusion,
    "inverse_square_radial": inverse_square_radial_diffusion,
    "cucker_smale_radial": cucker_smale_radial_diffusion,
    "anisotropic_local": anisotropic_local_diffusion,
}


def _build_one(doc: dict, builders: dict, what: str):
    doc = dict(doc)
    if doc.get("kind") == "piecewise":
        return piecewise_linear(doc["nodes"], doc["values"])
    name = doc.pop("name", None)
    if name not in builders:
        raise ValueError(f"unknown {what} kernel {name!r}; known: {sorted(builders)}")
    doc.pop("kind", None)
    return builders[name](**doc)


def drift_from_config(doc: dict):
    return _build_one(doc, _DRIFT_BUILDERS, "drift")


def diffusion_from_config(doc):
    if doc is None:
        return None
    if isinstance(doc, list):
        fns = []
        for item in doc:
            fns.append(_build_one(item, _DIFFUSION_BUILDERS, "diffusion"))
        return fns
    return _build_one(doc, _DIFFUSION_BUILDERS, "diffusion")


def kernel_spec_from_config(doc: dict) -> KernelSpec:
    """Build a KernelSpec from the ``kernels`` section of an experiment config."""
    allowed = {"drift", "diffusion", "diffusion_mode"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown kernel config keys: {sorted(unknown)}")
    return KernelSpec(
        drift=drift_from_config(doc["drift"]),
        diffusion_mode=doc.get("diffusion_mode", "pairwise_radial"),
        diffusion=diffusion_from_config(doc.get("diffusion")),
    )
