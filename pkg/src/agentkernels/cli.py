"""Command-line interface: generate, discover, reproduce, bound-check.

Experiments are described by a single JSON document; command-line flags
override document fields.  Unknown keys anywhere in the document are
rejected.  Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .basis import make_basis
from .discover import DiscoveryConfig, discover
from .dynamics import NumericError, SimConfig, simulate
from .kernels import kernel_spec_from_config
from .metrics import (BoundInputs, apriori_bound, lipschitz_estimate,
                      paired_trajectory_gap, supremum_gap)
from .qp import ConstraintSet
from .reports import emit_outputs, report_to_dict, write_report
from .testbench import BENCH_TESTS, run_bench_test
from .trajio import export_csv, read_trajectory, write_trajectory

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """The experiment document or flags are malformed."""


def _require_keys(doc: dict, allowed: set[str], where: str, required: set[str] = frozenset()):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


def _load_document(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _require_keys(doc, {"simulation", "kernels", "discovery", "metrics", "output"},
                  "config")
    return doc


def _sim_config(doc: dict, seed_override=None) -> SimConfig:
    _require_keys(doc, {"n_agents", "dim", "dt", "n_frames", "seed", "scheme",
                        "batch_size", "initial", "domain_half_width"},
                  "simulation", {"n_agents", "dim", "dt", "n_frames", "seed"})
    initial = doc.get("initial", {"kind": "uniform", "low": -1.0, "high": 1.0})
    _require_keys(initial, {"kind", "low", "high", "values"}, "simulation.initial",
                  {"kind"})
    if initial["kind"] == "uniform":
        law = ("uniform", float(initial.get("low", -1.0)), float(initial.get("high", 1.0)))
    elif initial["kind"] == "samples":
        law = np.asarray(initial["values"], dtype=float)
    else:
        raise ConfigError(f"unknown initial law {initial['kind']!r}")
    try:
        return SimConfig(
            n_agents=int(doc["n_agents"]), dim=int(doc["dim"]), dt=float(doc["dt"]),
            n_frames=int(doc["n_frames"]),
            seed=int(seed_override if seed_override is not None else doc["seed"]),
            batch_size=int(doc.get("batch_size", 0)), initial_law=law,
            domain_half_width=doc.get("domain_half_width"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _basis_from(doc: dict, where: str):
    _require_keys(doc, {"interval", "size", "mesh"}, where, {"interval", "size"})
    a, b = doc["interval"]
    return make_basis(float(a), float(b), int(doc["size"]), doc.get("mesh", "uniform"))


def _constraints_from(doc: dict | None, n: int, kind: str, where: str):
    if doc is None:
        return None
    _require_keys(doc, {"kappa", "anchor", "anchors", "nonnegative"}, where)
    kappa = int(doc.get("kappa", 0))
    anchors = []
    if doc.get("anchor") is not None:
        anchors.append((0, float(doc["anchor"])))
    for item in doc.get("anchors", []):
        i, v = item
        anchors.append((int(i) % n, float(v)))
    nonneg = doc.get("nonnegative", kind == "diffusion")
    sign = tuple(range(n)) if nonneg else ()
    try:
        return ConstraintSet(n=n, anchors=tuple(anchors), sign=sign, monotonicity=kappa)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}")


def _discovery_config(doc: dict, diffusion_mode: str, seed_override=None,
                      threads: int = 1) -> DiscoveryConfig:
    _require_keys(doc, {"regime", "drift_basis", "diff_basis", "drift_constraints",
                        "diff_constraints", "m_drift", "stride", "m_diff",
                        "stride_diff", "ensemble", "n_pairs", "weight_rule",
                        "density_bins", "box_half", "seed", "recon_scheme",
                        "recon_n_pairs"},
                  "discovery", {"regime", "drift_basis", "diff_basis", "m_drift"})
    drift_basis = _basis_from(doc["drift_basis"], "discovery.drift_basis")
    diff_basis = _basis_from(doc["diff_basis"], "discovery.diff_basis")
    try:
        return DiscoveryConfig(
            regime=doc["regime"],
            drift_basis=drift_basis,
            diff_basis=diff_basis,
            diffusion_mode=diffusion_mode,
            drift_constraints=_constraints_from(doc.get("drift_constraints"),
                                                drift_basis.size, "drift",
                                                "discovery.drift_constraints"),
            diff_constraints=_constraints_from(doc.get("diff_constraints"),
                                               diff_basis.size, "diffusion",
                                               "discovery.diff_constraints"),
            m_drift=int(doc["m_drift"]), stride=int(doc.get("stride", 1)),
            m_diff=int(doc.get("m_diff", doc["m_drift"])),
            stride_diff=int(doc.get("stride_diff", doc.get("stride", 1))),
            ensemble=int(doc.get("ensemble", 1)), n_pairs=int(doc.get("n_pairs", 1)),
            weight_rule=doc.get("weight_rule", "averaging"),
            density_bins=int(doc.get("density_bins", 100)),
            box_half=float(doc.get("box_half", 1.0)),
            seed=int(seed_override if seed_override is not None else doc.get("seed", 0)),
            recon_scheme=doc.get("recon_scheme"),
            recon_n_pairs=doc.get("recon_n_pairs"),
            threads=threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def cmd_generate(args) -> int:
    doc = _load_document(args.config)
    if "simulation" not in doc or "kernels" not in doc:
        raise ConfigError("generate needs 'simulation' and 'kernels' sections")
    sim = _sim_config(doc["simulation"], args.seed)
    try:
        kernels = kernel_spec_from_config(doc["kernels"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"kernels: {exc}")
    out = Path(args.output)
    if out.exists() and not args.force:
        raise ConfigError(f"refusing to overwrite {out} (pass --force)")
    scheme = doc["simulation"].get("scheme", "binary")
    data = simulate(sim, kernels, scheme=scheme)
    write_trajectory(out, data)
    if args.csv:
        export_csv(out.with_suffix(".csv"), data)
    print(f"wrote {out}: N={data.n_agents} d={data.dim} M={data.n_frames} "
          f"dt={data.dt} scheme={scheme} pairings={data.pairings is not None}")
    return 0


def cmd_discover(args) -> int:
    doc = _load_document(args.config)
    if "discovery" not in doc or "kernels" not in doc:
        raise ConfigError("discover needs 'discovery' and 'kernels' sections")
    data = read_trajectory(args.trajectory)
    mode = doc["kernels"].get("diffusion_mode", "pairwise_radial")
    config = _discovery_config(doc["discovery"], mode, args.seed, args.threads)
    true_kernels = None
    if doc["kernels"].get("drift") is not None:
        try:
            true_kernels = kernel_spec_from_config(doc["kernels"])
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"kernels: {exc}")
    if config.regime == "known_S" and data.pairings is None:
        raise ConfigError("regime known_S requires a trajectory with recorded pairings")
    report = discover(data, config, true_kernels)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(out, report)
    print(f"wrote {out}")
    if report.validation:
        for rule, metrics in report.validation.items():
            line = " ".join(f"{k}={v:.3e}" for k, v in metrics.items())
            print(f"  {rule}: {line}")
    if args.emit_plots:
        files = emit_outputs(out.parent, report, data, true_kernels)
        print("  plots: " + ", ".join(files))
    return 0


def cmd_reproduce(args) -> int:
    if args.test not in BENCH_TESTS:
        raise ConfigError(f"unknown test id {args.test!r}; "
                          f"choose from {sorted(BENCH_TESTS)}")
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    summary = run_bench_test(args.test, args.scale, outdir, seed=args.seed or 0,
                             threads=args.threads, emit_plots=args.emit_plots)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_bound_check(args) -> int:
    """Empirical check of the a-priori trajectory error bound on a small system."""
    rng = np.random.default_rng(args.seed or 0)
    n, d, dt, steps, paths = 10, 1, 0.025, 10, args.paths
    x0 = rng.uniform(-0.5, 0.5, size=n)
    box = 1.0
    p_true = lambda r: 1.0 / (1.0 + np.asarray(r) ** 2)  # noqa: E731
    d_true = lambda r: 0.1 / (1.0 + np.asarray(r))       # noqa: E731
    all_ok = True
    for eps in (0.0, 0.01, 0.05, 0.1):
        p_hat = (lambda e: lambda r: p_true(r) + e)(eps)
        from .dynamics import KernelSpec
        ks_true = KernelSpec(drift=p_true, diffusion_mode="pairwise_radial",
                             diffusion=d_true)
        ks_hat = KernelSpec(drift=p_hat, diffusion_mode="pairwise_radial",
                            diffusion=d_true)
        gap = paired_trajectory_gap(x0, n, d, ks_true, ks_hat, dt, steps, paths,
                                    seed=1234)
        interval = (0.0, 2.0 * box)
        inputs = BoundInputs(
            lip_P=lipschitz_estimate(p_true, interval),
            lip_D=lipschitz_estimate(d_true, interval),
            lip_P_hat=lipschitz_estimate(p_hat, interval),
            lip_D_hat=lipschitz_estimate(d_true, interval),
            P_max=float(np.max(np.abs(p_true(np.linspace(*interval, 2001))))),
            P_hat_max=float(np.max(np.abs(p_hat(np.linspace(*interval, 2001))))),
            D_max=float(np.max(np.abs(d_true(np.linspace(*interval, 2001))))),
            D_hat_max=float(np.max(np.abs(d_true(np.linspace(*interval, 2001))))),
            delta_P=supremum_gap(p_true, p_hat, interval),
            delta_D=0.0, eta_S=0.0, box_half=box, n_dof=n * d,
            horizon=steps * dt, dt=dt,
        )
        bound = apriori_bound(inputs)
        ok = gap <= bound
        all_ok = all_ok and ok
        print(f"perturbation={eps:<5} empirical={gap:.3e} bound={bound:.3e} "
              f"{'OK' if ok else 'VIOLATED'}")
    if not all_ok:
        raise NumericError("a-priori bound violated")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agentkernels",
        description="Simulate pairwise-interacting agent systems and recover "
                    "their drift and diffusion kernels from trajectories.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="simulate a trajectory dataset file")
    gen.add_argument("--config", required=True, help="experiment JSON document")
    gen.add_argument("--output", required=True, help="trajectory file to write")
    gen.add_argument("--seed", type=int, default=None, help="override document seed")
    gen.add_argument("--force", action="store_true", help="overwrite existing output")
    gen.add_argument("--csv", action="store_true", help="also write the CSV export")
    gen.set_defaults(fn=cmd_generate)

    dis = sub.add_parser("discover", help="recover kernels from a trajectory file")
    dis.add_argument("trajectory", help="trajectory container file")
    dis.add_argument("--config", required=True)
    dis.add_argument("--output", required=True, help="report JSON to write")
    dis.add_argument("--seed", type=int, default=None)
    dis.add_argument("--threads", type=int, default=1)
    dis.add_argument("--emit-plots", action="store_true",
                     help="write kernel/density/error CSVs and figures")
    dis.set_defaults(fn=cmd_discover)

    rep = sub.add_parser("reproduce", help="run a built-in benchmark test end to end")
    rep.add_argument("test", help="one of: " + ", ".join(sorted(BENCH_TESTS)))
    rep.add_argument("--scale", choices=("desk", "paper"), default="desk")
    rep.add_argument("--output", required=True, help="bundle directory")
    rep.add_argument("--seed", type=int, default=None)
    rep.add_argument("--threads", type=int, default=1)
    rep.add_argument("--emit-plots", action="store_true")
    rep.set_defaults(fn=cmd_reproduce)

    bc = sub.add_parser("bound-check",
                        help="empirically check the a-priori error bound")
    bc.add_argument("--paths", type=int, default=200)
    bc.add_argument("--seed", type=int, default=None)
    bc.set_defaults(fn=cmd_bound_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
