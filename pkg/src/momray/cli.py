"""Command-line entry point: ``momray <command> [options]``.

Exit codes: 0 when every check passes, 1 when a tolerance or consistency
check fails, 2 on I/O or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import backend
from . import symtensor as st
from .cgo import PerturbationSet, RecoveryAborted, RecoveryConfig, iterative_recovery
from .config import ConfigError, RunConfig, validate_report
from .fields import GridSpec, TensorBundle, read_bundle, write_bundle
from .identities import IDENTITIES, verify_identity
from .inversion import MomentTable, PipelineConfig, full_inverse_pipeline
from .phantoms import PHANTOM_KINDS, generate_phantom
from .raytransform import MomentSamples, RaySet, parallel_beam, sample_moments
from .spherekernel import kernel_membership

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2


class InputError(Exception):
    """A missing or unreadable input file."""


# --------------------------------------------------------------------------
# helpers


def _write_json(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_table(path, names, rows, block_col=None):
    """Whitespace-separated columns with a ``#`` header, readable by gnuplot.

    With ``block_col`` a blank line separates runs of equal values in that
    column, the layout ``splot`` expects for gridded data.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.asarray(rows, dtype=float)
    lines = ["# " + " ".join(names)]
    prev = None
    for row in rows:
        if block_col is not None and prev is not None and row[block_col] != prev:
            lines.append("")
        prev = row[block_col] if block_col is not None else None
        lines.append(" ".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def _read_bundle(path):
    path = Path(path)
    if not (path / "manifest.json").is_file():
        raise InputError(f"{path} is not a bundle directory (no manifest.json)")
    try:
        return read_bundle(path)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read bundle {path}: {exc}") from None


def _bundle_or_phantom(args, cfg, **overrides):
    if args.input:
        return _read_bundle(args.input)
    return generate_phantom(cfg.phantom_spec(**overrides))


def probe_rays(n, count, radius, rng):
    """Lines through the inner half of the support with |xi| in [0.8, 1.2]."""
    X = rng.uniform(-0.5, 0.5, (count, n)) * radius
    XI = rng.standard_normal((count, n))
    XI *= (rng.uniform(0.8, 1.2, count) / np.linalg.norm(XI, axis=1))[:, None]
    return RaySet(X, XI)


def _comp_names(rank, n):
    return ["f" + "".join(str(i + 1) for i in idx) if rank else "f" for idx in st.canonical_indices(rank, n)]


# --------------------------------------------------------------------------
# commands


def cmd_phantom(args, cfg, out):
    spec = cfg.phantom_spec(kind=args.kind, max_rank=args.m, dim=args.dim, seed=args.seed)
    bundle = generate_phantom(spec)
    fields_dir = out / cfg.outputs["fields"]
    write_bundle(fields_dir, bundle, GridSpec.covering(bundle.dim, max(bundle.support_radius, 1e-3), cfg.grid_count))
    report = {"command": "phantom", "spec": spec.to_json(), "support_radius": float(bundle.support_radius),
              "files": [str(fields_dir.relative_to(out))]}
    validate_report(report, "phantom_report")
    _write_json(out / cfg.outputs["report"], report)
    return EXIT_OK


def cmd_transform(args, cfg, out):
    F = _read_bundle(args.input)
    n, m, R = F.dim, F.max_rank, max(F.support_radius, 1e-3)
    K = m if cfg.moments is None else cfg.moments
    S = cfg.n_offsets or 2 * cfg.grid_count + 1
    layout = None
    if args.rays:
        try:
            rays = RaySet.load(args.rays)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read ray grid {args.rays}: {exc}") from None
        if rays.dim != n:
            raise InputError(f"ray grid has dimension {rays.dim}, bundle has {n}")
    elif n == 2:
        # full circle of angles at several |xi| so that `invert` can rebuild a moment table
        rays, phis, offsets = MomentTable.grid_rays(cfg.n_angles, S, cfg.rhos, R)
        layout = {"kind": "table", "n_phi": cfg.n_angles, "n_s": S, "rhos": list(cfg.rhos), "radius": R}
    else:
        rays, phis, offsets = parallel_beam(cfg.n_angles, S, R, dim=n)
        layout = {"kind": "parallel_beam", "n_phi": cfg.n_angles, "n_s": S, "radius": R}
    samples = sample_moments(F, rays, K, cfg.quadrature)
    moments_path = out / cfg.outputs["moments"]
    moments_path.parent.mkdir(parents=True, exist_ok=True)
    samples.to_csv(moments_path)
    files = [str(moments_path.relative_to(out))]
    if layout is not None:
        vals = samples.values
        if layout["kind"] == "table":
            vals = vals.reshape(K + 1, cfg.n_angles, S, len(cfg.rhos))
            rho_i = int(np.argmin(np.abs(np.asarray(cfg.rhos) - 1.0)))
            vals = vals[..., rho_i]
        else:
            vals = vals.reshape(K + 1, cfg.n_angles, S)
        P, Sg = np.meshgrid(phis, offsets, indexing="ij")
        for k in range(K + 1):
            path = out / cfg.outputs["plots"] / f"sinogram_k{k}.dat"
            write_table(path, ["phi", "s", f"I{k}"], np.column_stack([P.ravel(), Sg.ravel(), vals[k].ravel()]), 0)
            files.append(str(path.relative_to(out)))
    report = {"command": "transform", "dim": n, "max_rank": m, "moments": K, "rays": len(rays),
              "layout": layout or {"kind": "file"},
              "max_abs": [float(np.max(np.abs(v))) for v in samples.values], "files": files}
    validate_report(report, "transform_report")
    _write_json(out / cfg.outputs["report"], report)
    return EXIT_OK


def _inversion_tolerance(cfg, m):
    if m <= 1:
        return cfg.tolerances["inversion"]
    return cfg.tolerances.get(f"inversion_rank{m}", cfg.tolerances["inversion"])


def cmd_invert(args, cfg, out):
    src = Path(args.input)
    truth = _read_bundle(args.truth) if args.truth else None
    pcfg = PipelineConfig(n_angles=cfg.n_angles, grid_count=cfg.grid_count, n_offsets=cfg.n_offsets,
                          moments=cfg.moments, stencil=cfg.stencil, quadrature=cfg.quadrature)
    if src.suffix == ".csv":
        try:
            samples = MomentSamples.from_csv(src)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read moment samples {src}: {exc}") from None
        try:
            table = MomentTable.from_samples(samples)
        except ValueError as exc:
            raise InputError(f"{src}: {exc}") from None
        pcfg.radius = float(np.max(np.abs(table.offsets)))
        pcfg.stencil = cfg.table_stencil
        est, report = full_inverse_pipeline(table, pcfg, truth=truth)
        m = truth.max_rank if truth is not None else table.K
    else:
        F = _read_bundle(src)
        est, report = full_inverse_pipeline(F, pcfg, truth=truth)
        truth = F if truth is None else truth
        m = F.max_rank
    fields_dir = out / cfg.outputs["fields"]
    plots = out / cfg.outputs["plots"]
    if isinstance(est, TensorBundle):
        write_bundle(fields_dir, est)
        for part in est.parts:
            nodes = part.grid.nodes().reshape(-1, 2)
            rows = np.column_stack([nodes, part.values.reshape(nodes.shape[0], -1)])
            write_table(plots / f"rank{part.rank}.dat", ["x1", "x2", *_comp_names(part.rank, 2)], rows, 0)
    else:
        grid2 = est["grid"]
        nodes = grid2.nodes().reshape(-1, 2)
        for j, vals in est["values"].items():
            for zi, z in enumerate(est["slices"]):
                _write_slice(fields_dir / f"rank{j}_z{zi}", vals[zi], j, 3, grid2, (2, z), truth.support_radius)
                write_table(plots / f"rank{j}_z{zi}.dat", ["x1", "x2", *_comp_names(j, 3)],
                            np.column_stack([nodes, vals[zi]]), 0)
    tol = _inversion_tolerance(cfg, m)
    if report.rank_errors and max(report.rank_errors.values()) > tol:
        report.status = "tolerance_exceeded"
    report.notes.append(f"relative L2 tolerance {tol:g}")
    data = validate_report(report.to_json(), "recovery_report")
    _write_json(out / cfg.outputs["report"], data)
    return EXIT_OK if report.status == "ok" else EXIT_FAIL


def _write_slice(path, values, rank, dim, grid2, plane, support_radius):
    """Nodal values on a coordinate plane: ``plane = (fixed_axis, value)``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    np.asarray(values, dtype="<f8").tofile(path.with_suffix(".bin"))
    meta = {"dim": dim, "rank": rank, "slice_axis": plane[0], "slice_value": plane[1],
            **grid2.to_json(), "support_radius": support_radius,
            "components": [list(idx) for idx in st.canonical_indices(rank, dim)]}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def cmd_verify(args, cfg, out):
    if args.identity not in IDENTITIES:
        raise ConfigError(f"unknown identity {args.identity!r}; choose from {', '.join(IDENTITIES)}")
    m = cfg.max_rank if args.m is None else args.m
    F = _bundle_or_phantom(args, cfg, max_rank=m, dim=args.dim, seed=args.seed)
    rng = np.random.default_rng(cfg.seed if args.seed is None else args.seed)
    rays = probe_rays(F.dim, max(cfg.probe_count, 50), F.support_radius, rng)
    params = {"m": F.max_rank, "k": args.k}
    if args.identity == "transport":
        params["p"] = args.p
    elif args.identity in ("euler", "composition"):
        params["order"] = args.order
    elif args.identity == "index_descent":
        params["axis"] = args.axis
    report = verify_identity(args.identity, F, rays, params, cfg.stencil, cfg.quadrature,
                             cfg.tolerances["identity"])
    validate_report(report, "verify_report")
    _write_json(out / cfg.outputs["report"], report)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def cmd_kernel(args, cfg, out):
    m = cfg.max_rank if args.m is None else args.m
    kind = args.kind or cfg.phantom.get("kind", "kernel-member")
    F = _bundle_or_phantom(args, cfg, kind=kind, max_rank=m, dim=args.dim, seed=args.seed)
    seed = cfg.seed if args.seed is None else args.seed
    verdict = kernel_membership(F, q=cfg.quadrature, tol=cfg.tolerances["kernel"],
                                n_rays=max(cfg.probe_count, 50), seed=seed)
    report = verdict.to_json()
    validate_report(report, "kernel_report")
    _write_json(out / cfg.outputs["report"], report)
    return EXIT_OK if verdict.agree else EXIT_FAIL


def cmd_recover(args, cfg, out):
    F = _read_bundle(args.input)
    pset = PerturbationSet(F, strict=False)
    rcfg = RecoveryConfig(n_angles=cfg.n_angles, grid_count=cfg.grid_count, n_offsets=cfg.n_offsets,
                          stencil=cfg.stencil, quadrature=cfg.quadrature,
                          structure_tol=cfg.tolerances["structure"])
    code = EXIT_OK
    try:
        rec, report = iterative_recovery(pset, rcfg)
    except RecoveryAborted as exc:
        rec, report = None, exc.report
        code = EXIT_FAIL
    report.notes.append(f"top isotropy defect {pset.isotropy_defect(pset.m):.3e}")
    if rec is not None:
        grid2 = rec["grid"]
        nodes = grid2.nodes().reshape(-1, 2)
        for r, vals in rec["values"].items():
            full = np.zeros((nodes.shape[0], vals.shape[1]))
            full[rec["inside"]] = vals
            _write_slice(out / cfg.outputs["fields"] / f"recovered_rank{r}", full, r, 3, grid2, (0, 0.0),
                         F.support_radius)
            write_table(out / cfg.outputs["plots"] / f"recovered_rank{r}.dat",
                        ["x2", "x3", *_comp_names(r, 3)], np.column_stack([nodes, full]), 0)
        errs = [report.rank_errors.get(key) for key in ("scalar", "vector")]
        if report.status == "ok" and max(e for e in errs if e is not None) > cfg.tolerances["recovery"]:
            report.status = "tolerance_exceeded"
        if report.status != "ok":
            code = EXIT_FAIL
    data = validate_report(report.to_json(), "recovery_report")
    _write_json(out / cfg.outputs["report"], data)
    return code


COMMANDS = {
    "phantom": cmd_phantom,
    "transform": cmd_transform,
    "invert": cmd_invert,
    "verify": cmd_verify,
    "kernel": cmd_kernel,
    "recover": cmd_recover,
}


# --------------------------------------------------------------------------
# argument parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default=".", help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, help="random seed, overrides the config")
    common.add_argument("--threads", type=int, help="worker threads, overrides MRT_THREADS (0 = one per CPU)")

    parser = argparse.ArgumentParser(prog="momray", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="generate a phantom bundle")
    p.add_argument("--kind", choices=PHANTOM_KINDS)
    p.add_argument("--m", type=int, help="max rank")
    p.add_argument("--dim", type=int)

    p = sub.add_parser("transform", parents=[common], help="sample moments of a bundle to CSV")
    p.add_argument("--input", required=True, help="bundle directory")
    p.add_argument("--rays", help="ray grid JSON; default is a parallel-beam grid")

    p = sub.add_parser("invert", parents=[common], help="reconstruct a bundle from its moments")
    p.add_argument("--input", required=True, help="bundle directory or moment CSV")
    p.add_argument("--truth", help="bundle directory to compare against")

    p = sub.add_parser("verify", parents=[common], help="check a differential identity")
    p.add_argument("--identity", required=True, choices=IDENTITIES)
    p.add_argument("--input", help="bundle directory; default is a phantom from the config")
    p.add_argument("--m", type=int, help="max rank of the phantom")
    p.add_argument("--dim", type=int)
    p.add_argument("--k", type=int, default=0, help="moment order")
    p.add_argument("--p", type=int, default=1, help="transport power")
    p.add_argument("--order", type=int, default=1, help="operator order for euler/composition")
    p.add_argument("--axis", type=int, default=0, help="contraction axis for index_descent")

    p = sub.add_parser("kernel", parents=[common], help="sphere-bundle kernel membership")
    p.add_argument("--input", help="bundle directory; default is a phantom from the config")
    p.add_argument("--kind", choices=PHANTOM_KINDS)
    p.add_argument("--m", type=int)
    p.add_argument("--dim", type=int)

    p = sub.add_parser("recover", parents=[common], help="iterative recovery of a perturbation set")
    p.add_argument("--input", required=True, help="perturbation set bundle directory")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads is not None:
            if args.threads < 0:
                raise ConfigError("--threads must be non-negative")
            backend.set_threads(args.threads)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except (ConfigError, InputError) as exc:
        print(f"momray {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"momray {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # inconsistent parameters, e.g. a moment order above the rank
        print(f"momray {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        backend.set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
