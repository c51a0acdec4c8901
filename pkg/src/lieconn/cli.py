"""Command-line entry point: ``lieconn <command> --example NAME | --config PATH``.

Exit codes: 0 success, 1 mathematical failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .algebroid import check_structure_identities, sample_points
from .catalog import example_names, get_example
from .config import ConfigError, ProblemConfig
from .connection import compatibility_residual, curvature, torsion
from .geodesics import integrate_geodesic
from .holonomy import (
    EmptyFamilyError, MetrizeOptions, coherence_residuals, generate_loops, holonomy_matrices,
    metrizability_test,
)
from .scalar_field import DomainError
from .transport import (
    NotLiftableError, NotVerticalError, circle_curve, lift_base_path, make_vertical_path,
    rectangle_curve, segment_curve, transport_matrices,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _clean(obj):
    """Make numpy scalars/arrays and non-finite floats JSON-safe."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write to a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(args, report: dict, name: str, extra_files: dict | None = None) -> None:
    text = dumps(report)
    sys.stdout.write(text)
    if args.out:
        write_atomic(os.path.join(args.out, f"{name}.json"), text)
        for fname, content in (extra_files or {}).items():
            write_atomic(os.path.join(args.out, fname), content)


# ---------------------------------------------------------------------------
# problem loading


def _load(args) -> ProblemConfig:
    if bool(args.config) == bool(args.example):
        raise UsageError("give exactly one of --config PATH or --example NAME")
    if args.example:
        try:
            cfg = get_example(args.example)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    else:
        try:
            cfg = ProblemConfig.load(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _connection(cfg, A, *, linear=False):
    D = cfg.connection_obj(A)
    if D is None:
        raise UsageError("the problem has no connection (give 'connection' or a metric)")
    if linear and (not D.linear or D.k != A.m):
        raise UsageError("this command needs a linear connection (bundle_rank == fiber_rank)")
    return D


def _vector(values, length, flag):
    if values is None:
        return None
    if len(values) != length:
        raise UsageError(f"{flag} needs {length} numbers, got {len(values)}")
    return np.array(values, dtype=float)


# ---------------------------------------------------------------------------
# commands


def run_validate(args) -> int:
    cfg = _load(args)
    A = cfg.algebroid()
    tol = args.tol if args.tol is not None else cfg.tol("validate")
    pts = sample_points(A.domain, per_axis=5, n_random=100, seed=cfg.seed)
    rep = check_structure_identities(A, pts, tol)
    _emit(args, {"command": "validate", "example": cfg.name, **rep.to_dict()}, "validate")
    return EXIT_OK if rep.passed else EXIT_FAIL


def run_lc(args) -> int:
    cfg = _load(args)
    A = cfg.algebroid()
    g = cfg.metric_obj()
    if g is None:
        raise UsageError("the problem has no metric")
    if g.k != A.m:
        raise UsageError("Levi-Civita needs a metric on the algebroid fibers (bundle_rank == fiber_rank)")
    from .levi_civita import LeviCivitaConnection

    D = LeviCivitaConnection(A, g)
    x0 = cfg.base_point(args.x0)
    pts = sample_points(A.domain, per_axis=3, n_random=args.points, seed=cfg.seed)
    comp = max(float(np.max(np.abs(compatibility_residual(D, g, A, p)))) for p in pts)
    tors = max(float(np.max(np.abs(torsion(D, A, p)), initial=0.0)) for p in pts)
    tol = args.tol if args.tol is not None else 1e-9
    report = {
        "command": "lc", "example": cfg.name, "x0": x0,
        "gamma": D.coefficients(x0), "curvature": curvature(D, A, x0),
        "max_compatibility_residual": comp, "max_torsion": tors,
        "n_points": len(pts), "tol": tol, "passed": comp <= tol and tors <= tol,
    }
    _emit(args, report, "lc")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def run_geodesic(args) -> int:
    cfg = _load(args)
    A = cfg.algebroid()
    D = _connection(cfg, A, linear=True)
    x0 = np.array(cfg.base_point(args.x0))
    y0 = _vector(args.y0, A.m, "--y0")
    if y0 is None:
        y0 = np.eye(A.m)[0]
    steps = args.steps or 1000
    try:
        res = integrate_geodesic(A, D, x0, y0, args.T, steps, g=cfg.metric_obj())
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = {"command": "geodesic", "example": cfg.name, "x0": x0, "y0": y0, **res.to_dict()}
    _emit(args, report, "geodesic", {"geodesic.csv": res.path.to_csv()})
    return EXIT_OK


def _check_axes(axes, n):
    if any(not 0 <= a < n for a in axes) or axes[0] == axes[1]:
        raise UsageError(f"--axes must name two distinct base axes in 0..{n - 1}")


def _transport_path(args, cfg, A):
    n, m = A.n, A.m
    x0 = np.array(cfg.base_point(args.x0))
    steps = args.steps or 1000
    T = args.T
    if args.curve == "segment":
        x1 = _vector(args.x1, n, "--x1")
        if x1 is None:
            raise UsageError("segment needs --x1")
        base, vel = segment_curve(x0, x1, T)
    elif args.curve == "circle":
        _check_axes(args.axes, n)
        center = x0.copy()
        center[args.axes[0]] -= args.radius
        base, vel = circle_curve(center, args.radius, T, tuple(args.axes))
    elif args.curve == "rectangle":
        _check_axes(args.axes, n)
        if steps % 4:
            raise UsageError("rectangle needs --steps divisible by 4")
        base, vel = rectangle_curve(x0, args.axes[0], args.axes[1], args.side, args.side, T)
    else:
        v = _vector(args.direction, m, "--direction")
        if v is None:
            raise UsageError("vertical needs --direction (a fiber vector)")
        return make_vertical_path(A, x0, lambda t: np.sin(np.pi * t / T) * v, steps, T)
    return lift_base_path(A, base, steps, T, velocity=vel, tol=cfg.tol("admissibility"))


def run_transport(args) -> int:
    cfg = _load(args)
    A = cfg.algebroid()
    D = _connection(cfg, A)
    try:
        path = _transport_path(args, cfg, A)
    except (NotLiftableError, NotVerticalError) as exc:
        _emit(args, {"command": "transport", "example": cfg.name, "error": str(exc)}, "transport")
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL
    Phi = transport_matrices(D, A, path)
    z0 = _vector(args.z0, D.k, "--z0")
    if z0 is None:
        z0 = np.eye(D.k)[0]
    z = Phi @ z0
    report = {
        "command": "transport", "example": cfg.name, "curve": args.curve,
        "steps": path.n_steps, "T": float(path.t[-1]),
        "admissibility_residual": path.admissibility_residual, "vertical": path.vertical,
        "start": path.x[0], "end": path.x[-1], "z0": z0, "z_end": z[-1],
        "transport_map": Phi[-1], "det": float(np.linalg.det(Phi[-1])),
    }
    _emit(args, report, "transport", {"transport.csv": path.to_csv(z)})
    return EXIT_OK


def _options(args, cfg) -> MetrizeOptions:
    return MetrizeOptions(
        scales=tuple(args.scales), steps=args.steps or 400, eps=cfg.tol("spd_eps"),
        seed=cfg.seed, det_tol=cfg.tol("determinant"),
        compatibility_tol=args.tol if args.tol is not None else cfg.tol("compatibility"),
        consistency_tol=cfg.tol("consistency"), isometry_tol=cfg.tol("isometry"),
    )


def run_holonomy(args) -> int:
    cfg = _load(args)
    A = cfg.algebroid()
    D = _connection(cfg, A)
    opt = _options(args, cfg)
    try:
        fam = generate_loops(A, cfg.base_point(args.x0), opt.scales, steps=opt.steps)
    except EmptyFamilyError as exc:
        _emit(args, {"command": "holonomy", "example": cfg.name, "error": str(exc)}, "holonomy")
        return EXIT_FAIL
    sample = holonomy_matrices(D, A, fam)
    report = {"command": "holonomy", "example": cfg.name, **sample.to_dict(),
              "coherence": coherence_residuals(sample)}
    _emit(args, report, "holonomy")
    return EXIT_OK


def _metric_csv(rec, n, k) -> str:
    head = [f"x{i + 1}" for i in range(n)] + [f"g{a + 1}{b + 1}" for a in range(k) for b in range(a, k)]
    lines = [",".join(head)]
    for p, g in zip(rec.probes, rec.metrics):
        vals = list(p) + [g[a, b] for a in range(k) for b in range(a, k)]
        lines.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def run_metrize(args) -> int:
    cfg = _load(args)
    A = cfg.algebroid()
    D = _connection(cfg, A)
    verdict = metrizability_test(D, A, cfg.base_point(args.x0), _options(args, cfg))
    report = {"command": "metrize", "example": cfg.name, "x0": cfg.base_point(args.x0),
              "seed": cfg.seed, **verdict.to_dict()}
    extra = {}
    if verdict.kind == "Metrizable":
        extra["metric.csv"] = _metric_csv(verdict.reconstruction, A.n, D.k)
    _emit(args, report, "metrize", extra)
    if args.expect_metrizable and verdict.kind != "Metrizable":
        return EXIT_FAIL
    return EXIT_OK


def run_examples(args) -> int:
    if args.action == "show":
        if not args.name:
            raise UsageError("examples show needs a NAME")
        try:
            sys.stdout.write(get_example(args.name).to_json() + "\n")
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        return EXIT_OK
    listing = []
    for name in example_names():
        cfg = get_example(name)
        A = cfg.algebroid()
        rep = check_structure_identities(A, sample_points(A.domain, 5, 100, cfg.seed), 1e-10)
        if rep.passed:
            listing.append({"name": name, "description": cfg.description,
                            "base_dim": cfg.base_dim, "fiber_rank": cfg.fiber_rank,
                            "has_metric": cfg.metric is not None,
                            "connection": cfg.connection if isinstance(cfg.connection, str)
                            else ("explicit" if cfg.connection is not None else None)})
    sys.stdout.write(dumps({"command": "examples", "examples": listing}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("problem")
    src.add_argument("--config", metavar="PATH", help="JSON problem file")
    src.add_argument("--example", metavar="NAME", help=f"builtin example ({', '.join(example_names())})")
    common.add_argument("--out", metavar="DIR", help="directory for JSON/CSV artifacts")
    common.add_argument("--seed", type=int, help="override the problem seed")
    common.add_argument("--tol", type=float, help="override the pass/fail tolerance")
    common.add_argument("--steps", type=int, help="integration steps")
    common.add_argument("--x0", type=float, nargs="*", help="base point (default: problem x0)")

    p = argparse.ArgumentParser(prog="lieconn", description="Connections on Lie algebroids.")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check the structure identities")
    lc = sub.add_parser("lc", parents=[common], help="Levi-Civita connection of the metric")
    lc.add_argument("--points", type=int, default=100, help="random sample size")

    geo = sub.add_parser("geodesic", parents=[common], help="integrate a geodesic")
    geo.add_argument("--y0", type=float, nargs="+", help="initial fiber vector")
    geo.add_argument("-T", type=float, default=1.0, help="duration")

    tr = sub.add_parser("transport", parents=[common], help="parallel transport along a curve")
    tr.add_argument("--curve", choices=["segment", "circle", "rectangle", "vertical"], default="segment")
    tr.add_argument("--x1", type=float, nargs="+", help="segment end point")
    tr.add_argument("--radius", type=float, default=0.5)
    tr.add_argument("--side", type=float, default=0.1)
    tr.add_argument("--axes", type=int, nargs=2, default=[0, 1])
    tr.add_argument("--direction", type=float, nargs="+", help="fiber direction of a vertical loop")
    tr.add_argument("--z0", type=float, nargs="+", help="initial fiber vector of the section")
    tr.add_argument("-T", type=float, default=1.0, help="duration")

    for name, helptext in (("holonomy", "sample the holonomy group"),
                           ("metrize", "decide metrizability")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--scales", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.4])
        if name == "metrize":
            sp.add_argument("--expect-metrizable", action="store_true",
                            help="exit 1 unless the verdict is Metrizable")

    ex = sub.add_parser("examples", help="list or show builtin examples")
    ex.add_argument("action", nargs="?", choices=["list", "show"], default="list")
    ex.add_argument("name", nargs="?")
    return p


COMMANDS = {
    "validate": run_validate, "lc": run_lc, "geodesic": run_geodesic,
    "transport": run_transport, "holonomy": run_holonomy, "metrize": run_metrize,
    "examples": run_examples,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except DomainError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
