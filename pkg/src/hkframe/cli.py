"""Command-line entry point ``hkframe``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import workspace as wsio
from .calibration import build_calibration, make_bump_pair
from .cubes import build_cubes, subcube_grid, verify_cube_axioms
from .errors import HKFrameError
from .frame import build_synthesis_frame
from .generate import generate, operator_from_doc, parse_kind
from .norms import SpaceParams, type_norm
from .space import geometry_report, load_space, normalize_min_distance


def _emit(obj, out=None) -> None:
    text = wsio.dumps(obj)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _space(path, normalize=False):
    doc = wsio.read_json(path)
    space = load_space(doc)
    if normalize:
        space = normalize_min_distance(space)
        doc = wsio.space_to_doc(space, doc.get("laplacian"))
    return doc, space


def cmd_generate(args) -> int:
    name, params = parse_kind(args.kind)
    kw = {}
    if args.laplacian:
        kw["laplacian"] = args.laplacian
    if args.measure:
        kw["measure"] = args.measure
    _emit(generate(name, *params, **kw), args.out)
    return 0


def cmd_space(args) -> int:
    doc, space = _space(args.file, args.normalize)
    if args.action == "validate":
        if args.laplacian or "laplacian" in doc:
            op = operator_from_doc(space, doc, args.laplacian)
            msg = f"ok: {space.n} points, lambda_max={op.lambda_max:.6g}"
        else:
            msg = f"ok: {space.n} points"
        print(msg)
        return 0
    _emit(geometry_report(space).to_dict(), args.out)
    return 0


def cmd_cubes(args) -> int:
    if args.action == "build":
        doc, space = _space(args.file, args.normalize)
        cubes = build_cubes(space, args.delta, args.seed)
        out = args.out or "cubes.json"
        wsio.save_cubes(out, cubes, doc)
        return 0
    cubes, sdoc = wsio.load_cubes(args.file)
    if args.action == "verify":
        rep = verify_cube_axioms(cubes)
        _emit(rep.to_dict(), args.out)
        return 0 if rep.ok else 2
    grid = subcube_grid(cubes, args.j0, sample_rule=args.sample_rule, seed=args.seed)
    levels = range(args.levels) if args.levels is not None else None
    wsio.save_grid(args.out or "grid.json", grid, sdoc, levels)
    return 0


def cmd_calib(args) -> int:
    doc, space = _space(args.space)
    cubes, _ = wsio.load_cubes(args.cubes)
    op = operator_from_doc(space, doc, args.laplacian)
    calib = build_calibration(op, make_bump_pair(cubes.delta, args.beta0, kind=args.kind))
    if args.laplacian:
        doc = dict(doc, laplacian=args.laplacian)
    wsio.save_calibration(args.out or "calib.bin", calib, doc)
    return 0


def cmd_frame(args) -> int:
    if args.action == "build":
        calib, _ = wsio.load_calibration(args.calib)
        grid, _ = wsio.load_grid(args.grid)
        frame = build_synthesis_frame(calib, grid, args.tol)
        wsio.save_frame(args.out or "frame.bin", frame, calib, wsio.sha256_file(args.calib))
        if args.report:
            _emit(frame.report(), args.report)
        return 0
    stored = wsio.load_frame(args.frame)
    f = np.asarray(wsio.read_json(args.f), dtype=float) if args.f else None
    if f is None:
        raise HKFrameError("--f is required")
    if isinstance(f, np.ndarray) and f.ndim == 1 and f.size != stored.mu.size:
        raise HKFrameError(f"function has {f.size} values, the frame has {stored.mu.size} points")
    res = stored.roundtrip(f)
    if not args.full:
        res.pop("reconstruction")
    _emit(res, args.out)
    return 0


def cmd_norm(args) -> int:
    calib, _ = wsio.load_calibration(args.calib)
    cubes, _ = wsio.load_cubes(args.cubes)
    _, space = _space(args.space)
    f = wsio.load_function(args.f, space)
    params = SpaceParams(s=args.s, tau=args.tau, p=args.p, q=args.q, family=args.family, variant=args.variant, k_range_policy=args.policy)
    br = type_norm(f, calib, cubes, params, args.d)
    _emit(br.to_dict(), args.out)
    return 0


def cmd_verify(args) -> int:
    out = args.out or str(Path(args.workspace) / "reports" / "verify")
    wsio.verify_workspace(args.workspace, out, args.battery_size, not args.no_refine, args.seed)
    print(f"reports written to {out}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = wsio.load_config(args.config)
    if args.laplacian:
        cfg["laplacian"] = args.laplacian
    if args.normalize:
        cfg["normalize"] = True
    ws = wsio.pipeline(args.space, cfg, args.workspace)
    print(json.dumps({"workspace": str(ws.root), "executed": ws.executed}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hkframe", description="Heat-kernel function-space toolkit on finite metric measure spaces.")
    sub = ap.add_subparsers(dest="command", required=True)
    lap = dict(choices=["unnormalized", "random_walk_symmetrized"], default=None, help="generated Laplacian")

    g = sub.add_parser("generate", help="write a generated space file")
    g.add_argument("kind", help="e.g. cycle(64), torus(8,8), gasket(3), random_geometric(50,0.3,0)")
    g.add_argument("--laplacian", **lap)
    g.add_argument("--measure", choices=["unit", "degree"])
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("space", help="validate or report on a space file")
    s.add_argument("action", choices=["validate", "report"])
    s.add_argument("file")
    s.add_argument("--laplacian", **lap)
    s.add_argument("--normalize", action="store_true", help="rescale so the minimum distance is 1")
    s.add_argument("--out")
    s.set_defaults(func=cmd_space)

    c = sub.add_parser("cubes", help="dyadic cube systems and subcube grids")
    c.add_argument("action", choices=["build", "verify", "grid"])
    c.add_argument("file", help="space file (build) or cube file (verify, grid)")
    c.add_argument("--delta", type=float, default=0.5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--normalize", action="store_true")
    c.add_argument("--j0", type=int, default=1)
    c.add_argument("--sample-rule", default="center")
    c.add_argument("--levels", type=int, default=None, help="number of grid levels stored")
    c.add_argument("--out")
    c.set_defaults(func=cmd_cubes)

    k = sub.add_parser("calib", help="Littlewood-Paley calibration")
    k.add_argument("action", choices=["build"])
    k.add_argument("space")
    k.add_argument("cubes")
    k.add_argument("--beta0", type=float, default=2.0)
    k.add_argument("--kind", choices=["telescoping", "tight"], default="telescoping")
    k.add_argument("--laplacian", **lap)
    k.add_argument("--out")
    k.set_defaults(func=cmd_calib)

    f = sub.add_parser("frame", help="synthesis frames")
    f.add_argument("action", choices=["build", "roundtrip"])
    f.add_argument("inputs", nargs="+", help="<calib> <grid> for build, <frame> for roundtrip")
    f.add_argument("--tol", type=float, default=1e-12)
    f.add_argument("--f", help="function file (roundtrip)")
    f.add_argument("--full", action="store_true", help="include the reconstructed values")
    f.add_argument("--report", help="write the frame diagnostics here (build)")
    f.add_argument("--out")
    f.set_defaults(func=cmd_frame)

    n = sub.add_parser("norm", help="Besov-type or Triebel-Lizorkin-type norm with breakdown")
    n.add_argument("space")
    n.add_argument("cubes")
    n.add_argument("calib")
    n.add_argument("--family", choices=["B", "F"], default="B")
    n.add_argument("--s", type=float, default=0.5)
    n.add_argument("--tau", type=float, default=0.0)
    n.add_argument("--p", type=float, default=2.0)
    n.add_argument("--q", type=float, default=2.0)
    n.add_argument("--variant", choices=["plain", "tilde"], default="plain")
    n.add_argument("--policy", choices=["full", "nonnegative_only"], default="full")
    n.add_argument("--d", type=float, default=None, help="dimension override")
    n.add_argument("--f", required=True)
    n.add_argument("--out")
    n.set_defaults(func=cmd_norm)

    v = sub.add_parser("verify", help="equivalence reports")
    v.add_argument("action", choices=["all"])
    v.add_argument("workspace")
    v.add_argument("--out")
    v.add_argument("--battery-size", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--no-refine", action="store_true")
    v.set_defaults(func=cmd_verify)

    p = sub.add_parser("pipeline", help="run every stage into a workspace")
    p.add_argument("space")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--workspace", default="workspace")
    p.add_argument("--laplacian", **lap)
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return ap


def _route(args) -> None:
    if args.command == "frame":
        if args.action == "build":
            if len(args.inputs) != 2:
                raise HKFrameError("frame build needs <calib> <grid>")
            args.calib, args.grid = args.inputs
        else:
            if len(args.inputs) != 1:
                raise HKFrameError("frame roundtrip needs <frame>")
            args.frame = args.inputs[0]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _route(args)
        return args.func(args)
    except HKFrameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
