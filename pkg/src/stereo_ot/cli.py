"""Command-line interface: ``stereo-ot <command> [options]``.

Every option can also be given in a JSON configuration file passed with
``--config`` (or named by the ``STEREO_OT_CONFIG`` environment variable).
Keys are the option names with dashes or underscores; a sub-object keyed by
the command name overrides top-level keys for that command.  Options given
on the command line override the file.

Exit codes: 0 success, 2 parse or validation error, 3 infeasible or
degenerate problem, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from .errors import (
    CalibrationError,
    GeometryError,
    ParseError,
    RejectionBudgetExceeded,
    ShapeMismatch,
    StereoOTError,
    TransportError,
    ValidationError,
)
from .evaluation import evaluate, reconstruct
from .geometry import DistanceSpec, cost_values
from .hierarchy import HierarchyMode, hierarchical_match
from .transport import MatchSource, Matching, TransportPlan, binarize, naive_match, solve_ot, solve_pot

log = logging.getLogger("stereo_ot")

CONFIG_ENV = "STEREO_OT_CONFIG"
EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4

# Hard defaults, applied after the config file.
_DEFAULTS = {
    "distance": "ray",
    "matcher": "ot",
    "mode": "hot",
    "workers": 1,
    "scene_index": 0,
    "sigma": 0.0,
}


# -- argument handling -----------------------------------------------------------


def _geometry_args(p):
    p.add_argument("--left", help="left points CSV")
    p.add_argument("--right", help="right points CSV")
    p.add_argument("--calib", help="calibration JSON")


def _distance_args(p):
    p.add_argument("--distance", choices=["epi", "ray", "reg"], help="pairwise cost (default: ray)")
    p.add_argument("--beta", type=float, help="hinge weight for --distance reg")
    p.add_argument("--gamma1", type=float, help="lower depth bound for --distance reg")
    p.add_argument("--gamma2", type=float, help="upper depth bound for --distance reg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stereo-ot", description="Sparse stereo matching by optimal transport.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help=f"JSON option file (default: ${CONFIG_ENV})")
        return p

    p = command("cost", "write the pairwise cost matrix")
    _geometry_args(p)
    _distance_args(p)
    p.add_argument("--out", help="output cost CSV")

    p = command("match", "match points by greedy, OT or partial OT")
    _geometry_args(p)
    _distance_args(p)
    p.add_argument("--matcher", choices=["naive", "ot", "pot"])
    p.add_argument("--mass", type=float, help="transported mass for --matcher pot")
    p.add_argument("--out-plan", help="output plan CSV")
    p.add_argument("--out-matching", help="output matching CSV")
    p.add_argument("--plot", help="optional SVG of the matches")

    p = command("match-objects", "two-level matching of labelled points")
    _geometry_args(p)
    _distance_args(p)
    p.add_argument("--mode", choices=["hot", "hot-pot"])
    p.add_argument("--out-dir", help="directory for the four output files")

    p = command("triangulate", "reconstruct 3D points from matched pairs")
    _geometry_args(p)
    p.add_argument("--pairs", help="matching or plan CSV")
    p.add_argument("--out", help="output points3d CSV; skipped pairs go to <out>.skipped.csv")

    p = command("evaluate", "score a matching against ground truth")
    p.add_argument("--pred", help="predicted matching or plan CSV")
    p.add_argument("--gt", help="ground-truth CSV")
    p.add_argument("--pred-objects", help="predicted object matching CSV")
    _geometry_args(p)
    p.add_argument("--truth", help="reference points3d CSV for W2 (default: triangulated ground-truth pairs)")
    p.add_argument("--n-left", type=int, help="left point count (default: from --left)")
    p.add_argument("--n-right", type=int, help="right point count (default: from --right)")
    p.add_argument("--n-left-objects", type=int)
    p.add_argument("--n-right-objects", type=int)
    p.add_argument("--out", help="output metrics JSON")

    p = command("sweep", "run the synthetic sphere benchmark")
    p.add_argument("--sweep-config", help="sweep configuration JSON (default: built-in)")
    p.add_argument("--n-scenes", type=int)
    p.add_argument("--base-seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--plot", action="store_const", const=True, help="also write mismatch.svg")

    p = command("simulate", "export one synthetic scene as input files")
    p.add_argument("--sweep-config", help="sweep configuration JSON (default: built-in)")
    p.add_argument("--base-seed", type=int)
    p.add_argument("--scene-index", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--out", help="output directory")
    return parser


def _option_names(parser) -> dict:
    names = {}
    for action in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        for a in action._actions:  # noqa: SLF001
            if a.dest not in ("help", "config"):
                names[a.dest] = a
    return names


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno, exc.colno) from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return data


def merge_config(args, parser) -> argparse.Namespace:
    """Fill options left unset on the command line from the config file, then defaults."""
    path = args.config or os.environ.get(CONFIG_ENV)
    values = {}
    if path:
        data = load_config(path)
        section = data.pop(args.command, {})
        for name in parser._subparsers._group_actions[0].choices:  # noqa: SLF001
            data.pop(name, None)
        values = {**data, **section}
    valid = set(vars(args))
    options = _option_names(parser)
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest == "schema":
            continue
        if dest not in options:
            raise ValidationError(f"config: unknown option {key!r}")
        if dest not in valid or getattr(args, dest) is not None:
            continue
        action = options[dest]
        if action.type is not None and value is not None:
            try:
                value = action.type(value)
            except (TypeError, ValueError):
                raise ValidationError(f"config: bad value {value!r} for option {key!r}") from None
        if action.choices is not None and value not in action.choices:
            raise ValidationError(f"config: option {key!r} must be one of {list(action.choices)}")
        setattr(args, dest, value)
    for dest, value in _DEFAULTS.items():
        if dest in valid and getattr(args, dest) is None:
            setattr(args, dest, value)
    return args


def _require(args, *dests):
    for d in dests:
        if getattr(args, d, None) is None:
            raise ValidationError(f"missing required option --{d.replace('_', '-')}")


def distance_spec(args) -> DistanceSpec:
    if args.distance == "epi":
        return DistanceSpec.epipolar()
    if args.distance == "ray":
        return DistanceSpec.ray()
    if args.distance == "reg":
        _require(args, "beta", "gamma1", "gamma2")
        return DistanceSpec.regularized(float(args.beta), float(args.gamma1), float(args.gamma2))
    raise ValidationError(f"--distance must be epi, ray or reg, got {args.distance!r}")


def _provenance(spec: DistanceSpec, rig) -> dict:
    meta = {f"distance_{k}" if k != "kind" else "distance": v for k, v in spec.describe().items()}
    meta["calibration_sha256"] = sio.rig_digest(rig)
    meta["version"] = __version__
    return meta


def _inputs(args):
    _require(args, "left", "right", "calib")
    return sio.read_points(args.left), sio.read_points(args.right), sio.read_calibration(args.calib)


# -- commands ----------------------------------------------------------------------


def cmd_cost(args) -> int:
    _require(args, "out")
    spec = distance_spec(args)
    left, right, rig = _inputs(args)
    values = cost_values(rig, spec, left.uv, right.uv)
    sio.write_cost(args.out, values, left.point_ids, right.point_ids, _provenance(spec, rig))
    log.info("wrote %dx%d %s cost matrix to %s", *values.shape, spec.label, args.out)
    return EXIT_OK


def cmd_match(args) -> int:
    _require(args, "out_plan", "out_matching")
    spec = distance_spec(args)
    if args.mass is not None and args.matcher != "pot":
        raise ValidationError("--mass is only valid with --matcher pot")
    left, right, rig = _inputs(args)
    values = cost_values(rig, spec, left.uv, right.uv)
    n, m = values.shape
    if args.matcher == "naive":
        matching = naive_match(values)
        x = 1.0 / max(n, m)
        plan = TransportPlan((n, m), [i for i, _ in matching], [j for _, j in matching], [x] * len(matching))
    elif args.matcher == "ot":
        plan = solve_ot(values)
        matching = binarize(plan, MatchSource.OT)
    elif args.matcher == "pot":
        plan = solve_pot(values, args.mass)
        matching = binarize(plan, MatchSource.POT)
    else:
        raise ValidationError(f"--matcher must be naive, ot or pot, got {args.matcher!r}")
    meta = {"matcher": args.matcher, **_provenance(spec, rig)}
    if args.matcher == "pot":
        meta["mass"] = sio.fmt(plan.total_mass)
    sio.write_plan(args.out_plan, sio.plan_rows(plan, left.point_ids, right.point_ids), meta)
    sio.write_matching(args.out_matching, matching.relabel(left.point_ids, right.point_ids), meta)
    if args.plot:
        from .plotting import plot_matches

        plot_matches(args.plot, left.uv, right.uv, matching.pairs, title=f"{args.matcher}, {spec.label}")
    log.info("matched %d pairs", len(matching))
    return EXIT_OK


def cmd_match_objects(args) -> int:
    _require(args, "out_dir")
    spec = distance_spec(args)
    left, right, rig = _inputs(args)
    lc, rc = left.cloud(), right.cloud()
    res = hierarchical_match(rig, spec, lc, rc, HierarchyMode(args.mode))
    out = Path(args.out_dir)
    meta = {"mode": args.mode, **_provenance(spec, rig)}
    obj_rows = [(lc.object_ids[i], rc.object_ids[j], x) for i, j, x in res.object_plan.entries()]
    sio.write_plan(out / "object_plan.csv", obj_rows, {"level": "object", **meta})
    sio.write_matching(
        out / "object_matching.csv", res.object_matching.relabel(lc.object_ids, rc.object_ids), {"level": "object", **meta}
    )
    sio.write_plan(out / "global_plan.csv", res.global_plan.entries(), {"level": "point", **meta})
    sio.write_matching(out / "matching.csv", res.point_matching, {"level": "point", **meta})
    log.info("matched %d objects and %d points", len(res.object_matching), len(res.point_matching))
    return EXIT_OK


def cmd_triangulate(args) -> int:
    _require(args, "pairs", "out")
    left, right, rig = _inputs(args)
    matching = sio.read_pairs(args.pairs)
    lu, ru = left.lookup(), right.lookup()
    for a, b in matching:
        if a not in lu:
            raise ValidationError(f"{args.pairs}: unknown left point id {a!r}")
        if b not in ru:
            raise ValidationError(f"{args.pairs}: unknown right point id {b!r}")
    rec = reconstruct(rig, matching, lu, ru)
    rows = [(a, b, *p, f) for (a, b), p, f in zip(rec.pairs, rec.points, rec.in_front)]
    sio.write_points3d(args.out, rows)
    sio.write_skipped(_skipped_path(args.out), [(a, b, "parallel rays") for a, b in rec.skipped])
    log.info("triangulated %d pairs, skipped %d", len(rows), rec.skipped_count)
    return EXIT_OK


def _skipped_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".skipped.csv")


def cmd_evaluate(args) -> int:
    _require(args, "pred", "gt", "out")
    pred = sio.read_pairs(args.pred)
    gt = sio.read_ground_truth(args.gt)
    left = sio.read_points(args.left) if args.left else None
    right = sio.read_points(args.right) if args.right else None
    n = args.n_left if args.n_left is not None else (len(left) if left else None)
    m = args.n_right if args.n_right is not None else (len(right) if right else None)
    if n is None or m is None:
        raise ValidationError("point counts need --n-left/--n-right or --left/--right")
    object_pred, n_objects = None, None
    if args.pred_objects:
        object_pred = sio.read_matching(args.pred_objects)
        no = args.n_left_objects if args.n_left_objects is not None else (len(set(left.object_ids)) if left else None)
        mo = args.n_right_objects if args.n_right_objects is not None else (len(set(right.object_ids)) if right else None)
        if no is None or mo is None:
            raise ValidationError("object counts need --n-left-objects/--n-right-objects or --left/--right")
        n_objects = (no, mo)
    rig = truth = None
    lu = ru = None
    if args.calib and left and right:
        rig = sio.read_calibration(args.calib)
        lu, ru = left.lookup(), right.lookup()
        if args.truth:
            truth = np.array([r[2:5] for r in sio.read_points3d(args.truth)])
        else:
            ref = reconstruct(rig, Matching(tuple(gt.point_pairs.items())), lu, ru)
            truth = ref.points
    report = evaluate(pred, gt, n, m, object_pred=object_pred, n_objects=n_objects, rig=rig, X=lu, Y=ru, truth_cloud=truth)
    config = {"n_left": n, "n_right": m, "source": pred.source.value}
    if n_objects:
        config["n_left_objects"], config["n_right_objects"] = n_objects
    sio.write_metrics(args.out, report, config)
    log.info("pointwise mismatch %.4f", report.pointwise_mismatch)
    return EXIT_OK


def _sweep_config(args):
    from dataclasses import replace

    from .simulation import SweepConfig

    cfg = sio.read_sweep_config(args.sweep_config) if args.sweep_config else SweepConfig()
    overrides = {}
    if getattr(args, "n_scenes", None) is not None:
        overrides["n_scenes"] = int(args.n_scenes)
    if args.base_seed is not None:
        overrides["base_seed"] = int(args.base_seed)
    return replace(cfg, **overrides) if overrides else cfg


def cmd_sweep(args) -> int:
    from .simulation import run_sweep

    _require(args, "out")
    cfg = _sweep_config(args)
    result = run_sweep(cfg, workers=int(args.workers))
    out = Path(args.out)
    sio.write_sweep_csv(out / "results.csv", result)
    sio.write_sweep_config(out / "config.json", cfg)
    if args.plot:
        from .plotting import plot_sweep

        plot_sweep(out / "mismatch.svg", result.rows())
    log.info("wrote %d rows to %s", len(result.rows()), out / "results.csv")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .simulation import sample_scene

    _require(args, "out")
    cfg = _sweep_config(args)
    scene = sample_scene(cfg, int(args.scene_index), float(args.sigma))
    out = Path(args.out)
    ids = [f"p{k}" for k in range(scene.n_points)]
    objs = [f"o{k}" for k in scene.labels.tolist()]
    sio.write_points(out / "left.csv", sio.PointsTable(ids, objs, scene.left_points))
    sio.write_points(out / "right.csv", sio.PointsTable(ids, objs, scene.right_points))
    sio.write_calibration(out / "calib.json", scene.rig)
    from .evaluation import GroundTruthCorrespondence

    sio.write_ground_truth(out / "gt.csv", GroundTruthCorrespondence.identity(ids, sorted(set(objs), key=objs.index)))
    sio.write_points3d(out / "truth.csv", [(a, a, *p, True) for a, p in zip(ids, scene.world_points)])
    return EXIT_OK


COMMANDS = {
    "cost": cmd_cost,
    "match": cmd_match,
    "match-objects": cmd_match_objects,
    "triangulate": cmd_triangulate,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (TransportError, RejectionBudgetExceeded)):
        return EXIT_INFEASIBLE
    if isinstance(exc, GeometryError) and not isinstance(exc, CalibrationError):
        return EXIT_INFEASIBLE
    if isinstance(exc, (ParseError, ValidationError, CalibrationError, ShapeMismatch, StereoOTError)):
        return EXIT_INVALID
    if isinstance(exc, OSError):
        return EXIT_IO
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        merge_config(args, parser)
        return COMMANDS[args.command](args)
    except (StereoOTError, OSError) as exc:
        print(f"stereo-ot {args.command}: error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
