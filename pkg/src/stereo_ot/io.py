"""Readers and writers for the on-disk formats.

Tabular files are CSV with a header row, preceded by a schema line
``# stereo-ot <kind> v1`` and optional ``# key=value`` metadata lines.
Calibration, sweep configuration and metrics are JSON objects carrying a
``"schema"`` field.  Reals are written with 17 significant digits so a
write/read round trip is exact.  All writes go through a temporary file
that is renamed into place.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import CalibrationError, DegenerateRig, ParseError, ValidationError
from .evaluation import GroundTruthCorrespondence, MetricsReport
from .geometry import StereoRig, reduce_general_rig
from .hierarchy import LabeledCloud
from .transport import Matching, MatchSource, TransportPlan

FORMAT_VERSION = 1
CALIBRATION_SCHEMA = "stereo-ot/calibration/v1"
METRICS_SCHEMA = "stereo-ot/metrics/v1"
SWEEP_SCHEMA = "stereo-ot/sweep-config/v1"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        # mkstemp creates 0600; give the file the permissions open() would
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# -- generic CSV -------------------------------------------------------------


def _render_csv(kind: str, header, rows, meta: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# stereo-ot {kind} v{FORMAT_VERSION}\n")
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class _Table:
    header: list
    rows: list  # (line_number, row)
    meta: dict


def _read_csv(path, kind: str, header) -> _Table:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    meta = {}
    start = 0
    for start, line in enumerate(lines):
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if start == 0 and body.startswith("stereo-ot "):
            parts = body.split()
            if len(parts) != 3 or parts[1] != kind:
                raise ParseError(f"expected a '{kind}' file, found '{body}'", path, 1)
            if parts[2] != f"v{FORMAT_VERSION}":
                raise ParseError(f"unsupported format version {parts[2]}", path, 1)
        elif "=" in body:
            k, v = body.split("=", 1)
            meta[k.strip()] = v.strip()
    else:
        start = len(lines)
    if start >= len(lines):
        raise ParseError("missing header row", path, start + 1)
    reader = csv.reader(lines[start:])
    got = next(reader)
    if header is not None and [h.strip() for h in got[: len(header)]] != list(header):
        raise ParseError(f"expected header {','.join(header)}, got {','.join(got)}", path, start + 1)
    rows = []
    for k, row in enumerate(reader, start=start + 2):
        if not row or all(not c.strip() for c in row):
            continue
        if header is not None and len(row) != len(got):
            raise ParseError(f"expected {len(got)} fields, got {len(row)}", path, k)
        rows.append((k, [c.strip() for c in row]))
    return _Table([h.strip() for h in got], rows, meta)


def _float(cell: str, path, line: int, column: int) -> float:
    try:
        x = float(cell)
    except ValueError:
        raise ParseError(f"not a number: {cell!r}", path, line, column) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite value {cell!r}", path, line, column)
    return x


# -- points ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointsTable:
    """Image points with string point and object identifiers."""

    point_ids: tuple
    object_ids: tuple
    uv: np.ndarray

    def __post_init__(self):
        uv = np.array(self.uv, dtype=float).reshape(-1, 2)
        if not (len(self.point_ids) == len(self.object_ids) == len(uv)):
            raise ValidationError("point ids, object ids and coordinates differ in length")
        if len(set(self.point_ids)) != len(self.point_ids):
            raise ValidationError("point ids are not unique")
        if not np.all(np.isfinite(uv)):
            raise ValidationError("coordinates must be finite")
        uv.setflags(write=False)
        object.__setattr__(self, "point_ids", tuple(self.point_ids))
        object.__setattr__(self, "object_ids", tuple(self.object_ids))
        object.__setattr__(self, "uv", uv)

    def __len__(self):
        return len(self.point_ids)

    def cloud(self) -> LabeledCloud:
        return LabeledCloud.from_flat(self.uv, list(self.object_ids), list(self.point_ids))

    def lookup(self) -> dict:
        return dict(zip(self.point_ids, self.uv))

    def __eq__(self, other):
        return (
            isinstance(other, PointsTable)
            and self.point_ids == other.point_ids
            and self.object_ids == other.object_ids
            and np.array_equal(self.uv, other.uv)
        )


def write_points(path, table: PointsTable) -> Path:
    rows = [(p, o, fmt(u), fmt(v)) for p, o, (u, v) in zip(table.point_ids, table.object_ids, table.uv)]
    return atomic_write(path, _render_csv("points", ("point_id", "object_id", "u", "v"), rows))


def read_points(path) -> PointsTable:
    t = _read_csv(path, "points", ("point_id", "object_id", "u", "v"))
    ids, objs, uv = [], [], []
    seen = {}
    for line, (pid, oid, u, v) in t.rows:
        if not pid:
            raise ParseError("empty point_id", path, line, 1)
        if pid in seen:
            raise ParseError(f"duplicate point_id {pid!r} (first on line {seen[pid]})", path, line, 1)
        seen[pid] = line
        ids.append(pid)
        objs.append(oid)
        uv.append((_float(u, path, line, 3), _float(v, path, line, 4)))
    if not ids:
        raise ParseError("no points", path)
    return PointsTable(tuple(ids), tuple(objs), np.array(uv))


# -- calibration -------------------------------------------------------------


def _matrix(data, key, shape, path):
    if key not in data:
        raise CalibrationError(f"{path}: missing field {key!r}")
    arr = np.asarray(data[key], dtype=float)
    if arr.shape != shape:
        raise CalibrationError(f"{path}: field {key!r} must have shape {shape}, got {arr.shape}")
    return arr


def calibration_from_dict(data: dict, path="<calibration>") -> StereoRig:
    schema = data.get("schema", CALIBRATION_SCHEMA)
    if schema != CALIBRATION_SCHEMA:
        raise CalibrationError(f"{path}: unsupported schema {schema!r}")
    try:
        k_l = _matrix(data, "K_left", (3, 3), path)
        k_r = _matrix(data, "K_right", (3, 3), path)
        if "R" in data or "t" in data:
            return StereoRig(k_l, k_r, _matrix(data, "R", (3, 3), path), _matrix(data, "t", (3,), path))
        return reduce_general_rig(
            k_l,
            k_r,
            _matrix(data, "R_left", (3, 3), path),
            _matrix(data, "R_right", (3, 3), path),
            _matrix(data, "t_left", (3,), path),
            _matrix(data, "t_right", (3,), path),
        )
    except DegenerateRig as exc:
        raise CalibrationError(f"{path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CalibrationError):
            raise
        raise CalibrationError(f"{path}: {exc}") from exc


def read_calibration(path) -> StereoRig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno, exc.colno) from None
    if not isinstance(data, dict):
        raise CalibrationError(f"{path}: expected a JSON object")
    return calibration_from_dict(data, path)


def calibration_dict(rig: StereoRig) -> dict:
    return {"schema": CALIBRATION_SCHEMA, **rig.as_dict()}


def write_calibration(path, rig: StereoRig) -> Path:
    return atomic_write(path, json.dumps(calibration_dict(rig), indent=2) + "\n")


def rig_digest(rig: StereoRig) -> str:
    """SHA-256 over the rig entries written with 17 significant digits."""
    parts = [fmt(x) for a in (rig.k_left, rig.k_right, rig.rotation, rig.translation) for x in np.ravel(a)]
    return hashlib.sha256(",".join(parts).encode()).hexdigest()


# -- cost matrices -------------------------------------------------------------


def write_cost(path, values, left_ids, right_ids, meta: dict | None = None) -> Path:
    values = np.asarray(values, dtype=float)
    rows = [(lid, *(fmt(x) for x in row)) for lid, row in zip(left_ids, values)]
    return atomic_write(path, _render_csv("cost", ("left_id", *right_ids), rows, meta))


def read_cost(path):
    """Return ``(values, left_ids, right_ids, meta)``."""
    t = _read_csv(path, "cost", None)
    if not t.header or t.header[0] != "left_id":
        raise ParseError("cost header must start with 'left_id'", path)
    right_ids = t.header[1:]
    left_ids, values = [], []
    for line, row in t.rows:
        if len(row) != len(t.header):
            raise ParseError(f"expected {len(t.header)} fields, got {len(row)}", path, line)
        left_ids.append(row[0])
        values.append([_float(c, path, line, k + 2) for k, c in enumerate(row[1:])])
    return np.array(values), left_ids, right_ids, t.meta


# -- plans and matchings --------------------------------------------------------


def plan_rows(plan: TransportPlan, left_ids, right_ids):
    return [(left_ids[i], right_ids[j], x) for i, j, x in plan.entries()]


def write_plan(path, entries, meta: dict | None = None) -> Path:
    """``entries`` are ``(left_id, right_id, mass)`` triples."""
    rows = [(a, b, fmt(x)) for a, b, x in entries]
    return atomic_write(path, _render_csv("plan", ("left_point_id", "right_point_id", "mass"), rows, meta))


def read_plan(path) -> list[tuple[str, str, float]]:
    t = _read_csv(path, "plan", ("left_point_id", "right_point_id", "mass"))
    out = []
    for line, (a, b, x) in t.rows:
        mass = _float(x, path, line, 3)
        if not mass > 0:
            raise ParseError(f"mass must be positive, got {x}", path, line, 3)
        out.append((a, b, mass))
    return out


def write_matching(path, matching: Matching, meta: dict | None = None) -> Path:
    meta = {"source": matching.source.value, **(meta or {})}
    return atomic_write(
        path, _render_csv("matching", ("left_id", "right_id"), [tuple(p) for p in matching.pairs], meta)
    )


def read_matching(path) -> Matching:
    t = _read_csv(path, "matching", ("left_id", "right_id"))
    source = t.meta.get("source", MatchSource.OT.value)
    try:
        return Matching(tuple((a, b) for _, (a, b) in t.rows), MatchSource(source))
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def read_pairs(path) -> Matching:
    """Read either a matching file or a plan file (plans are binarised by support)."""
    first = Path(path).read_text(encoding="utf-8").split("\n", 1)[0]
    if first.startswith("# stereo-ot plan"):
        entries = read_plan(path)
        lefts = sorted({a for a, _, _ in entries})
        rights = sorted({b for _, b, _ in entries})
        li = {a: k for k, a in enumerate(lefts)}
        ri = {b: k for k, b in enumerate(rights)}
        from .transport import binarize

        plan = TransportPlan(
            (len(lefts), len(rights)),
            [li[a] for a, _, _ in entries],
            [ri[b] for _, b, _ in entries],
            [x for _, _, x in entries],
        )
        return binarize(plan).relabel(lefts, rights)
    return read_matching(path)


# -- ground truth ---------------------------------------------------------------


def write_ground_truth(path, gt: GroundTruthCorrespondence) -> Path:
    rows = [("point", a, b) for a, b in gt.point_pairs.items()]
    rows += [("object", a, b) for a, b in gt.object_pairs.items()]
    return atomic_write(path, _render_csv("ground-truth", ("kind", "left_id", "right_id"), rows))


def read_ground_truth(path) -> GroundTruthCorrespondence:
    t = _read_csv(path, "ground-truth", ("kind", "left_id", "right_id"))
    points, objects = {}, {}
    for line, (kind, a, b) in t.rows:
        target = {"point": points, "object": objects}.get(kind)
        if target is None:
            raise ParseError(f"kind must be 'point' or 'object', got {kind!r}", path, line, 1)
        if a in target:
            raise ParseError(f"duplicate {kind} {a!r}", path, line, 2)
        target[a] = b
    return GroundTruthCorrespondence(points, objects)


# -- 3D points ---------------------------------------------------------------------


def write_points3d(path, rows) -> Path:
    """``rows`` are ``(left_id, right_id, x, y, z, in_front)``."""
    out = [(a, b, fmt(x), fmt(y), fmt(z), int(bool(f))) for a, b, x, y, z, f in rows]
    return atomic_write(path, _render_csv("points3d", ("left_id", "right_id", "x", "y", "z", "in_front"), out))


def read_points3d(path):
    t = _read_csv(path, "points3d", ("left_id", "right_id", "x", "y", "z", "in_front"))
    out = []
    for line, (a, b, x, y, z, f) in t.rows:
        xyz = [_float(c, path, line, k) for k, c in zip((3, 4, 5), (x, y, z))]
        if f not in ("0", "1"):
            raise ParseError(f"in_front must be 0 or 1, got {f!r}", path, line, 6)
        out.append((a, b, *xyz, f == "1"))
    return out


def write_skipped(path, rows) -> Path:
    return atomic_write(path, _render_csv("skipped", ("left_id", "right_id", "reason"), rows))


# -- metrics -------------------------------------------------------------------

_RATE = {"type": "number", "minimum": 0, "maximum": 1}
METRICS_JSON_SCHEMA = {
    "type": "object",
    "required": ["schema", "pointwise_mismatch", "matched_count", "skipped_triangulations", "config", "version"],
    "properties": {
        "schema": {"const": METRICS_SCHEMA},
        "pointwise_mismatch": _RATE,
        "objectwise_mismatch": {"anyOf": [_RATE, {"type": "null"}]},
        "w2_squared": {"anyOf": [{"type": "number", "minimum": 0}, {"type": "null"}]},
        "w2_normalization": {"type": "string"},
        "matched_count": {"type": "integer", "minimum": 0},
        "skipped_triangulations": {"type": "integer", "minimum": 0},
        "config": {"type": "object"},
        "seed": {"anyOf": [{"type": "integer"}, {"type": "null"}]},
        "version": {"type": "string"},
    },
    "additionalProperties": False,
}


def metrics_dict(report: MetricsReport, config: dict | None = None, seed: int | None = None) -> dict:
    out = {"schema": METRICS_SCHEMA, **report.as_dict()}
    out["w2_normalization"] = "mean squared distance per unit transported mass"
    out["config"] = dict(config or {})
    out["seed"] = seed
    out["version"] = __version__
    jsonschema.validate(out, METRICS_JSON_SCHEMA)
    return out


def write_metrics(path, report: MetricsReport, config: dict | None = None, seed: int | None = None) -> Path:
    return atomic_write(path, json.dumps(metrics_dict(report, config, seed), indent=2, sort_keys=True) + "\n")


def read_metrics(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno, exc.colno) from None
    try:
        jsonschema.validate(data, METRICS_JSON_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"{path}: {exc.message}") from None
    return data


# -- sweep ---------------------------------------------------------------------


def read_sweep_config(path):
    from .simulation import SweepConfig

    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno, exc.colno) from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    schema = data.pop("schema", SWEEP_SCHEMA)
    if schema != SWEEP_SCHEMA:
        raise ValidationError(f"{path}: unsupported schema {schema!r}")
    try:
        return SweepConfig.from_dict(data)
    except (TypeError, KeyError) as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_sweep_config(path, cfg) -> Path:
    return atomic_write(path, json.dumps({"schema": SWEEP_SCHEMA, **cfg.to_dict()}, indent=2) + "\n")


def sweep_csv(result) -> str:
    cols = result.COLUMNS
    rows = []
    for r in result.rows():
        rows.append(tuple("" if r[c] is None else (fmt(r[c]) if isinstance(r[c], float) else r[c]) for c in cols))
    meta = {"n_scenes": result.config.n_scenes, "base_seed": result.config.base_seed, "std": "population", "version": __version__}
    return _render_csv("sweep", cols, rows, meta)


def write_sweep_csv(path, result) -> Path:
    return atomic_write(path, sweep_csv(result))


def read_sweep_csv(path) -> list[dict]:
    t = _read_csv(path, "sweep", None)
    out = []
    for _, row in t.rows:
        rec = dict(zip(t.header, row))
        for k, v in rec.items():
            if k not in ("distance", "matcher"):
                rec[k] = None if v == "" else float(v)
        out.append(rec)
    return out
