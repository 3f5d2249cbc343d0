"""Synthetic sphere scenes and the Monte Carlo sweep over noise levels.

Each scene places ``n_objects`` non-overlapping spheres with centres in a
box in front of two cameras, samples points uniformly on each sphere,
projects them with identity intrinsics through randomly rotated cameras
and perturbs every image coordinate with Gaussian noise.

Random numbers come from independent Philox streams, one per
``(base_seed, scene_index, purpose)``.  The Philox key is derived with the
SplitMix64 finaliser::

    k0 = mix(mix(base_seed) ^ scene_index)
    k1 = mix(k0 ^ purpose_code)

so any scene can be regenerated on its own, in any order or process.
Geometry does not depend on the noise level, and the noise for a scene is
``sigma`` times one fixed standard-normal draw.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import RejectionBudgetExceeded, ValidationError
from .evaluation import (
    GroundTruthCorrespondence,
    objectwise_mismatch,
    pointwise_mismatch,
    reconstruct,
    w2_squared,
)
from .geometry import DistanceKind, DistanceSpec, StereoRig, cost_values, project_points, reduce_general_rig
from .hierarchy import HierarchyMode, LabeledCloud, hierarchical_match
from .transport import binarize, naive_match, solve_ot

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
PURPOSES = {"centers": 1, "radii": 2, "surface": 3, "rig": 4, "noise": 5}
REJECTION_BUDGET = 100_000
MATCHERS = ("naive", "ot", "hot")
ROTATION_LAWS = ("axis-angle", "euler-xyz")


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def stream(base_seed: int, scene_index: int, purpose: str) -> np.random.Generator:
    """Independent generator for one purpose of one scene."""
    k0 = splitmix64(splitmix64(int(base_seed) & _MASK64) ^ (int(scene_index) & _MASK64))
    k1 = splitmix64(k0 ^ PURPOSES[purpose])
    return np.random.Generator(np.random.Philox(key=np.array([k0, k1], dtype=np.uint64)))


def _default_distances():
    return (DistanceSpec.epipolar(), DistanceSpec.ray(), DistanceSpec.regularized(10.0, 2.5, 3.5))


@dataclass(frozen=True)
class SweepConfig:
    n_scenes: int = 100
    n_objects: int = 5
    points_per_object: int = 10
    center_low: tuple = (-0.5, -0.5, 2.5)
    center_high: tuple = (0.5, 0.5, 3.5)
    radius_range: tuple = (0.05, 0.1)
    sigmas: tuple = (0.0, 0.001, 0.005, 0.01, 0.05)
    max_rotation_deg: float = 15.0
    rotation_law: str = "euler-xyz"
    left_center: tuple = (0.0, 0.0, 0.0)
    right_center: tuple = (1.0, 0.0, 0.0)
    base_seed: int = 0
    distances: tuple = field(default_factory=_default_distances)
    matchers: tuple = MATCHERS

    def __post_init__(self):
        for name in ("n_scenes", "n_objects", "points_per_object"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if any(s < 0 for s in self.sigmas):
            raise ValidationError("noise levels must be nonnegative")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValidationError("radius_range must satisfy 0 < low <= high")
        if any(a > b for a, b in zip(self.center_low, self.center_high)):
            raise ValidationError("center_low must not exceed center_high")
        labels = [d.label for d in self.distances]
        if len(set(labels)) != len(labels):
            raise ValidationError("each distance kind may appear only once in a sweep")
        if self.rotation_law not in ROTATION_LAWS:
            raise ValidationError(f"rotation_law must be one of {ROTATION_LAWS}")
        bad = set(self.matchers) - set(MATCHERS)
        if bad:
            raise ValidationError(f"unknown matchers {sorted(bad)}")
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(self, "distances", tuple(self.distances))
        object.__setattr__(self, "matchers", tuple(self.matchers))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "distances":
                v = [d.describe() for d in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> SweepConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown sweep config keys: {sorted(unknown)}")
        kwargs = {}
        for k, v in data.items():
            if k == "distances":
                v = tuple(distance_from_dict(d) for d in v)
            elif isinstance(v, list):
                v = tuple(v)
            kwargs[k] = v
        return cls(**kwargs)


def distance_from_dict(d: dict | str) -> DistanceSpec:
    if isinstance(d, str):
        d = {"kind": d}
    kind = DistanceKind(d["kind"])
    if kind is DistanceKind.REGULARIZED:
        return DistanceSpec.regularized(d["beta"], d["gamma_low"], d["gamma_high"])
    return DistanceSpec(kind)


class SphereSpec(NamedTuple):
    center: np.ndarray
    radius: float
    points_per_sphere: int


class CameraPoses(NamedTuple):
    """World-to-camera rotations and translations of both cameras."""

    r_left: np.ndarray
    t_left: np.ndarray
    r_right: np.ndarray
    t_right: np.ndarray


@dataclass(frozen=True, eq=False)
class Scene:
    """One synthetic scene.

    ``world_points`` are expressed in the left camera frame, the frame in
    which triangulation reconstructs them; ``labels`` give the sphere index.
    """

    world_points: np.ndarray
    labels: np.ndarray
    rig: StereoRig
    left_points: np.ndarray
    right_points: np.ndarray
    spheres: tuple
    noise_sigma: float
    seed: int
    scene_index: int

    @property
    def n_points(self) -> int:
        return len(self.world_points)

    @property
    def left_cloud(self) -> LabeledCloud:
        return LabeledCloud.from_flat(self.left_points, self.labels.tolist())

    @property
    def right_cloud(self) -> LabeledCloud:
        return LabeledCloud.from_flat(self.right_points, self.labels.tolist())

    @property
    def gt(self) -> GroundTruthCorrespondence:
        return GroundTruthCorrespondence.identity(range(self.n_points), sorted(set(self.labels.tolist())))


def random_rotation(rng: np.random.Generator, max_deg: float, law: str = "euler-xyz") -> np.ndarray:
    """Random rotation bounded by ``max_deg``.

    ``"axis-angle"`` turns by an angle uniform in ``[-max_deg, max_deg]``
    about a uniformly distributed axis.  ``"euler-xyz"`` draws three
    intrinsic XYZ Euler angles from that interval, so the total angle can
    exceed ``max_deg``.
    """
    if law == "euler-xyz":
        angles = rng.uniform(-max_deg, max_deg, size=3)
        return Rotation.from_euler("XYZ", angles, degrees=True).as_matrix()
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(-max_deg, max_deg))
    return Rotation.from_rotvec(angle * axis).as_matrix()


def random_camera_poses(cfg: SweepConfig, rng: np.random.Generator) -> CameraPoses:
    r_l = random_rotation(rng, cfg.max_rotation_deg, cfg.rotation_law)
    r_r = random_rotation(rng, cfg.max_rotation_deg, cfg.rotation_law)
    t_l = -r_l @ np.asarray(cfg.left_center, dtype=float)
    t_r = -r_r @ np.asarray(cfg.right_center, dtype=float)
    return CameraPoses(r_l, t_l, r_r, t_r)


def _reduce(poses: CameraPoses) -> StereoRig:
    return reduce_general_rig(np.eye(3), np.eye(3), *poses[0::2], *poses[1::2])


def make_random_rig(cfg: SweepConfig, rng: np.random.Generator) -> StereoRig:
    """Identity-intrinsics rig with both cameras independently rotated about their focal points."""
    return _reduce(random_camera_poses(cfg, rng))


def sample_spheres(cfg: SweepConfig, scene_index: int) -> list[SphereSpec]:
    radii = stream(cfg.base_seed, scene_index, "radii").uniform(*cfg.radius_range, size=cfg.n_objects)
    rng = stream(cfg.base_seed, scene_index, "centers")
    lo, hi = np.asarray(cfg.center_low, float), np.asarray(cfg.center_high, float)
    spheres: list[SphereSpec] = []
    for r in radii:
        for _ in range(REJECTION_BUDGET):
            c = rng.uniform(lo, hi)
            if all(np.linalg.norm(c - s.center) > r + s.radius for s in spheres):
                break
        else:
            raise RejectionBudgetExceeded(
                f"scene {scene_index}: no room for sphere {len(spheres)} after {REJECTION_BUDGET} proposals"
            )
        spheres.append(SphereSpec(c, float(r), cfg.points_per_object))
    return spheres


def sample_scene(cfg: SweepConfig, scene_index: int, sigma: float) -> Scene:
    spheres = sample_spheres(cfg, scene_index)
    dirs = stream(cfg.base_seed, scene_index, "surface").standard_normal((cfg.n_objects, cfg.points_per_object, 3))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    pts = np.concatenate([s.center + s.radius * d for s, d in zip(spheres, dirs)])
    labels = np.repeat(np.arange(cfg.n_objects), cfg.points_per_object)

    rig_rng = stream(cfg.base_seed, scene_index, "rig")
    for _ in range(1000):
        poses = random_camera_poses(cfg, rig_rng)
        world = pts @ poses.r_left.T + poses.t_left
        rig = _reduce(poses)
        in_front = (world[:, 2] > 0) & (world @ rig.rotation[2] + rig.translation[2] > 0)
        if np.all(in_front):
            break
        log.debug("scene %d: resampling cameras, %d points behind", scene_index, int((~in_front).sum()))
    else:
        raise RejectionBudgetExceeded(f"scene {scene_index}: no camera draw sees every point")

    left, _ = project_points(rig, world, "left")
    right, _ = project_points(rig, world, "right")
    if sigma > 0:
        noise = stream(cfg.base_seed, scene_index, "noise").standard_normal((2,) + left.shape)
        left = left + sigma * noise[0]
        right = right + sigma * noise[1]
    for a in (world, labels, left, right):
        a.setflags(write=False)
    return Scene(world, labels, rig, left, right, tuple(spheres), float(sigma), cfg.base_seed, scene_index)


class SceneScores(NamedTuple):
    """Per-scene scores keyed by ``(distance_label, matcher)``."""

    mismatch: dict
    w2: dict
    object_mismatch: dict


def score_scene(scene: Scene, distances, matchers=MATCHERS) -> SceneScores:
    n = scene.n_points
    gt = scene.gt
    left_cloud, right_cloud = scene.left_cloud, scene.right_cloud
    mismatch, w2, obj = {}, {}, {}
    for spec in distances:
        values = cost_values(scene.rig, spec, scene.left_points, scene.right_points)
        for matcher in matchers:
            if matcher == "naive":
                pred = naive_match(values)
            elif matcher == "ot":
                pred = binarize(solve_ot(values))
            else:
                res = hierarchical_match(scene.rig, spec, left_cloud, right_cloud, HierarchyMode.BALANCED, values=values)
                pred = res.point_matching
                obj_pred = res.object_matching.relabel(left_cloud.object_ids, right_cloud.object_ids)
                obj[spec.label, matcher] = objectwise_mismatch(obj_pred, gt, len(left_cloud), len(right_cloud))
            key = (spec.label, matcher)
            mismatch[key] = pointwise_mismatch(pred, gt, n, n)
            rec = reconstruct(scene.rig, pred, scene.left_points, scene.right_points)
            w2[key] = w2_squared(rec.points, scene.world_points) if len(rec.points) else float("nan")
    return SceneScores(mismatch, w2, obj)


def _score_task(args):
    cfg, index, sigma = args
    return score_scene(sample_scene(cfg, index, sigma), cfg.distances, cfg.matchers)


@dataclass
class SweepResult:
    """Aggregated sweep table plus the raw per-scene scores.

    ``raw[(distance, matcher, sigma)]`` maps to a dict of per-scene arrays
    ``mismatch`` (fraction), ``w2`` and, for HOT, ``object_mismatch``.
    """

    config: SweepConfig
    raw: dict

    COLUMNS = (
        "distance",
        "matcher",
        "sigma",
        "mismatch_mean_pct",
        "mismatch_std_pct",
        "w2_mean",
        "w2_std",
        "object_mismatch_mean_pct",
        "object_mismatch_std_pct",
    )

    def rows(self) -> list[dict]:
        """One row per ``(distance, matcher, sigma)``; std is the population std over scenes."""
        out = []
        for spec in self.config.distances:
            for matcher in self.config.matchers:
                for sigma in self.config.sigmas:
                    r = self.raw[spec.label, matcher, sigma]
                    row = {
                        "distance": spec.label,
                        "matcher": matcher,
                        "sigma": sigma,
                        "mismatch_mean_pct": 100.0 * float(np.mean(r["mismatch"])),
                        "mismatch_std_pct": 100.0 * float(np.std(r["mismatch"])),
                        "w2_mean": float(np.nanmean(r["w2"])),
                        "w2_std": float(np.nanstd(r["w2"])),
                        "object_mismatch_mean_pct": None,
                        "object_mismatch_std_pct": None,
                    }
                    if "object_mismatch" in r:
                        row["object_mismatch_mean_pct"] = 100.0 * float(np.mean(r["object_mismatch"]))
                        row["object_mismatch_std_pct"] = 100.0 * float(np.std(r["object_mismatch"]))
                    out.append(row)
        return out

    def row(self, distance: str, matcher: str, sigma: float) -> dict:
        for r in self.rows():
            if r["distance"] == distance and r["matcher"] == matcher and r["sigma"] == sigma:
                return r
        raise KeyError((distance, matcher, sigma))


def run_sweep(cfg: SweepConfig, workers: int = 1) -> SweepResult:
    """Score every scene at every noise level; results do not depend on ``workers``."""
    tasks = [(cfg, k, s) for s in cfg.sigmas for k in range(cfg.n_scenes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_score_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        scores = [_score_task(t) for t in tasks]

    raw = {}
    for spec in cfg.distances:
        for matcher in cfg.matchers:
            key = (spec.label, matcher)
            for s_i, sigma in enumerate(cfg.sigmas):
                chunk = scores[s_i * cfg.n_scenes : (s_i + 1) * cfg.n_scenes]
                entry = {
                    "mismatch": np.array([sc.mismatch[key] for sc in chunk]),
                    "w2": np.array([sc.w2[key] for sc in chunk]),
                }
                if key in chunk[0].object_mismatch:
                    entry["object_mismatch"] = np.array([sc.object_mismatch[key] for sc in chunk])
                raw[spec.label, matcher, sigma] = entry
    return SweepResult(cfg, raw)
