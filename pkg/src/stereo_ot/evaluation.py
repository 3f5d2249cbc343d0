"""Scoring of matchings against ground truth and via 3D reconstruction."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from typing import Hashable, NamedTuple

import numpy as np

from .errors import EmptyCloud, ValidationError
from .geometry import StereoRig, triangulate_many
from .transport import Matching, solve_ot, solve_pot


def _injective(pairs, what):
    pairs = dict(pairs)
    if len(set(pairs.values())) != len(pairs):
        raise ValidationError(f"ground-truth {what} correspondence is not injective")
    return pairs


@dataclass(frozen=True)
class GroundTruthCorrespondence:
    """Known left-to-right correspondences of points and, optionally, objects."""

    point_pairs: Mapping = field(default_factory=dict)
    object_pairs: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "point_pairs", _injective(self.point_pairs, "point"))
        object.__setattr__(self, "object_pairs", _injective(self.object_pairs, "object"))

    @classmethod
    def identity(cls, point_ids, object_ids=()) -> GroundTruthCorrespondence:
        return cls({p: p for p in point_ids}, {o: o for o in object_ids})


@dataclass(frozen=True)
class MetricsReport:
    pointwise_mismatch: float
    objectwise_mismatch: float | None = None
    w2_squared: float | None = None
    matched_count: int = 0
    skipped_triangulations: int = 0

    def __post_init__(self):
        for name in ("pointwise_mismatch", "objectwise_mismatch"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if self.w2_squared is not None and not self.w2_squared >= 0:
            raise ValidationError("w2_squared must be nonnegative")

    def as_dict(self) -> dict:
        return asdict(self)


def _mismatch(pairs, truth: Mapping, n: int, m: int) -> float:
    total = min(n, m)
    if total == 0:
        return 0.0
    correct = sum(1 for a, b in pairs if a in truth and truth[a] == b)
    return (total - correct) / total


def pointwise_mismatch(pred: Matching, gt: GroundTruthCorrespondence, n: int, m: int) -> float:
    """Fraction of the ``min(n, m)`` expected point pairs not correctly predicted.

    Pairs missing from ``pred`` count as incorrect.
    """
    return _mismatch(pred, gt.point_pairs, n, m)


def objectwise_mismatch(pred: Matching, gt: GroundTruthCorrespondence, n: int, m: int) -> float:
    return _mismatch(pred, gt.object_pairs, n, m)


class Reconstruction(NamedTuple):
    points: np.ndarray
    pairs: list
    in_front: np.ndarray
    skipped: list

    @property
    def skipped_count(self) -> int:
        return len(self.skipped)


def _lookup(points, keys):
    if isinstance(points, Mapping):
        return np.array([points[k] for k in keys], dtype=float).reshape(-1, 2)
    return np.asarray(points, dtype=float).reshape(-1, 2)[list(keys)]


def reconstruct(rig: StereoRig, pred: Matching, X, Y) -> Reconstruction:
    """Triangulate every matched pair; pairs with parallel rays are skipped.

    ``X`` and ``Y`` are ``(n, 2)`` arrays indexed by the pair entries, or
    mappings from point id to coordinates.
    """
    pairs = list(pred.pairs)
    if not pairs:
        return Reconstruction(np.empty((0, 3)), [], np.empty(0, dtype=bool), [])
    xs = _lookup(X, [a for a, _ in pairs])
    ys = _lookup(Y, [b for _, b in pairs])
    pts, in_front, valid = triangulate_many(rig, xs, ys)
    kept = [p for p, ok in zip(pairs, valid) if ok]
    skipped = [p for p, ok in zip(pairs, valid) if not ok]
    return Reconstruction(pts[valid], kept, in_front[valid], skipped)


def w2_squared(P, Q) -> float:
    """Squared 2-Wasserstein distance between uniform point clouds in 3D.

    Unequal sizes use partial transport at the default mass; the result is
    divided by the transported mass so it stays a mean squared distance.
    """
    P = np.asarray(P, dtype=float).reshape(-1, 3)
    Q = np.asarray(Q, dtype=float).reshape(-1, 3)
    if len(P) == 0 or len(Q) == 0:
        raise EmptyCloud("W2 needs two nonempty point clouds")
    cost = ((P[:, None, :] - Q[None, :, :]) ** 2).sum(axis=-1)
    if len(P) == len(Q):
        return solve_ot(cost).objective
    plan = solve_pot(cost)
    return plan.objective / plan.total_mass


def evaluate(
    pred: Matching,
    gt: GroundTruthCorrespondence,
    n: int,
    m: int,
    *,
    object_pred: Matching | None = None,
    n_objects: tuple[int, int] | None = None,
    rig: StereoRig | None = None,
    X=None,
    Y=None,
    truth_cloud=None,
) -> MetricsReport:
    """Collect every available metric into one report.

    The W2 term needs ``rig``, ``X``, ``Y`` and the reference ``truth_cloud``.
    """
    obj = None
    if object_pred is not None:
        if n_objects is None:
            raise ValidationError("object counts are required with an object prediction")
        obj = objectwise_mismatch(object_pred, gt, *n_objects)
    w2 = None
    skipped = 0
    if rig is not None and truth_cloud is not None:
        rec = reconstruct(rig, pred, X, Y)
        skipped = rec.skipped_count
        if len(rec.points):
            w2 = w2_squared(rec.points, truth_cloud)
    return MetricsReport(
        pointwise_mismatch=pointwise_mismatch(pred, gt, n, m),
        objectwise_mismatch=obj,
        w2_squared=w2,
        matched_count=len(pred),
        skipped_triangulations=skipped,
    )
