"""Two-level matching of labelled point sets (HOT and HOT-POT).

Every left object is compared with every right object by a partial
transport solve at the default mass; the objectives form an object-level
cost matrix, which is solved once more, by balanced OT (HOT) or partial OT
(HOT-POT).  Scaling each local plan by the object-level mass and embedding
it into its block yields a pointwise plan over all points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Hashable, NamedTuple, Sequence

import numpy as np

from .errors import ShapeMismatch, ValidationError
from .geometry import DistanceSpec, StereoRig, cost_values
from .transport import (
    MatchSource,
    Matching,
    TransportPlan,
    binarize,
    solve_ot,
    solve_pot,
)


@dataclass(frozen=True, eq=False)
class LabeledCloud:
    """Image points grouped into objects, in a fixed object order."""

    object_ids: tuple
    points: tuple
    point_ids: tuple

    def __post_init__(self):
        if not (len(self.object_ids) == len(self.points) == len(self.point_ids)):
            raise ValidationError("object_ids, points and point_ids must have equal length")
        if len(self.object_ids) == 0:
            raise ValidationError("a labelled cloud needs at least one object")
        if len(set(self.object_ids)) != len(self.object_ids):
            raise ValidationError("object ids are not unique")
        pts = []
        for oid, p, ids in zip(self.object_ids, self.points, self.point_ids):
            p = np.array(p, dtype=float).reshape(-1, 2)
            if len(p) == 0:
                raise ValidationError(f"object {oid!r} is empty")
            if len(ids) != len(p):
                raise ValidationError(f"object {oid!r}: {len(ids)} ids for {len(p)} points")
            p.setflags(write=False)
            pts.append(p)
        flat_ids = [pid for ids in self.point_ids for pid in ids]
        if len(set(flat_ids)) != len(flat_ids):
            raise ValidationError("point ids are not unique")
        object.__setattr__(self, "object_ids", tuple(self.object_ids))
        object.__setattr__(self, "points", tuple(pts))
        object.__setattr__(self, "point_ids", tuple(tuple(ids) for ids in self.point_ids))

    @classmethod
    def from_flat(cls, points, labels: Sequence[Hashable], point_ids: Sequence[Hashable] | None = None) -> LabeledCloud:
        """Group an ``(n, 2)`` array by label, keeping first-appearance order of labels."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        if point_ids is None:
            point_ids = range(len(points))
        point_ids = list(point_ids)
        if len(labels) != len(points) or len(point_ids) != len(points):
            raise ValidationError("labels and point ids must match the number of points")
        order: dict = {}
        for k, lab in enumerate(labels):
            order.setdefault(lab, []).append(k)
        return cls(
            tuple(order),
            tuple(points[idx] for idx in order.values()),
            tuple(tuple(point_ids[k] for k in idx) for idx in order.values()),
        )

    def __len__(self):
        return len(self.object_ids)

    @property
    def sizes(self) -> list[int]:
        return [len(p) for p in self.points]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def flat_points(self) -> np.ndarray:
        return np.concatenate(self.points, axis=0)

    def flat_point_ids(self) -> list:
        return [pid for ids in self.point_ids for pid in ids]


@dataclass(frozen=True, eq=False)
class ObjectCostMatrix:
    """Object-level costs together with the local plans that produced them."""

    values: np.ndarray
    plans: tuple
    left: LabeledCloud
    right: LabeledCloud

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


class HierarchyMode(str, enum.Enum):
    BALANCED = "hot"
    PARTIAL = "hot-pot"


@dataclass(frozen=True, eq=False)
class GlobalPlan:
    """Pointwise plan assembled from object-level mass times local plans.

    ``blocks`` holds ``(i, j, object_mass, local_plan)`` for every object pair
    with positive object-level mass.
    """

    object_plan: TransportPlan
    blocks: tuple
    left: LabeledCloud
    right: LabeledCloud

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.left.offsets[-1]), int(self.right.offsets[-1])

    @property
    def total_mass(self) -> float:
        return float(sum(w * p.total_mass for _, _, w, p in self.blocks))

    def to_plan(self) -> TransportPlan:
        """Flatten into a :class:`TransportPlan` over global point indices."""
        lo, ro = self.left.offsets, self.right.offsets
        rows, cols, mass = [], [], []
        for i, j, w, local in self.blocks:
            rows.append(local.row_index + lo[i])
            cols.append(local.col_index + ro[j])
            mass.append(w * local.mass)
        if not rows:
            return TransportPlan.empty(*self.shape)
        return TransportPlan(self.shape, np.concatenate(rows), np.concatenate(cols), np.concatenate(mass))

    def entries(self) -> list[tuple[Hashable, Hashable, float]]:
        """``(left_point_id, right_point_id, mass)`` for every nonzero entry."""
        out = []
        for i, j, w, local in self.blocks:
            lids, rids = self.left.point_ids[i], self.right.point_ids[j]
            for r, s, x in local.entries():
                out.append((lids[r], rids[s], w * x))
        return out


class HierarchicalResult(NamedTuple):
    costs: ObjectCostMatrix
    object_plan: TransportPlan
    object_matching: Matching
    global_plan: GlobalPlan
    point_matching: Matching


def object_costs_from_values(values, left: LabeledCloud, right: LabeledCloud) -> ObjectCostMatrix:
    """Object costs from a precomputed flat ``(N_tot, M_tot)`` cost array."""
    values = np.asarray(values, dtype=float)
    lo, ro = left.offsets, right.offsets
    if values.shape != (lo[-1], ro[-1]):
        raise ShapeMismatch(f"cost array {values.shape} does not fit clouds of {lo[-1]} and {ro[-1]} points")
    n, m = len(left), len(right)
    obj = np.empty((n, m))
    plans = []
    for i in range(n):
        row = []
        for j in range(m):
            plan = solve_pot(values[lo[i] : lo[i + 1], ro[j] : ro[j + 1]])
            obj[i, j] = plan.objective
            row.append(plan)
        plans.append(tuple(row))
    obj.setflags(write=False)
    return ObjectCostMatrix(obj, tuple(plans), left, right)


def object_costs(rig: StereoRig, spec: DistanceSpec, X: LabeledCloud, Y: LabeledCloud) -> ObjectCostMatrix:
    values = cost_values(rig, spec, X.flat_points(), Y.flat_points())
    return object_costs_from_values(values, X, Y)


def match_objects(costs: ObjectCostMatrix, mode: HierarchyMode | str = HierarchyMode.BALANCED) -> tuple[TransportPlan, Matching]:
    mode = HierarchyMode(mode)
    n, m = costs.shape
    if mode is HierarchyMode.BALANCED:
        if n != m:
            raise ShapeMismatch(
                f"balanced object matching needs equal object counts, got {n} and {m}; use 'hot-pot'"
            )
        plan = solve_ot(costs.values)
        return plan, binarize(plan, MatchSource.HOT)
    plan = solve_pot(costs.values)
    return plan, binarize(plan, MatchSource.HOTPOT)


def global_plan(object_plan: TransportPlan, costs: ObjectCostMatrix) -> GlobalPlan:
    if object_plan.shape != costs.shape:
        raise ShapeMismatch(f"object plan {object_plan.shape} does not match object costs {costs.shape}")
    blocks = tuple(
        (i, j, w, costs.plans[i][j]) for i, j, w in object_plan.entries() if w > 0
    )
    return GlobalPlan(object_plan, blocks, costs.left, costs.right)


def global_matching(gp: GlobalPlan, source: MatchSource | str | None = None) -> Matching:
    """Point-id matching: local matchings of the object pairs kept by binarisation."""
    object_pairs = binarize(gp.object_plan).pairs
    pairs = []
    for i, j in object_pairs:
        local = binarize(_local(gp, i, j))
        lids, rids = gp.left.point_ids[i], gp.right.point_ids[j]
        pairs.extend((lids[r], rids[s]) for r, s in local.pairs)
    if source is None:
        source = MatchSource.HOT
    return Matching(tuple(pairs), source)


def _local(gp: GlobalPlan, i: int, j: int) -> TransportPlan:
    for bi, bj, _, plan in gp.blocks:
        if bi == i and bj == j:
            return plan
    raise ShapeMismatch(f"no block for object pair ({i}, {j})")


def hierarchical_match(
    rig: StereoRig,
    spec: DistanceSpec,
    X: LabeledCloud,
    Y: LabeledCloud,
    mode: HierarchyMode | str = HierarchyMode.BALANCED,
    values=None,
) -> HierarchicalResult:
    """Run both levels and recover the pointwise matching.

    ``values`` may carry a precomputed flat cost array to avoid recomputing it.
    """
    mode = HierarchyMode(mode)
    if values is None:
        costs = object_costs(rig, spec, X, Y)
    else:
        costs = object_costs_from_values(values, X, Y)
    plan, obj_matching = match_objects(costs, mode)
    gp = global_plan(plan, costs)
    source = MatchSource.HOT if mode is HierarchyMode.BALANCED else MatchSource.HOTPOT
    return HierarchicalResult(costs, plan, obj_matching, gp, global_matching(gp, source))
