"""Exact discrete optimal transport, partial transport, and greedy matching.

Two engines back the solvers:

* a rectangular linear assignment solver, exact for uniform weights with
  ``N == M`` and for partial transport at the default mass
  ``min(N, M) / max(N, M)``, where some optimal plan is a scaled (partial)
  permutation;
* a primal network simplex (:mod:`stereo_ot._simplex`) for arbitrary
  marginals and for partial transport at any other mass, through the usual
  dummy-node reduction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Hashable

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._simplex import network_simplex
from .errors import InfeasibleMarginals, InfeasibleMass, ShapeMismatch, ValidationError

MARGINAL_TOL = 1e-9
_MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Finite ``N x M`` cost array, optionally tagged with the distance that produced it."""

    values: np.ndarray
    distance: Any = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValidationError(f"cost matrix must be a nonempty 2D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("cost matrix contains NaN or infinite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def coerce(cls, obj) -> CostMatrix:
        return obj if isinstance(obj, CostMatrix) else cls(obj)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class MarginalWeights:
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        for name in ("left", "right"):
            w = np.array(getattr(self, name), dtype=float).reshape(-1)
            if w.size == 0 or not np.all(w > 0) or not np.all(np.isfinite(w)):
                raise ValidationError(f"{name} weights must be finite and strictly positive")
            w.setflags(write=False)
            object.__setattr__(self, name, w)

    @classmethod
    def uniform(cls, n: int, m: int) -> MarginalWeights:
        return cls(np.full(n, 1.0 / n), np.full(m, 1.0 / m))

    def is_uniform(self) -> bool:
        return bool(np.all(self.left == self.left[0]) and np.all(self.right == self.right[0]))


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse nonnegative coupling, stored as row-major sorted ``(i, j, mass)`` triples."""

    shape: tuple[int, int]
    row_index: np.ndarray
    col_index: np.ndarray
    mass: np.ndarray
    objective: float = float("nan")
    total_mass: float = field(init=False)

    def __post_init__(self):
        i = np.asarray(self.row_index, dtype=np.int64).reshape(-1)
        j = np.asarray(self.col_index, dtype=np.int64).reshape(-1)
        x = np.asarray(self.mass, dtype=float).reshape(-1)
        n, m = (int(s) for s in self.shape)
        if not (len(i) == len(j) == len(x)):
            raise ValidationError("plan index and mass arrays differ in length")
        if len(x) and (i.min() < 0 or i.max() >= n or j.min() < 0 or j.max() >= m):
            raise ValidationError("plan index out of range")
        if np.any(~(x > 0)):
            raise ValidationError("plan masses must be strictly positive")
        order = np.lexsort((j, i))
        i, j, x = i[order], j[order], x[order]
        if len(i) > 1 and np.any((np.diff(i) == 0) & (np.diff(j) == 0)):
            raise ValidationError("duplicate plan entry")
        for name, arr in (("row_index", i), ("col_index", j), ("mass", x)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "shape", (n, m))
        object.__setattr__(self, "total_mass", float(x.sum()))

    @classmethod
    def from_dense(cls, dense, objective: float = float("nan")) -> TransportPlan:
        dense = np.asarray(dense, dtype=float)
        i, j = np.nonzero(dense > 0)
        return cls(dense.shape, i, j, dense[i, j], objective)

    @classmethod
    def empty(cls, n: int, m: int) -> TransportPlan:
        return cls((n, m), [], [], [], 0.0)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_index, self.col_index] = self.mass
        return out

    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.row_index.tolist(), self.col_index.tolist(), self.mass.tolist()))

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.row_index, self.mass, minlength=self.shape[0])

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.col_index, self.mass, minlength=self.shape[1])

    def __len__(self):
        return len(self.mass)


class MatchSource(str, enum.Enum):
    NAIVE = "naive"
    OT = "ot"
    POT = "pot"
    HOT = "hot"
    HOTPOT = "hot-pot"


@dataclass(frozen=True)
class Matching:
    """One-to-one partial correspondence, as ordered ``(left, right)`` pairs."""

    pairs: tuple[tuple[Hashable, Hashable], ...]
    source: MatchSource = MatchSource.OT

    def __post_init__(self):
        pairs = tuple((a, b) for a, b in self.pairs)
        lefts = [a for a, _ in pairs]
        rights = [b for _, b in pairs]
        if len(set(lefts)) != len(lefts) or len(set(rights)) != len(rights):
            raise ValidationError("matching is not injective")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "source", MatchSource(self.source))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def as_dict(self) -> dict:
        return dict(self.pairs)

    def relabel(self, left_ids, right_ids) -> Matching:
        """Translate index pairs into identifier pairs."""
        return Matching(tuple((left_ids[i], right_ids[j]) for i, j in self.pairs), self.source)


def default_mass(n: int, m: int) -> float:
    return min(n, m) / max(n, m)


def _check_weights(weights: MarginalWeights, n: int, m: int):
    if weights.left.shape != (n,) or weights.right.shape != (m,):
        raise ShapeMismatch(
            f"weights of length {len(weights.left)}/{len(weights.right)} do not fit a {n}x{m} cost matrix"
        )
    gap = abs(weights.left.sum() - weights.right.sum())
    if gap > MARGINAL_TOL:
        raise InfeasibleMarginals(f"marginal masses differ by {gap:.3e}")


def _assignment_plan(c: np.ndarray) -> TransportPlan:
    n, m = c.shape
    rows, cols = linear_sum_assignment(c)
    x = np.full(len(rows), 1.0 / max(n, m))
    plan = TransportPlan((n, m), rows, cols, x)
    return _with_objective(plan, c)


def _with_objective(plan: TransportPlan, c: np.ndarray) -> TransportPlan:
    obj = float(np.dot(plan.mass, c[plan.row_index, plan.col_index]))
    object.__setattr__(plan, "objective", obj)
    return plan


def solve_ot(C, weights: MarginalWeights | None = None, method: str = "auto") -> TransportPlan:
    """Exact balanced optimal transport.

    Parameters
    ----------
    C : CostMatrix or array_like, shape (N, M)
    weights : MarginalWeights, optional
        Defaults to uniform ``1/N`` and ``1/M``.
    method : {"auto", "assignment", "simplex"}
        ``"auto"`` uses the assignment engine when ``N == M`` with uniform
        weights and the network simplex otherwise.

    Returns
    -------
    TransportPlan
        A vertex optimum with at most ``N + M - 1`` nonzeros.
    """
    c = CostMatrix.coerce(C).values
    n, m = c.shape
    if weights is None:
        weights = MarginalWeights.uniform(n, m)
    _check_weights(weights, n, m)
    square_uniform = n == m and weights.is_uniform() and abs(weights.left[0] - 1.0 / n) <= _MASS_TOL
    if method == "auto":
        method = "assignment" if square_uniform else "simplex"
    if method == "assignment":
        if not square_uniform:
            raise ValidationError("the assignment engine needs N == M and uniform weights")
        return _assignment_plan(c)
    if method != "simplex":
        raise ValidationError(f"unknown method {method!r}")
    right = weights.right * (weights.left.sum() / weights.right.sum())
    dense = network_simplex(c, weights.left, right)
    return _with_objective(TransportPlan.from_dense(dense), c)


def solve_pot(C, mass: float | None = None) -> TransportPlan:
    """Exact partial transport with uniform capacities ``1/N`` and ``1/M``.

    Minimises ``<C, P>`` over ``P >= 0`` with ``P 1 <= 1/N``,
    ``P^T 1 <= 1/M`` and total mass ``mass``.  At the default mass
    ``min(N, M) / max(N, M)`` the optimum is a partial injection covering the
    smaller side with ``1 / max(N, M)`` on each matched pair.
    """
    c = CostMatrix.coerce(C).values
    n, m = c.shape
    m_default = default_mass(n, m)
    if mass is None:
        mass = m_default
    mass = float(mass)
    if not mass > 0:
        raise InfeasibleMass(f"mass must be positive, got {mass}")
    if mass > 1.0 + _MASS_TOL:
        raise InfeasibleMass(f"mass {mass} exceeds the available mass 1")
    if abs(mass - m_default) <= _MASS_TOL:
        return _assignment_plan(c)

    # Dummy row/column absorb the untransported mass; the corner arc is priced
    # so that routing mass through it is never optimal.
    mass = min(mass, 1.0)
    corner = 2.0 * float(np.max(np.abs(c))) + 1.0
    ext = np.zeros((n + 1, m + 1))
    ext[:n, :m] = c
    ext[n, m] = corner
    supply = np.append(np.full(n, 1.0 / n), 1.0 - mass)
    demand = np.append(np.full(m, 1.0 / m), 1.0 - mass)
    dense = network_simplex(ext, supply, demand)[:n, :m]
    return _with_objective(TransportPlan.from_dense(dense), c)


def naive_match(C) -> Matching:
    """Greedy matching: repeatedly take the smallest remaining entry.

    Ties go to the first entry in row-major order.  Stops after
    ``min(N, M)`` pairs.
    """
    c = np.array(CostMatrix.coerce(C).values)
    n, m = c.shape
    pairs = []
    for _ in range(min(n, m)):
        i, j = divmod(int(np.argmin(c)), m)
        pairs.append((i, j))
        c[i, :] = np.inf
        c[:, j] = np.inf
    return Matching(tuple(pairs), MatchSource.NAIVE)


def binarize(plan: TransportPlan, source: MatchSource | str = MatchSource.OT) -> Matching:
    """Round a soft plan to a one-to-one matching.

    Each row keeps its largest entry if that entry carries at least half of
    the row's mass.  Column clashes are resolved in favour of the larger
    mass, then the smaller row index.
    """
    dense = plan.to_dense()
    row_mass = dense.sum(axis=1)
    best = {}
    for i in np.flatnonzero(row_mass > 0):
        j = int(np.argmax(dense[i]))
        x = dense[i, j]
        if x >= 0.5 * row_mass[i]:
            prev = best.get(j)
            if prev is None or x > prev[1]:
                best[j] = (int(i), x)
    pairs = sorted((i, j) for j, (i, _) in best.items())
    return Matching(tuple(pairs), source)


def plan_objective(C, plan: TransportPlan) -> float:
    c = CostMatrix.coerce(C).values
    if c.shape != plan.shape:
        raise ShapeMismatch(f"cost matrix {c.shape} and plan {plan.shape} differ in shape")
    return float(np.dot(plan.mass, c[plan.row_index, plan.col_index]))
