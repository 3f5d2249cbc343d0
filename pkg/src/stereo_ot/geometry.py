"""Two-view pinhole geometry and the pairwise matching costs.

All image points are handled in homogeneous form ``(u, v, 1)``.  The left
camera sits at the origin looking along ``+z``; the right camera maps a point
``w`` to ``K_r (R w + t)``.  Three costs between a left point ``x`` and a
right point ``y`` are provided:

* :func:`ray_distance` -- distance between the two back-projected viewing
  rays, falling back to the baseline length when the closest approach is
  not in front of both cameras,
* :func:`regularized_ray_distance` -- the above plus a quadratic hinge on
  the depth of the closest-approach midpoint,
* :func:`epipolar_distance` -- mean point-to-epipolar-line distance in the
  two images.

Scalar functions work on one pair at a time; :func:`pairwise_cost` evaluates
a whole cost matrix with vectorised numpy code.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    BehindCamera,
    BehindCameraWarning,
    DegenerateEpipole,
    DegenerateRig,
    ParallelRays,
    ValidationError,
)
from .transport import CostMatrix

#: Rays count as parallel when ``|r_x x r_y| <= PARALLEL_EPS |r_x| |r_y|``.
PARALLEL_EPS = 1e-12
#: Epipolar lines with ``|P2 F x| <= DEGENERATE_EPS |F x|`` use the fallback branch.
DEGENERATE_EPS = 1e-12

_ORTHO_TOL = 1e-9


class ImagePoint(NamedTuple):
    """Image observation ``(u, v)``; the homogeneous lift is ``(u, v, 1)``."""

    u: float
    v: float

    @property
    def homogeneous(self) -> np.ndarray:
        return np.array([self.u, self.v, 1.0])


class Ray3(NamedTuple):
    direction: np.ndarray
    origin: np.ndarray


class ClosestPointSolution(NamedTuple):
    """Endpoints of the shortest segment between two non-parallel lines."""

    b_left: np.ndarray
    b_right: np.ndarray
    n_left: np.ndarray
    n_right: np.ndarray
    midpoint_depth: float

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.b_left + self.b_right)

    @property
    def gap(self) -> float:
        return float(np.linalg.norm(self.b_left - self.b_right))


class FundamentalMatrix(NamedTuple):
    matrix: np.ndarray
    skew_t: np.ndarray


class Side(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class DistanceKind(str, enum.Enum):
    EPIPOLAR = "epi"
    RAY = "ray"
    REGULARIZED = "reg"


@dataclass(frozen=True)
class DepthRegParams:
    """Soft depth band ``[gamma_low, gamma_high]`` with penalty weight ``beta``."""

    beta: float
    gamma_low: float
    gamma_high: float

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValidationError(f"beta must be >= 0, got {self.beta}")
        if not self.gamma_low < self.gamma_high:
            raise ValidationError(
                f"gamma_low must be < gamma_high, got {self.gamma_low} >= {self.gamma_high}"
            )


@dataclass(frozen=True)
class DistanceSpec:
    kind: DistanceKind
    reg: DepthRegParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DistanceKind(self.kind))
        if (self.kind is DistanceKind.REGULARIZED) != (self.reg is not None):
            raise ValidationError("depth regularization parameters are required exactly for kind 'reg'")

    @classmethod
    def epipolar(cls) -> DistanceSpec:
        return cls(DistanceKind.EPIPOLAR)

    @classmethod
    def ray(cls) -> DistanceSpec:
        return cls(DistanceKind.RAY)

    @classmethod
    def regularized(cls, beta: float, gamma_low: float, gamma_high: float) -> DistanceSpec:
        return cls(DistanceKind.REGULARIZED, DepthRegParams(beta, gamma_low, gamma_high))

    @property
    def label(self) -> str:
        return self.kind.value

    def describe(self) -> dict:
        out = {"kind": self.kind.value}
        if self.reg is not None:
            out.update(beta=self.reg.beta, gamma_low=self.reg.gamma_low, gamma_high=self.reg.gamma_high)
        return out


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def check_intrinsics(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    if k.shape != (3, 3):
        raise DegenerateRig(f"intrinsic matrix must be 3x3, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise DegenerateRig("intrinsic matrix has non-finite entries")
    if np.any(np.tril(k, -1) != 0):
        raise DegenerateRig("intrinsic matrix must be upper triangular")
    if np.any(np.diag(k) <= 0):
        raise DegenerateRig("intrinsic matrix must have a positive diagonal")
    return k


def check_rotation(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise DegenerateRig(f"rotation must be 3x3, got shape {r.shape}")
    if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL, rtol=0):
        raise DegenerateRig("rotation is not orthogonal")
    if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
        raise DegenerateRig("rotation must have determinant +1")
    return r


@dataclass(frozen=True, eq=False)
class StereoRig:
    """Intrinsics of both cameras and the pose of the right camera.

    A world point ``w`` (expressed in the left camera frame) projects to
    ``K_left w`` and ``K_right (rotation @ w + translation)``.
    """

    k_left: np.ndarray
    k_right: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise DegenerateRig("translation must be a finite 3-vector")
        if not np.linalg.norm(t) > 0:
            raise DegenerateRig("translation must be nonzero (coincident focal points)")
        object.__setattr__(self, "k_left", _frozen(check_intrinsics(self.k_left)))
        object.__setattr__(self, "k_right", _frozen(check_intrinsics(self.k_right)))
        object.__setattr__(self, "rotation", _frozen(check_rotation(self.rotation)))
        object.__setattr__(self, "translation", _frozen(t))
        object.__setattr__(self, "_kl_inv", _frozen(np.linalg.inv(self.k_left)))
        object.__setattr__(self, "_kr_inv", _frozen(np.linalg.inv(self.k_right)))

    @classmethod
    def rectified(cls, baseline: float = 1.0) -> StereoRig:
        """Identity intrinsics, no rotation, right camera at ``(baseline, 0, 0)``."""
        return cls(np.eye(3), np.eye(3), np.eye(3), np.array([-baseline, 0.0, 0.0]))

    @property
    def k_left_inv(self) -> np.ndarray:
        return self._kl_inv

    @property
    def k_right_inv(self) -> np.ndarray:
        return self._kr_inv

    @property
    def right_center(self) -> np.ndarray:
        """Focal point of the right camera in the left frame, ``-R^T t``."""
        return -self.rotation.T @ self.translation

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.translation))

    def __eq__(self, other):
        if not isinstance(other, StereoRig):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("k_left", "k_right", "rotation", "translation")
        )

    __hash__ = None

    def as_dict(self) -> dict:
        return {
            "K_left": self.k_left.tolist(),
            "K_right": self.k_right.tolist(),
            "R": self.rotation.tolist(),
            "t": self.translation.tolist(),
        }


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(a) @ b == np.cross(a, b)``."""
    a, b, c = np.asarray(v, dtype=float)
    return np.array([[0.0, -c, b], [c, 0.0, -a], [-b, a, 0.0]])


def homogenize(points) -> np.ndarray:
    """Lift ``(..., 2)`` image coordinates to ``(..., 3)`` with last entry one."""
    p = np.asarray(points, dtype=float)
    if p.shape[-1] == 3:
        return p
    if p.shape[-1] != 2:
        raise ValidationError(f"image points must have 2 coordinates, got shape {p.shape}")
    return np.concatenate([p, np.ones(p.shape[:-1] + (1,))], axis=-1)


def reduce_general_rig(k_l, k_r, r_l, r_r, t_l, t_r) -> StereoRig:
    """Express a rig with two posed cameras in the left camera's frame.

    The general model maps a world point ``p`` to ``K_l (R_l p + t_l)`` and
    ``K_r (R_r p + t_r)``.  With ``w = R_l p + t_l`` this becomes the canonical
    model with ``R = R_r R_l^T`` and ``t = t_r - R t_l``.
    """
    r_l = check_rotation(r_l)
    r_r = check_rotation(r_r)
    t_l = np.asarray(t_l, dtype=float).reshape(3)
    t_r = np.asarray(t_r, dtype=float).reshape(3)
    rot = r_r @ r_l.T
    t = t_r - rot @ t_l
    if not np.linalg.norm(t) > 0:
        raise DegenerateRig("both cameras share the same focal point")
    return StereoRig(k_l, k_r, rot, t)


def project(rig: StereoRig, w, side: Side | str = Side.LEFT) -> tuple[ImagePoint, float]:
    """Project a 3D point into one camera; returns the image point and its depth."""
    w = np.asarray(w, dtype=float).reshape(3)
    if Side(side) is Side.LEFT:
        p = rig.k_left @ w
    else:
        p = rig.k_right @ (rig.rotation @ w + rig.translation)
    depth = float(p[2])
    if not depth > 0:
        raise BehindCamera(f"point {w.tolist()} has depth {depth} in the {Side(side).value} camera")
    return ImagePoint(float(p[0] / depth), float(p[1] / depth)), depth


def project_points(rig: StereoRig, world, side: Side | str = Side.LEFT) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`project` for an ``(n, 3)`` array; returns ``(uv, depth)``."""
    world = np.asarray(world, dtype=float).reshape(-1, 3)
    if Side(side) is Side.LEFT:
        p = world @ rig.k_left.T
    else:
        p = (world @ rig.rotation.T + rig.translation) @ rig.k_right.T
    depth = p[:, 2]
    if np.any(~(depth > 0)):
        bad = int(np.flatnonzero(~(depth > 0))[0])
        raise BehindCamera(f"point {bad} has depth {depth[bad]} in the {Side(side).value} camera")
    return p[:, :2] / depth[:, None], depth


def is_in_front(rig: StereoRig, w) -> bool:
    w = np.asarray(w, dtype=float).reshape(3)
    return bool(w[2] > 0 and rig.rotation[2] @ w + rig.translation[2] > 0)


def _in_front_mask(rig: StereoRig, pts: np.ndarray) -> np.ndarray:
    return (pts[..., 2] > 0) & (pts @ rig.rotation[2] + rig.translation[2] > 0)


def back_rays(rig: StereoRig, x, y) -> tuple[Ray3, Ray3]:
    """Viewing rays of ``x`` (left image) and ``y`` (right image) in the left frame."""
    rx = rig.k_left_inv @ homogenize(x)
    ry = rig.rotation.T @ (rig.k_right_inv @ homogenize(y))
    return Ray3(rx, np.zeros(3)), Ray3(ry, rig.right_center)


def _is_parallel(cross_norm, rx_norm, ry_norm):
    return cross_norm <= PARALLEL_EPS * rx_norm * ry_norm


def closest_points(left: Ray3, right: Ray3) -> ClosestPointSolution:
    """Closest points on two non-parallel lines.

    Raises :class:`ParallelRays` when the directions are (numerically) parallel.
    """
    rx, sx = np.asarray(left.direction, float), np.asarray(left.origin, float)
    ry, sy = np.asarray(right.direction, float), np.asarray(right.origin, float)
    cross = np.cross(rx, ry)
    if _is_parallel(np.linalg.norm(cross), np.linalg.norm(rx), np.linalg.norm(ry)):
        raise ParallelRays("rays are parallel")
    # n_left is normal to the plane spanned by r_x and the common normal;
    # intersecting that plane with the other line gives its closest point.
    n_left = np.cross(rx, cross)
    n_right = np.cross(ry, cross)
    b_left = sx + (np.dot(sy - sx, n_right) / np.dot(rx, n_right)) * rx
    b_right = sy + (np.dot(sx - sy, n_left) / np.dot(ry, n_left)) * ry
    depth = 0.5 * float(b_left[2] + b_right[2])
    return ClosestPointSolution(b_left, b_right, n_left, n_right, depth)


def depth_penalty(depth, params: DepthRegParams):
    """Quadratic hinge ``beta * dist(depth, [gamma_low, gamma_high])**2``."""
    d = np.asarray(depth, dtype=float)
    below = np.minimum(d - params.gamma_low, 0.0)
    above = np.maximum(d - params.gamma_high, 0.0)
    out = params.beta * (below**2 + above**2)
    return float(out) if out.ndim == 0 else out


def _ray_distance_and_depth(rig: StereoRig, x, y) -> tuple[float, float | None]:
    left, right = back_rays(rig, x, y)
    rx = left.direction
    rt_t = rig.rotation.T @ rig.translation
    try:
        sol = closest_points(left, right)
    except ParallelRays:
        return float(np.linalg.norm(np.cross(rx, rt_t)) / np.linalg.norm(rx)), None
    if is_in_front(rig, sol.b_left) and is_in_front(rig, sol.b_right):
        cross = np.cross(rx, right.direction)
        value = abs(np.dot(cross, rt_t)) / np.linalg.norm(cross)
    else:
        value = rig.baseline
    return float(value), sol.midpoint_depth


def ray_distance(rig: StereoRig, x, y) -> float:
    """Ray distance between a left image point ``x`` and a right image point ``y``.

    Not a metric: it is neither symmetric nor zero on the diagonal in general.
    """
    return _ray_distance_and_depth(rig, x, y)[0]


def regularized_ray_distance(rig: StereoRig, x, y, params: DepthRegParams) -> float:
    value, depth = _ray_distance_and_depth(rig, x, y)
    if depth is None:
        return value
    return value + depth_penalty(depth, params)


def fundamental_matrix(rig: StereoRig) -> FundamentalMatrix:
    t_x = skew(rig.translation)
    f = rig.k_right_inv.T @ t_x @ rig.rotation @ rig.k_left_inv
    return FundamentalMatrix(f, t_x)


def _line_distance(line: np.ndarray, p: np.ndarray) -> float:
    norm = np.hypot(line[0], line[1])
    if norm <= DEGENERATE_EPS * np.linalg.norm(line):
        return abs(float(line[2]))
    return abs(float(line @ p)) / float(norm)


def epipolar_distance(F: FundamentalMatrix | np.ndarray, x, y) -> float:
    """Average distance of ``y`` to the epipolar line of ``x`` and vice versa."""
    f = F.matrix if isinstance(F, FundamentalMatrix) else np.asarray(F, dtype=float)
    xh, yh = homogenize(x), homogenize(y)
    d_right = _line_distance(f @ xh, yh)
    d_left = _line_distance(f.T @ yh, xh)
    return 0.5 * (d_left + d_right)


def epipole(rig: StereoRig, side: Side | str) -> ImagePoint:
    """Image of the other camera's focal point.

    ``Side.LEFT`` gives the right focal point seen in the left image and
    ``Side.RIGHT`` the left focal point seen in the right image.
    """
    if Side(side) is Side.LEFT:
        p = rig.k_left @ rig.right_center
    else:
        p = rig.k_right @ rig.translation
    if abs(p[2]) <= DEGENERATE_EPS * np.linalg.norm(p):
        raise DegenerateEpipole(f"{Side(side).value} epipole is at infinity")
    return ImagePoint(float(p[0] / p[2]), float(p[1] / p[2]))


def epipolar_ray_contains(rig: StereoRig, F: FundamentalMatrix, x, y, tol: float = 1e-9) -> bool:
    """Whether ``y`` lies on the half of the epipolar line of ``x`` seen in front of both cameras."""
    xh, yh = homogenize(x), homogenize(y)
    line = F.matrix @ xh
    if abs(line @ yh) > tol * (1.0 + np.hypot(line[0], line[1])):
        return False
    t = rig.translation
    a = np.cross(t, rig.k_right_inv @ yh)
    b = np.cross(t, rig.rotation @ (rig.k_left_inv @ xh))
    return bool(a @ b > 0)


def triangulate(rig: StereoRig, x, y) -> np.ndarray:
    """Midpoint of the shortest segment between the two viewing rays.

    Emits :class:`BehindCameraWarning` when the midpoint is not in front of
    both cameras; the point is still returned.
    """
    sol = closest_points(*back_rays(rig, x, y))
    w = sol.midpoint
    if not is_in_front(rig, w):
        warnings.warn(f"triangulated point {w.tolist()} is behind a camera", BehindCameraWarning, stacklevel=2)
    return w


def triangulate_many(rig: StereoRig, X, Y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Triangulate row-aligned pairs ``(X[k], Y[k])``.

    Returns ``(points, in_front, valid)``; rows with parallel rays have
    ``valid == False`` and NaN coordinates.
    """
    rx = homogenize(X).reshape(-1, 3) @ rig.k_left_inv.T
    ry = homogenize(Y).reshape(-1, 3) @ (rig.rotation.T @ rig.k_right_inv).T
    if rx.shape != ry.shape:
        raise ValidationError("X and Y must have the same number of points")
    c = rig.right_center
    cross = np.cross(rx, ry)
    cn = np.linalg.norm(cross, axis=-1)
    valid = ~_is_parallel(cn, np.linalg.norm(rx, axis=-1), np.linalg.norm(ry, axis=-1))
    n_l = np.cross(rx, cross)
    n_r = np.cross(ry, cross)
    with np.errstate(divide="ignore", invalid="ignore"):
        b_l = (np.einsum("k,nk->n", c, n_r) / np.einsum("nk,nk->n", rx, n_r))[:, None] * rx
        b_r = c + (np.einsum("k,nk->n", -c, n_l) / np.einsum("nk,nk->n", ry, n_l))[:, None] * ry
    pts = 0.5 * (b_l + b_r)
    pts[~valid] = np.nan
    in_front = valid & _in_front_mask(rig, np.where(valid[:, None], pts, 0.0))
    return pts, in_front, valid


# -- vectorised cost matrices ------------------------------------------------

_CHUNK = 1 << 18


def _ray_block(rig: StereoRig, rx: np.ndarray, ry: np.ndarray, reg: DepthRegParams | None) -> np.ndarray:
    c = rig.right_center
    rt_t = -c
    cross = np.cross(rx[:, None, :], ry[None, :, :])
    cn = np.linalg.norm(cross, axis=-1)
    rxn = np.linalg.norm(rx, axis=-1)
    parallel = _is_parallel(cn, rxn[:, None], np.linalg.norm(ry, axis=-1)[None, :])
    safe = np.where(parallel, 1.0, cn)

    n_l = np.cross(rx[:, None, :], cross)
    n_r = np.cross(ry[None, :, :], cross)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_l = (n_r @ c) / np.einsum("nk,nmk->nm", rx, n_r)
        lam_r = (n_l @ -c) / np.einsum("mk,nmk->nm", ry, n_l)
    b_l = lam_l[..., None] * rx[:, None, :]
    b_r = c + lam_r[..., None] * ry[None, :, :]
    front = _in_front_mask(rig, b_l) & _in_front_mask(rig, b_r)

    line_gap = np.abs(cross @ rt_t) / safe
    par_gap = np.linalg.norm(np.cross(rx, rt_t), axis=-1) / rxn
    out = np.where(front, line_gap, rig.baseline)
    out = np.where(parallel, par_gap[:, None], out)
    if reg is not None:
        depth = 0.5 * (b_l[..., 2] + b_r[..., 2])
        pen = depth_penalty(np.where(parallel, reg.gamma_low, depth), reg)
        out = out + np.where(parallel, 0.0, pen)
    return out


def _epipolar_block(F: np.ndarray, xh: np.ndarray, yh: np.ndarray) -> np.ndarray:
    fx = xh @ F.T
    fty = yh @ F
    resid = np.abs(fx @ yh.T)

    def scale(lines):
        norm = np.hypot(lines[:, 0], lines[:, 1])
        degenerate = norm <= DEGENERATE_EPS * np.linalg.norm(lines, axis=-1)
        return degenerate, np.where(degenerate, 1.0, norm), np.abs(lines[:, 2])

    deg_r, nr, fb_r = scale(fx)
    deg_l, nl, fb_l = scale(fty)
    d_right = np.where(deg_r[:, None], fb_r[:, None], resid / nr[:, None])
    d_left = np.where(deg_l[None, :], fb_l[None, :], resid / nl[None, :])
    return 0.5 * (d_left + d_right)


def cost_values(rig: StereoRig, spec: DistanceSpec, X, Y) -> np.ndarray:
    """Dense ``(N, M)`` array of ``c(X[i], Y[j])`` for the selected distance."""
    xh = homogenize(np.asarray(X, dtype=float).reshape(-1, 2))
    yh = homogenize(np.asarray(Y, dtype=float).reshape(-1, 2))
    if len(xh) == 0 or len(yh) == 0:
        raise ValidationError("point sets must be nonempty")
    n, m = len(xh), len(yh)
    out = np.empty((n, m))
    if spec.kind is DistanceKind.EPIPOLAR:
        F = fundamental_matrix(rig).matrix
        block = lambda a, b: _epipolar_block(F, xh[a:b], yh)  # noqa: E731
    else:
        rx = xh @ rig.k_left_inv.T
        ry = yh @ (rig.rotation.T @ rig.k_right_inv).T
        block = lambda a, b: _ray_block(rig, rx[a:b], ry, spec.reg)  # noqa: E731
    step = max(1, _CHUNK // m)
    for a in range(0, n, step):
        out[a : a + step] = block(a, a + step)
    return out


def pairwise_cost(rig: StereoRig, spec: DistanceSpec, X: Sequence, Y: Sequence):
    """Cost matrix between left points ``X`` and right points ``Y``."""
    return CostMatrix(cost_values(rig, spec, X, Y), spec)
