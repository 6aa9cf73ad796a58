"""Euclidean primitives on points stored as tuples of floats.

Points are plain ``tuple[float, ...]`` so they hash, compare
lexicographically and can be shared freely.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import UsageError

Point = tuple[float, ...]
Vector = tuple[float, ...]

EPS_NORM = 1e-12
EPS_SEB = 1e-9
MAX_DIMENSION = 8


def as_point(coords: Iterable[float]) -> Point:
    p = tuple(float(c) for c in coords)
    if not p:
        raise UsageError("a point needs at least one coordinate")
    if not all(math.isfinite(c) for c in p):
        raise UsageError(f"non-finite coordinate in {p!r}")
    return p


def _same_dim(a: Sequence[float], b: Sequence[float]) -> None:
    if len(a) != len(b):
        raise UsageError(f"dimension mismatch: {len(a)} vs {len(b)}")


def distance(a: Point, b: Point) -> float:
    _same_dim(a, b)
    return math.dist(a, b)


def midpoint(a: Point, b: Point) -> Point:
    _same_dim(a, b)
    return tuple((x + y) / 2 for x, y in zip(a, b))


def position_less(a: Point, b: Point) -> bool:
    """Lexicographic order: the first differing coordinate decides."""
    _same_dim(a, b)
    return tuple(a) < tuple(b)


def norm(v: Vector) -> float:
    return math.sqrt(sum(c * c for c in v))


def dot(a: Vector, b: Vector) -> float:
    _same_dim(a, b)
    return sum(x * y for x, y in zip(a, b))


def unit_vector(a: Point, b: Point) -> Vector:
    """Unit vector pointing from ``a`` toward ``b``."""
    d = distance(a, b)
    if d == 0:
        raise UsageError("unit vector between coincident points")
    return tuple((y - x) / d for x, y in zip(a, b))


@dataclass(frozen=True)
class Ball:
    center: Point
    radius: float

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise UsageError("ball radius must be nonnegative")

    def contains(self, p: Point, rel_tol: float = EPS_SEB) -> bool:
        return math.dist(self.center, p) <= self.radius * (1 + rel_tol) + 1e-15


def _circumball(support: Sequence[Point]) -> Optional[Ball]:
    """Smallest ball having every support point on its boundary.

    The center lies in the affine hull of the support. Returns None when the
    support is affinely dependent (no such ball, or not unique). Supports of
    two and three points use closed forms; larger ones the Gram system.
    """
    if len(support) == 2:
        a, b = support
        return Ball(midpoint(a, b), math.dist(a, b) / 2)
    if len(support) == 3:
        return _circumball3(*support)
    return _circumball_gram(support)


def _circumball_gram(support: Sequence[Point]) -> Optional[Ball]:
    """General circumball: solve V V^T lam = |V|^2 / 2 for the center
    p0 + lam V, where V holds the support offsets from p0."""
    if not support:
        return None
    p0 = np.asarray(support[0], dtype=float)
    if len(support) == 1:
        return Ball(tuple(p0.tolist()), 0.0)
    V = np.asarray(support[1:], dtype=float) - p0
    gram = V @ V.T
    rhs = 0.5 * np.einsum("ij,ij->i", V, V)
    try:
        lam = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(lam)):
        return None
    # near-singular Gram matrices yield huge coefficients
    if np.linalg.cond(gram) > 1e12:
        return None
    offset = lam @ V
    center = p0 + offset
    radius = float(max(np.linalg.norm(np.asarray(support, dtype=float) - center, axis=1)))
    return Ball(tuple(center.tolist()), radius)


def _circumball3(a: Point, b: Point, c: Point) -> Optional[Ball]:
    """Circumcircle of three points by the 2x2 Gram system, in plain floats."""
    u = [bi - ai for ai, bi in zip(a, b)]
    v = [ci - ai for ai, ci in zip(a, c)]
    g11 = sum(x * x for x in u)
    g22 = sum(x * x for x in v)
    g12 = sum(x * y for x, y in zip(u, v))
    det = g11 * g22 - g12 * g12
    # same rejection threshold as the general path (condition number ~1e12)
    if not det > 1e-12 * (g11 + g22) ** 2:
        return None
    r1, r2 = g11 / 2, g22 / 2
    l1 = (r1 * g22 - r2 * g12) / det
    l2 = (r2 * g11 - r1 * g12) / det
    center = tuple(ai + l1 * x + l2 * y for ai, x, y in zip(a, u, v))
    radius = max(math.dist(center, a), math.dist(center, b), math.dist(center, c))
    return Ball(center, radius)


def _welzl(points: list[Point], boundary: list[Point], d: int) -> Ball:
    ball = _circumball(boundary) if boundary else Ball(points[0], 0.0)
    if ball is None:
        ball = Ball(boundary[0], 0.0)
    if len(boundary) == d + 1:
        return ball
    for i, p in enumerate(points):
        if not ball.contains(p, 1e-12):
            ball = _welzl(points[:i], boundary + [p], d)
    return ball


def smallest_enclosing_ball(points: Iterable[Point], seed: int = 0) -> Ball:
    """Minimum-radius ball containing all ``points``.

    Randomized incremental (move-to-boundary) construction; the recursion
    depth is bounded by the support size, not by the number of points.
    """
    pts = sorted(set(tuple(p) for p in points))
    if not pts:
        raise UsageError("smallest enclosing ball of an empty set")
    d = len(pts[0])
    if any(len(p) != d for p in pts):
        raise UsageError("points of mixed dimension")
    if len(pts) == 1:
        return Ball(pts[0], 0.0)
    random.Random(seed).shuffle(pts)
    ball = _welzl(pts, [], d)
    # the support set fixes the ball; report the true covering radius
    r = max(math.dist(ball.center, p) for p in pts)
    return Ball(ball.center, r)


def seb_bruteforce(points: Iterable[Point]) -> Ball:
    """Reference smallest enclosing ball by exhaustive support search.

    Every subset of at most d+1 points spans a candidate circumball; the
    smallest candidate covering all points wins. Exponential, meant for
    checking ``smallest_enclosing_ball`` on small inputs.
    """
    pts = sorted(set(tuple(p) for p in points))
    if not pts:
        raise UsageError("smallest enclosing ball of an empty set")
    d = len(pts[0])
    best: Optional[Ball] = None
    for k in range(1, min(d + 1, len(pts)) + 1):
        for subset in itertools.combinations(pts, k):
            # numpy route only, so the incremental closed forms are cross-checked
            ball = _circumball_gram(subset)
            if ball is None:
                continue
            if best is not None and ball.radius >= best.radius:
                continue
            if all(ball.contains(p, 1e-10) for p in pts):
                best = ball
    assert best is not None
    return best


def orthonormal_complement_sample(
    x: Vector, sign: int = 1, direction: Optional[Sequence[float]] = None
) -> Vector:
    """Unit vector orthogonal to the unit vector ``x``.

    d == 2: ``sign=+1`` rotates ``x`` by +90 degrees, ``sign=-1`` by -90.
    d >= 3: ``direction`` (any vector) is projected on the orthogonal
    complement of ``x``; without it the most-orthogonal standard basis vector
    is used. ``sign`` flips the result.
    """
    d = len(x)
    if d < 2:
        raise UsageError("no orthogonal direction exists in dimension 1")
    if abs(norm(x) - 1) > 1e-9:
        raise UsageError("x must be a unit vector")
    s = 1.0 if sign >= 0 else -1.0
    if d == 2:
        return (-s * x[1], s * x[0])
    xv = np.asarray(x, dtype=float)
    candidates = []
    if direction is not None:
        if len(direction) != d:
            raise UsageError("direction has the wrong dimension")
        candidates.append(np.asarray(direction, dtype=float))
    for k in np.argsort(np.abs(xv), kind="stable"):
        e = np.zeros(d)
        e[k] = 1.0
        candidates.append(e)
    for v in candidates:
        y = v - (v @ xv) * xv
        y = y - (y @ xv) * xv
        n = np.linalg.norm(y)
        if n > 1e-6 * max(1.0, np.linalg.norm(v)):
            return tuple((s * y / n).tolist())
    raise UsageError("could not build an orthogonal direction")
