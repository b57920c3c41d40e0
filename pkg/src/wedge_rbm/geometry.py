"""Planar wedge geometry: reflection vectors, convex cones, vertex-attraction predicates.

The wedge is S = {r >= 0, 0 <= theta <= xi} in polar coordinates.  Its lower
edge (positive x-axis) carries reflection direction v1, the edge at angle xi
carries v2.  Reflection angles theta1, theta2 are measured from the inward
normals, positive tilting toward the vertex, and each v_i is normalized so
that v_i . n_i = 1.  The ratio alpha = (theta1 + theta2) / xi splits the
parameter space into the regimes that govern existence of the reflected
process and the vertex-hitting behaviour of the absorbed one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, RegimeError

TWO_PI = 2.0 * math.pi

# Absolute tolerance for angular comparisons (double-precision trig budget).
ANGLE_TOL = 1e-10

REGIME_NONPOSITIVE = "nonpositive"
REGIME_ZERO_TO_ONE = "zero_to_one"
REGIME_ONE = "one"
REGIME_ONE_TO_TWO = "one_to_two"
REGIME_AT_LEAST_TWO = "at_least_two"

CONE_ZERO = "zero"
CONE_RAY = "ray"
CONE_LINE = "line"
CONE_SECTOR = "wedge_sector"
CONE_HALF_PLANE = "half_plane"
CONE_FULL_PLANE = "full_plane"


def _classify_regime(alpha: float) -> str:
    if alpha >= 2.0:
        return REGIME_AT_LEAST_TWO
    if alpha > 1.0:
        return REGIME_ONE_TO_TWO
    if alpha == 1.0:
        return REGIME_ONE
    if alpha > 0.0:
        return REGIME_ZERO_TO_ONE
    return REGIME_NONPOSITIVE


@dataclass(frozen=True, eq=False)
class WedgeGeometry:
    """Immutable wedge description; safe for concurrent shared reads.

    n1, n2 are the unit inward normals of the two edges, v1, v2 the
    reflection directions (columns of R), alpha the regime parameter.
    sin_xi / cos_xi are cached for the hot constraint loop.
    """

    xi: float
    theta1: float
    theta2: float
    n1: np.ndarray
    n2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    R: np.ndarray
    alpha: float
    regime: str
    sin_xi: float
    cos_xi: float

    @property
    def det_R(self) -> float:
        return self.R[0, 0] * self.R[1, 1] - self.R[0, 1] * self.R[1, 0]

    def __repr__(self) -> str:  # keep reports compact
        return (
            f"WedgeGeometry(xi={self.xi:.12g}, theta1={self.theta1:.12g}, "
            f"theta2={self.theta2:.12g}, alpha={self.alpha:.12g}, regime={self.regime!r})"
        )


def build_wedge(xi: float, theta1: float, theta2: float) -> WedgeGeometry:
    """Construct the wedge with opening xi and signed reflection angles theta_i.

    Requires 0 < xi < 2*pi and |theta_i| < pi/2 (finite tangents; grazing or
    reversed reflection is unsupported).  The unit tangents used to tilt the
    reflection vectors point toward the vertex, so positive theta_i means
    reflection toward the vertex.
    """
    if not (0.0 < xi < TWO_PI):
        raise GeometryError(f"wedge angle xi={xi!r} must lie in (0, 2*pi)")
    for name, th in (("theta1", theta1), ("theta2", theta2)):
        if not (abs(th) < math.pi / 2):
            raise GeometryError(f"{name}={th!r} must lie in (-pi/2, pi/2)")

    sin_xi = math.sin(xi)
    cos_xi = math.cos(xi)
    n1 = np.array([0.0, 1.0])
    n2 = np.array([sin_xi, -cos_xi])
    # Tangents toward the vertex: t1 = (-1, 0) on the lower edge,
    # t2 = (-cos xi, -sin xi) on the upper edge.
    v1 = np.array([-math.tan(theta1), 1.0])
    v2 = np.array(
        [sin_xi - math.tan(theta2) * cos_xi, -cos_xi - math.tan(theta2) * sin_xi]
    )
    R = np.column_stack([v1, v2])
    alpha = (theta1 + theta2) / xi
    for arr in (n1, n2, v1, v2, R):
        arr.setflags(write=False)
    return WedgeGeometry(
        xi=xi,
        theta1=theta1,
        theta2=theta2,
        n1=n1,
        n2=n2,
        v1=v1,
        v2=v2,
        R=R,
        alpha=alpha,
        regime=_classify_regime(alpha),
        sin_xi=sin_xi,
        cos_xi=cos_xi,
    )


def contains_mask(g: WedgeGeometry, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized membership of (x, y) in the closed wedge.

    Equivalent to the polar-angle test (angle in [0, xi], origin inside) but
    expressed through the edge normals, which is exact on the edges where the
    constrained dynamics actually land points.
    """
    lower = y >= 0.0
    if g.xi == math.pi:
        return lower
    upper = g.sin_xi * x - g.cos_xi * y >= 0.0
    if g.xi < math.pi:
        return lower & upper
    return lower | upper


def wedge_contains(g: WedgeGeometry, p) -> bool:
    """True iff the point's polar angle lies in [0, xi]; the vertex is inside."""
    p = np.asarray(p, dtype=float)
    return bool(contains_mask(g, p[..., 0], p[..., 1]))


def boundary_distance(g: WedgeGeometry, pts: np.ndarray) -> np.ndarray:
    """Distance from points (..., 2) to the wedge boundary (both edge rays + vertex)."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    r = np.hypot(x, y)
    d1 = np.where(x >= 0.0, np.abs(y), r)
    s2 = x * g.cos_xi + y * g.sin_xi
    perp2 = np.abs(-x * g.sin_xi + y * g.cos_xi)
    d2 = np.where(s2 >= 0.0, perp2, r)
    return np.minimum(d1, d2)


def set_distance(g: WedgeGeometry, pts: np.ndarray) -> np.ndarray:
    """Distance from points to the closed wedge S (zero inside)."""
    pts = np.asarray(pts, dtype=float)
    inside = contains_mask(g, pts[..., 0], pts[..., 1])
    return np.where(inside, 0.0, boundary_distance(g, pts))


# ---------------------------------------------------------------------------
# Convex cones in the plane
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Cone2D:
    """Closed convex cone in R^2 with vertex at the origin.

    kind is one of zero / ray / line / wedge_sector / half_plane / full_plane.
    angular_interval = (start, end) holds the spanned directions for the
    sector-like kinds (ray: start == end; half_plane: end = start + pi; line:
    the two endpoint directions only).
    """

    generators: np.ndarray
    kind: str
    angular_interval: tuple[float, float] | None

    def contains(self, p, tol: float = ANGLE_TOL) -> bool:
        """Membership of a point, by angle, with absolute angular tolerance."""
        p = np.asarray(p, dtype=float)
        if np.hypot(p[0], p[1]) == 0.0:
            return True  # every closed cone contains its vertex
        if self.kind == CONE_ZERO:
            return False
        if self.kind == CONE_FULL_PLANE:
            return True
        ang = math.atan2(p[1], p[0]) % TWO_PI
        a, b = self.angular_interval
        if self.kind == CONE_RAY:
            return _angle_dist(ang, a) <= tol
        if self.kind == CONE_LINE:
            return min(_angle_dist(ang, a), _angle_dist(ang, b)) <= tol
        # sector-like: offset from the start direction within the width
        width = (b - a) % TWO_PI
        if self.kind == CONE_HALF_PLANE:
            width = math.pi
        return (ang - a) % TWO_PI <= width + tol or _angle_dist(ang, a) <= tol


def _angle_dist(a: float, b: float) -> float:
    d = (a - b) % TWO_PI
    return min(d, TWO_PI - d)


def _merge_directions(angles: list[float], tol: float) -> list[float]:
    """Deduplicate directions mod 2*pi within an absolute tolerance."""
    if not angles:
        return []
    angles = sorted(a % TWO_PI for a in angles)
    merged = [angles[0]]
    for a in angles[1:]:
        if a - merged[-1] > tol:
            merged.append(a)
    # wraparound: last may coincide with first + 2*pi
    if len(merged) > 1 and (TWO_PI - merged[-1]) + merged[0] <= tol:
        merged.pop()
    return merged


def cone_hull(vectors) -> Cone2D:
    """Closed convex cone generated by the given vectors (zero vectors ignored)."""
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    gens = np.array([v for v in vecs if np.hypot(v[0], v[1]) > 0.0]).reshape(-1, 2)
    gens.setflags(write=False)
    dirs = _merge_directions(
        [math.atan2(v[1], v[0]) for v in gens], ANGLE_TOL
    )
    if not dirs:
        return Cone2D(gens, CONE_ZERO, None)
    if len(dirs) == 1:
        a = dirs[0]
        return Cone2D(gens, CONE_RAY, (a, a))

    # Smallest closed arc containing all directions: complement of the
    # largest circular gap between consecutive directions.
    gaps = [dirs[i + 1] - dirs[i] for i in range(len(dirs) - 1)]
    gaps.append(TWO_PI - dirs[-1] + dirs[0])
    i_max = max(range(len(gaps)), key=gaps.__getitem__)
    width = TWO_PI - gaps[i_max]
    start = dirs[(i_max + 1) % len(dirs)]

    if width <= ANGLE_TOL:
        return Cone2D(gens, CONE_RAY, (start, start))
    if width < math.pi - ANGLE_TOL:
        return Cone2D(gens, CONE_SECTOR, (start, start + width))
    if width <= math.pi + ANGLE_TOL:
        # Endpoints are antipodal: a bare pair spans only the line; any
        # direction strictly inside the arc fills the half-plane.
        has_interior = any(
            _angle_dist(d, start) > ANGLE_TOL
            and _angle_dist(d, start + math.pi) > ANGLE_TOL
            for d in dirs
        )
        kind = CONE_HALF_PLANE if has_interior else CONE_LINE
        return Cone2D(gens, kind, (start, start + math.pi))
    return Cone2D(gens, CONE_FULL_PLANE, None)


def _arcs_intersect(s1: float, w1: float, s2: float, w2: float, tol: float) -> bool:
    """Whether closed circular arcs [s1, s1+w1] and [s2, s2+w2] share a direction."""
    return ((s2 - s1) % TWO_PI <= w1 + tol) or ((s1 - s2) % TWO_PI <= w2 + tol)


def _cone_meets_wedge(g: WedgeGeometry, cone: Cone2D, tol: float = ANGLE_TOL) -> bool:
    """Whether the cone intersects S in more than the origin."""
    if cone.kind == CONE_ZERO:
        return False
    if cone.kind == CONE_FULL_PLANE:
        return True
    a, b = cone.angular_interval
    if cone.kind == CONE_RAY:
        return (a % TWO_PI) <= g.xi + tol
    if cone.kind == CONE_LINE:
        return ((a % TWO_PI) <= g.xi + tol) or (((a + math.pi) % TWO_PI) <= g.xi + tol)
    width = math.pi if cone.kind == CONE_HALF_PLANE else (b - a) % TWO_PI
    return _arcs_intersect(a % TWO_PI, width, 0.0, g.xi, tol)


def vertex_attraction_condition(g: WedgeGeometry, mu) -> bool:
    """Whether the cone generated by {v1, v2, mu} meets S only at the origin.

    Only defined for alpha >= 1, where it decides whether the absorbed
    process reaches the vertex with probability one.  For alpha > 1 the
    result coincides with the sign test on R^{-1} mu (at least one
    non-negative component).
    """
    if g.alpha < 1.0:
        raise RegimeError(
            f"vertex attraction condition is consulted only for alpha >= 1 "
            f"(got alpha={g.alpha:.6g})"
        )
    cone = cone_hull([g.v1, g.v2, np.asarray(mu, dtype=float)])
    return not _cone_meets_wedge(g, cone)


def boundary_cone(g: WedgeGeometry, p, tol: float = 1e-9) -> Cone2D:
    """Admissible pushing directions at a point of S.

    Ray along v_i on edge i, the full plane at the vertex, the zero cone in
    the interior.  Points must lie in S (within tol).
    """
    p = np.asarray(p, dtype=float)
    if set_distance(g, p) > tol:
        raise GeometryError(f"point {p.tolist()} lies outside the wedge")
    x, y = float(p[0]), float(p[1])
    if math.hypot(x, y) <= tol:
        return Cone2D(np.empty((0, 2)), CONE_FULL_PLANE, None)
    if abs(y) <= tol and x > 0.0:
        a = math.atan2(g.v1[1], g.v1[0]) % TWO_PI
        return Cone2D(np.array([g.v1]), CONE_RAY, (a, a))
    s2 = x * g.cos_xi + y * g.sin_xi
    if abs(-x * g.sin_xi + y * g.cos_xi) <= tol and s2 > 0.0:
        a = math.atan2(g.v2[1], g.v2[0]) % TWO_PI
        return Cone2D(np.array([g.v2]), CONE_RAY, (a, a))
    return Cone2D(np.empty((0, 2)), CONE_ZERO, None)
