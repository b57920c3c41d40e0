"""Certified C^2 test functions for the submartingale diagnostics.

The diagnostics need smooth bounded functions that are constant near the
origin and whose directional derivatives along the reflection vectors are
non-negative on the corresponding edges.  Each constructed function carries
machine-checked certificates: per-edge minima of D_i f on a log-spaced
boundary grid, and finite-difference agreement of the supplied gradient and
Laplacian with the function itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import CertificateError, GeometryError
from .geometry import WedgeGeometry, contains_mask

#: grid size per edge for boundary-derivative certification
_N_BOUNDARY = 10_000


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Evaluator bundle (f, grad f, laplacian f) with admissibility certificates.

    boundary_certificates holds (min D_1 f on edge 1, min D_2 f on edge 2)
    over the certification grid, or None when never certified.
    origin_constancy_radius > 0 means f is constant on that ball around the
    vertex (within S).
    """

    eval_f: Callable[[np.ndarray], np.ndarray]
    eval_grad: Callable[[np.ndarray], np.ndarray]
    eval_laplacian: Callable[[np.ndarray], np.ndarray]
    origin_constancy_radius: float
    boundary_certificates: tuple[float, float] | None
    label: str = "test-function"

    @property
    def admissible(self) -> bool:
        if self.boundary_certificates is None or self.origin_constancy_radius <= 0.0:
            return False
        return min(self.boundary_certificates) >= -1e-12

    def __call__(self, pts) -> np.ndarray:
        return self.eval_f(np.asarray(pts, dtype=float))


def _quintic_smoothstep(w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C^2 ramp 0 -> 1 on [0, 1] with value, first and second derivative."""
    w = np.clip(w, 0.0, 1.0)
    s = w**3 * (10.0 + w * (-15.0 + 6.0 * w))
    s1 = 30.0 * w**2 * (w - 1.0) ** 2
    s2 = 60.0 * w * (w - 1.0) * (2.0 * w - 1.0)
    return s, s1, s2


def _ramp(u: np.ndarray, a: float, b: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Smoothstep in u from 0 below a to 1 above b, with derivatives in u."""
    scale = b - a
    s, s1, s2 = _quintic_smoothstep((u - a) / scale)
    return s, s1 / scale, s2 / scale**2


def _saturate(y: np.ndarray, c: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """h2: identity below c, C^2 quartic blend on [c, 2c], constant 3c/2 above."""
    t = np.clip(y - c, 0.0, c)
    # value c + t - t^3/c^2 + t^4/(2 c^3): slope 1 and curvature 0 at t=0,
    # slope and curvature 0 at t=c, so the constant continuation stays C^2.
    h = c + t - t**3 / c**2 + t**4 / (2.0 * c**3)
    h1 = 1.0 - 3.0 * t**2 / c**2 + 2.0 * t**3 / c**3
    h2 = -6.0 * t / c**2 + 6.0 * t**2 / c**3
    below = y <= c
    h = np.where(below, y, h)
    h1 = np.where(below, 1.0, h1)
    h2 = np.where(below, 0.0, h2)
    return h, h1, h2


def verify_derivatives(
    tf: TestFunction,
    g: WedgeGeometry,
    n_points: int = 200,
    seed: int = 7,
    grad_rtol: float = 1e-6,
    lap_rtol: float = 1e-4,
) -> None:
    """Check the supplied gradient/Laplacian against finite differences.

    Uses centered stencils at random interior points, with tolerances
    relative to the sampled magnitude scale.  Raises CertificateError on
    disagreement.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    # interior sample: radii and angles strictly inside the wedge
    r = rng.uniform(0.05, 3.0, n_points)
    th = rng.uniform(0.02, 0.98, n_points) * g.xi
    pts = np.column_stack([r * np.cos(th), r * np.sin(th)])

    h = 1e-6
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    fd_gx = (tf.eval_f(pts + ex) - tf.eval_f(pts - ex)) / (2 * h)
    fd_gy = (tf.eval_f(pts + ey) - tf.eval_f(pts - ey)) / (2 * h)
    grad = tf.eval_grad(pts)
    scale = max(1.0, float(np.abs(grad).max()))
    err = max(
        float(np.abs(fd_gx - grad[:, 0]).max()), float(np.abs(fd_gy - grad[:, 1]).max())
    )
    if err > grad_rtol * scale:
        raise CertificateError(
            f"{tf.label}: gradient disagrees with centered differences "
            f"(err={err:.3e}, scale={scale:.3e})"
        )

    hl = 3e-5
    exl = np.array([hl, 0.0])
    eyl = np.array([0.0, hl])
    f0 = tf.eval_f(pts)
    fd_lap = (
        tf.eval_f(pts + exl)
        + tf.eval_f(pts - exl)
        + tf.eval_f(pts + eyl)
        + tf.eval_f(pts - eyl)
        - 4.0 * f0
    ) / hl**2
    lap = tf.eval_laplacian(pts)
    lscale = max(1.0, float(np.abs(lap).max()))
    lerr = float(np.abs(fd_lap - lap).max())
    if lerr > lap_rtol * lscale:
        raise CertificateError(
            f"{tf.label}: laplacian disagrees with the 5-point stencil "
            f"(err={lerr:.3e}, scale={lscale:.3e})"
        )


def _boundary_grid(g: WedgeGeometry, r_max: float) -> tuple[np.ndarray, np.ndarray]:
    """Log-spaced points on both edges, dense toward the vertex."""
    r = np.geomspace(1e-8 * r_max, r_max, _N_BOUNDARY)
    edge1 = np.column_stack([r, np.zeros_like(r)])
    edge2 = np.column_stack([r * g.cos_xi, r * g.sin_xi])
    return edge1, edge2


def certify_test_function(
    g: WedgeGeometry,
    eval_f: Callable,
    eval_grad: Callable,
    eval_laplacian: Callable,
    origin_constancy_radius: float,
    r_max: float,
    label: str = "test-function",
    check_derivatives: bool = True,
) -> TestFunction:
    """Assemble a TestFunction and compute its boundary certificates.

    Does not reject sign failures: the certificates record the measured
    minima, and `admissible` reports whether they are non-negative.
    """
    tf = TestFunction(
        eval_f=eval_f,
        eval_grad=eval_grad,
        eval_laplacian=eval_laplacian,
        origin_constancy_radius=origin_constancy_radius,
        boundary_certificates=None,
        label=label,
    )
    if check_derivatives:
        verify_derivatives(tf, g)
    edge1, edge2 = _boundary_grid(g, r_max)
    d1 = eval_grad(edge1) @ g.v1
    d2 = eval_grad(edge2) @ g.v2
    certs = (float(d1.min()), float(d2.min()))
    return TestFunction(
        eval_f=eval_f,
        eval_grad=eval_grad,
        eval_laplacian=eval_laplacian,
        origin_constancy_radius=origin_constancy_radius,
        boundary_certificates=certs,
        label=label,
    )


def make_f_eps_C(g: WedgeGeometry, eps: float, C: float) -> TestFunction:
    """The slab test function h1(x - y cot xi) * h2(y).

    Vanishes off the sub-wedge shifted by eps/3 along the x-axis, equals y on
    the sub-wedge shifted by 2 eps/3 where y <= C, and is constant near the
    origin.  h1 is a C^2 quintic ramp on [eps/3, 2 eps/3]; h2 saturates
    smoothly on [C, 2C].  Requires 0 < xi < pi; at xi = pi/2 the shift
    coefficient cot(xi) is exactly zero.
    """
    if not (0.0 < g.xi < math.pi):
        raise GeometryError(
            f"the slab construction needs 0 < xi < pi (got xi={g.xi:.6g})"
        )
    if eps <= 0.0 or C <= 0.0:
        raise ValueError("eps and C must be positive")
    cot = 0.0 if g.xi == math.pi / 2 else g.cos_xi / g.sin_xi
    a, b = eps / 3.0, 2.0 * eps / 3.0

    def parts(pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        u = x - y * cot
        return x, y, u

    def f(pts):
        _, y, u = parts(pts)
        h1, _, _ = _ramp(u, a, b)
        h2, _, _ = _saturate(y, C)
        return h1 * h2

    def grad(pts):
        _, y, u = parts(pts)
        h1, d1, _ = _ramp(u, a, b)
        h2, e1, _ = _saturate(y, C)
        gx = d1 * h2
        gy = -cot * d1 * h2 + h1 * e1
        return np.stack([gx, gy], axis=-1)

    def lap(pts):
        _, y, u = parts(pts)
        h1, d1, d2 = _ramp(u, a, b)
        h2, e1, e2 = _saturate(y, C)
        return (1.0 + cot * cot) * d2 * h2 - 2.0 * cot * d1 * e1 + h1 * e2

    # f vanishes wherever x - y cot(xi) <= eps/3; within S that covers a ball
    # of radius (eps/3) sin(xi) around the vertex.
    radius = a * g.sin_xi
    tf = certify_test_function(
        g, f, grad, lap, radius, r_max=10.0 * max(eps, 2.0 * C),
        label=f"slab(eps={eps:g}, C={C:g})",
    )
    if not tf.admissible:
        raise CertificateError(
            f"{tf.label}: boundary certificates {tf.boundary_certificates} "
            f"violate D_i f >= 0"
        )
    return tf


def make_origin_bump(
    g: WedgeGeometry,
    radius_in: float,
    radius_out: float,
    direction,
) -> TestFunction:
    """Smooth function: 0 inside radius_in, direction . z outside radius_out.

    Certified admissible only when the resulting edge derivatives are
    non-negative; otherwise raises CertificateError.
    """
    if not (0.0 < radius_in < radius_out):
        raise ValueError("need 0 < radius_in < radius_out")
    d = np.asarray(direction, dtype=float)
    nd = math.hypot(d[0], d[1])
    if abs(nd - 1.0) > 1e-9:
        raise ValueError(f"direction must be a unit vector (|d|={nd:.6g})")

    def f(pts):
        pts = np.asarray(pts, dtype=float)
        r = np.hypot(pts[..., 0], pts[..., 1])
        phi, _, _ = _ramp(r, radius_in, radius_out)
        return phi * (pts[..., 0] * d[0] + pts[..., 1] * d[1])

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        r = np.hypot(x, y)
        phi, dphi, _ = _ramp(r, radius_in, radius_out)
        proj = x * d[0] + y * d[1]
        rsafe = np.where(r > 0.0, r, 1.0)
        gx = dphi * (x / rsafe) * proj + phi * d[0]
        gy = dphi * (y / rsafe) * proj + phi * d[1]
        return np.stack([gx, gy], axis=-1)

    def lap(pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        r = np.hypot(x, y)
        phi, dphi, d2phi = _ramp(r, radius_in, radius_out)
        proj = x * d[0] + y * d[1]
        rsafe = np.where(r > 0.0, r, 1.0)
        return (d2phi + dphi / rsafe) * proj + 2.0 * dphi * proj / rsafe

    tf = certify_test_function(
        g, f, grad, lap, radius_in, r_max=10.0 * radius_out,
        label=f"bump(d=({d[0]:.3g},{d[1]:.3g}))",
    )
    if not tf.admissible:
        raise CertificateError(
            f"{tf.label}: boundary certificates {tf.boundary_certificates} "
            f"violate D_i f >= 0; direction rejected"
        )
    return tf


def make_constant(value: float = 0.0) -> TestFunction:
    """A constant function; trivially admissible with zero derivatives."""

    def f(pts):
        pts = np.asarray(pts, dtype=float)
        return np.full(pts.shape[:-1], value)

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        return np.zeros(pts.shape)

    def lap(pts):
        pts = np.asarray(pts, dtype=float)
        return np.zeros(pts.shape[:-1])

    return TestFunction(
        eval_f=f,
        eval_grad=grad,
        eval_laplacian=lap,
        origin_constancy_radius=math.inf,
        boundary_certificates=(0.0, 0.0),
        label=f"constant({value:g})",
    )


def shifted_wedge_contains(g: WedgeGeometry, pts, delta: float) -> np.ndarray:
    """Membership in the horizontally shifted sub-wedge S + (delta, 0).

    For 0 < xi < pi this is equivalent to x - y cot(xi) >= delta for points
    of S, the identity the slab construction is built on.
    """
    pts = np.asarray(pts, dtype=float)
    return contains_mask(g, pts[..., 0] - delta, pts[..., 1])
