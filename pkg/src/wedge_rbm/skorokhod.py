"""Discrete constraining map for the wedge: oblique pushing, vertex absorption.

Each step resolves a free target against the wedge by iterated single-edge
pushes: push along v_i of the currently most violated edge until the point
lands in S (alternating oblique projections).  Steps that straddle the
corner are resolved off the vertex whenever the alternation contracts, which
it does exactly in the regimes where the continuous process does not hit the
vertex; exact vertex landings then have probability zero and vertex hitting
is detected by the eps ball alone.  When the alternation fails to contract
(vertex-attracting regimes, alpha >= 1), the 2x2 system R lam = -target
sends the point to the vertex: in absorbed mode that (or any landing inside
the vertex ball) freezes the path at the origin; in reflected mode an
unsolvable system moves the point to the vertex and books the applied
correction in a separate free-push channel, keeping eta componentwise
non-decreasing (any push direction is admissible at the vertex, where the
boundary cone is the full plane).

The vectorized kernel `constrain_step_many` operates on batches of paths;
the scalar operations wrap it on batches of one, so both produce bit-equal
results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, RegimeError
from .geometry import (
    REGIME_AT_LEAST_TWO,
    WedgeGeometry,
    contains_mask,
    set_distance,
)

MODE_REFLECTED = "reflected"
MODE_ABSORBED = "absorbed"

#: Sentinel for "the vertex was never reached" in index-valued results.
NEVER = -1


def _check_mode(g: WedgeGeometry, mode: str) -> bool:
    if mode not in (MODE_REFLECTED, MODE_ABSORBED):
        raise ValueError(f"mode must be 'reflected' or 'absorbed', got {mode!r}")
    if mode == MODE_REFLECTED and g.regime == REGIME_AT_LEAST_TWO:
        raise RegimeError(
            f"alpha={g.alpha:.6g} >= 2: no reflected dynamics exist in this regime "
            f"(the constrained process with drift has no solution); use absorbed mode"
        )
    return mode == MODE_REFLECTED


#: cap on single-edge pushes per step; non-contracting cases go to the vertex
_MAX_PUSHES = 64
#: violations below this absolute depth are accepted as rounding slack
_VIOL_ATOL = 1e-14


def constrain_step_many(
    g: WedgeGeometry,
    target: np.ndarray,
    mode: str,
    eps_vertex: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Resolve a batch of free targets (m, 2) against the wedge.

    Returns (z_new, d_eta, d_free, absorbed_now) with shapes
    (m, 2), (m, 2), (m, 2), (m,).  d_eta holds the pushing amounts along
    (v1, v2); d_free the vertex-fallback / absorption-snap corrections.
    Requires xi <= pi (the edge-line push is not minimal in reflex wedges).
    """
    _check_mode(g, mode)
    if g.xi > math.pi:
        raise GeometryError(
            f"the constraining map supports 0 < xi <= pi (got xi={g.xi:.6g})"
        )
    if eps_vertex <= 0.0:
        raise ValueError(f"eps_vertex must be positive, got {eps_vertex!r}")
    target = np.asarray(target, dtype=float)
    m = target.shape[0]

    z_new = target.copy()
    d_eta = np.zeros((m, 2))
    d_free = np.zeros((m, 2))

    outside = ~contains_mask(g, target[:, 0], target[:, 1])
    if outside.any():
        idx = np.flatnonzero(outside)
        p = target[idx].copy()
        acc1 = np.zeros(idx.size)
        acc2 = np.zeros(idx.size)
        hard = np.zeros(idx.size, dtype=bool)
        t_norm = np.hypot(target[idx, 0], target[idx, 1])
        live = np.arange(idx.size)
        v1x, v1y = g.v1
        v2x, v2y = g.v2
        for it in range(_MAX_PUSHES):
            q = p[live]
            lam1 = -q[:, 1]
            lam2 = -(g.sin_xi * q[:, 0] - g.cos_xi * q[:, 1])
            active = (lam1 > _VIOL_ATOL) | (lam2 > _VIOL_ATOL)
            if not active.all():
                live = live[active]
                if live.size == 0:
                    break
                q = q[active]
                lam1 = lam1[active]
                lam2 = lam2[active]
            use1 = lam1 >= lam2
            lam = np.where(use1, lam1, lam2)
            p[live, 0] = q[:, 0] + lam * np.where(use1, v1x, v2x)
            p[live, 1] = q[:, 1] + lam * np.where(use1, v1y, v2y)
            acc1[live] += np.where(use1, lam, 0.0)
            acc2[live] += np.where(use1, 0.0, lam)
            if it >= 7:
                # vertex-attracting regimes spiral outward; hand them over
                r = np.hypot(p[live, 0], p[live, 1])
                div = r > 4.0 * t_norm[live] + 1.0
                if div.any():
                    hard[live[div]] = True
                    live = live[~div]
                    if live.size == 0:
                        break
        if live.size:
            hard[live] = True  # neither converged nor diverged within the cap

        soft = ~hard
        if soft.any():
            rows = idx[soft]
            z_new[rows] = p[soft]
            d_eta[rows, 0] = acc1[soft]
            d_eta[rows, 1] = acc2[soft]

        if hard.any():
            # Two-edge resolution R lam = -target lands at the vertex.  A
            # singular R (alpha == 1) or a negative component means no
            # admissible push exists at all.
            rows = idx[hard]
            hx = target[rows, 0]
            hy = target[rows, 1]
            det = g.det_R
            with np.errstate(divide="ignore", invalid="ignore"):
                l1 = (g.R[1, 1] * (-hx) - g.R[0, 1] * (-hy)) / det
                l2 = (g.R[0, 0] * (-hy) - g.R[1, 0] * (-hx)) / det
            solvable = np.isfinite(l1) & np.isfinite(l2) & (l1 >= 0.0) & (l2 >= 0.0)
            z_new[rows] = 0.0
            d_eta[rows, 0] = np.where(solvable, l1, 0.0)
            d_eta[rows, 1] = np.where(solvable, l2, 0.0)
            d_free[rows, 0] = np.where(solvable, 0.0, -hx)
            d_free[rows, 1] = np.where(solvable, 0.0, -hy)

    if mode == MODE_ABSORBED:
        absorbed_now = np.hypot(z_new[:, 0], z_new[:, 1]) <= eps_vertex
        if absorbed_now.any():
            d_free[absorbed_now] -= z_new[absorbed_now]
            z_new[absorbed_now] = 0.0
    else:
        absorbed_now = np.zeros(m, dtype=bool)
    return z_new, d_eta, d_free, absorbed_now


@dataclass(frozen=True, eq=False)
class ConstrainedStep:
    """Outcome of one constraining step."""

    z_new: np.ndarray
    d_eta: np.ndarray
    absorbed: bool
    d_free: np.ndarray


def constrain_step(
    g: WedgeGeometry,
    z,
    target,
    mode: str = MODE_REFLECTED,
    eps_vertex: float = 1e-3,
) -> ConstrainedStep:
    """Constrain a single step from z toward target; z must lie in S."""
    z = np.asarray(z, dtype=float)
    if set_distance(g, z) > 1e-12:
        raise GeometryError(f"step start {z.tolist()} lies outside the wedge")
    tgt = np.asarray(target, dtype=float).reshape(1, 2)
    z_new, d_eta, d_free, absorbed = constrain_step_many(g, tgt, mode, eps_vertex)
    return ConstrainedStep(
        z_new=z_new[0], d_eta=d_eta[0], absorbed=bool(absorbed[0]), d_free=d_free[0]
    )


def constrain_path(
    g: WedgeGeometry,
    times: np.ndarray,
    psi: np.ndarray,
    mode: str = MODE_REFLECTED,
    eps_vertex: float = 1e-3,
) -> tuple[np.ndarray, np.ndarray, int, np.ndarray]:
    """Constrain a piecewise-linear free path sampled on a strictly increasing grid.

    Returns (phi, eta, tau0_index, free) where phi follows the wedge, eta is
    the cumulative componentwise non-decreasing pushing (in units of v1, v2),
    free is the cumulative vertex-fallback correction, and tau0_index is the
    first grid index at which the vertex ball of radius eps_vertex is entered
    (NEVER if it is not).  In absorbed mode the path freezes at the vertex
    from tau0_index on; in reflected mode the index is diagnostic only.
    """
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if times.ndim != 1 or psi.shape != (times.size, 2):
        raise ValueError("psi must have shape (len(times), 2)")
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("times must be strictly increasing")
    reflected = _check_mode(g, mode)
    if set_distance(g, psi[0]) > 1e-12:
        raise GeometryError(f"psi(0)={psi[0].tolist()} lies outside the wedge")

    n = times.size - 1
    phi = np.empty_like(psi)
    eta = np.zeros((n + 1, 2))
    free = np.zeros((n + 1, 2))
    phi[0] = psi[0]
    tau0 = NEVER
    frozen = False
    if np.hypot(psi[0, 0], psi[0, 1]) <= eps_vertex:
        tau0 = 0
        if not reflected:
            frozen = True
            phi[0] = 0.0
    z = phi[0].reshape(1, 2).copy()
    for k in range(n):
        if frozen:
            phi[k + 1] = 0.0
            eta[k + 1] = eta[k]
            free[k + 1] = free[k]
            continue
        tgt = z + (psi[k + 1] - psi[k])
        z, d_eta, d_free, absorbed = constrain_step_many(g, tgt, mode, eps_vertex)
        phi[k + 1] = z[0]
        eta[k + 1] = eta[k] + d_eta[0]
        free[k + 1] = free[k] + d_free[0]
        if tau0 == NEVER and np.hypot(z[0, 0], z[0, 1]) <= eps_vertex:
            tau0 = k + 1
        if absorbed[0]:
            frozen = True
    return phi, eta, tau0, free


@dataclass(frozen=True, eq=False)
class ConeViolation:
    """One pushing increment that left its admissible boundary cone."""

    t_start: float
    t_end: float
    increment: np.ndarray
    residual: float


@dataclass(frozen=True, eq=False)
class EspViolationReport:
    """How far a (psi, phi, eta) triple is from solving the constrained-path problem.

    max_decomposition_error is sup_k |phi - psi - R eta - free| over the grid,
    containment_violation is sup_k dist(phi_k, S), and cone_violations lists
    the per-step pushing increments whose direction is inadmissible at the
    step's landing point.  Per-step admissibility implies admissibility over
    every grid subinterval, because sums of elements of the stepwise cones
    stay inside the convex cone generated by their union.
    """

    max_decomposition_error: float
    containment_violation: float
    cone_violations: list[ConeViolation] = field(default_factory=list)

    @property
    def max_cone_residual(self) -> float:
        return max((v.residual for v in self.cone_violations), default=0.0)

    def ok(self, tol: float = 1e-9) -> bool:
        return (
            self.max_decomposition_error < tol
            and self.containment_violation < tol
            and not self.cone_violations
        )


def check_esp(
    g: WedgeGeometry,
    times: np.ndarray,
    psi: np.ndarray,
    phi: np.ndarray,
    eta: np.ndarray,
    tol: float = 1e-9,
    free: np.ndarray | None = None,
) -> EspViolationReport:
    """Verify the three constrained-path properties on a common grid.

    1. phi = psi + R eta (+ free) pointwise;
    2. phi stays in S;
    3. every pushing increment lies in the cone of admissible directions at
       its landing point (ray along v_i on edge i, anything at the vertex,
       nothing in the interior).
    """
    times = np.asarray(times, dtype=float)
    psi = np.asarray(psi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if free is None:
        free = np.zeros_like(eta)
    else:
        free = np.asarray(free, dtype=float)

    pushed = eta @ g.R.T + free
    decomp = phi - psi - pushed
    max_decomp = float(np.hypot(decomp[:, 0], decomp[:, 1]).max())
    containment = float(set_distance(g, phi).max())

    # Per-step increments of the applied pushing, classified at landing points.
    d_push = np.diff(pushed, axis=0)
    norms = np.hypot(d_push[:, 0], d_push[:, 1])
    land = phi[1:]
    lx, ly = land[:, 0], land[:, 1]
    at_vertex = np.hypot(lx, ly) <= tol
    on_edge1 = (~at_vertex) & (np.abs(ly) <= tol) & (lx > 0.0)
    s2 = lx * g.cos_xi + ly * g.sin_xi
    on_edge2 = (
        (~at_vertex)
        & (~on_edge1)
        & (np.abs(-lx * g.sin_xi + ly * g.cos_xi) <= tol)
        & (s2 > 0.0)
    )
    interior = ~(at_vertex | on_edge1 | on_edge2)

    # Steps whose eta increment has both components positive transited the
    # corner (the intra-step sub-path touched both edges), so the union of
    # boundary cones over the step covers any non-negative combination of
    # v1 and v2; they are checked only for component non-negativity.
    d_eta_step = np.diff(eta, axis=0)
    mixed = (d_eta_step[:, 0] > tol) & (d_eta_step[:, 1] > tol)

    residual = np.zeros_like(norms)
    residual[interior] = norms[interior]
    for mask, v in ((on_edge1 & ~mixed, g.v1), (on_edge2 & ~mixed, g.v2)):
        if mask.any():
            vhat = v / np.hypot(v[0], v[1])
            coef = d_push[mask] @ vhat
            proj = np.maximum(coef, 0.0)[:, None] * vhat
            res = d_push[mask] - proj
            residual[mask] = np.hypot(res[:, 0], res[:, 1])

    violations = []
    for k in np.nonzero(residual > tol)[0]:
        violations.append(
            ConeViolation(
                t_start=float(times[k]),
                t_end=float(times[k + 1]),
                increment=d_push[k].copy(),
                residual=float(residual[k]),
            )
        )
    return EspViolationReport(
        max_decomposition_error=max_decomp,
        containment_violation=containment,
        cone_violations=violations,
    )


def shifted_contains_mask(
    g: WedgeGeometry, pts: np.ndarray, delta: float
) -> np.ndarray:
    """Membership in S_delta, the wedge translated by delta along the bisector."""
    pts = np.asarray(pts, dtype=float)
    ux = math.cos(g.xi / 2.0)
    uy = math.sin(g.xi / 2.0)
    return contains_mask(g, pts[..., 0] - delta * ux, pts[..., 1] - delta * uy)
