"""Monte-Carlo estimators over constrained-path batches.

Each estimator folds a path collection into one of the checkable quantities:
vertex-hitting probabilities, boundary occupation, dyadic p-variation and
zero-energy sums, submartingale increment z-scores, energy distances between
terminal laws, and exact pushing-flatness audits.  Trend verdicts use the
median over paths with a fixed margin over the last four mesh levels;
statistical verdicts are reported, never raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .admissible_functions import TestFunction
from .errors import CertificateError, ConfigError, RegimeError
from .geometry import WedgeGeometry, boundary_distance
from .simulator import (
    MODE_ABSORBED,
    NEVER,
    PathSample,
    SimConfig,
    batch_simulate,
    derived_seed,
    simulate_terminals,
)
from .skorokhod import shifted_contains_mask

TREND_MARGIN = 0.1
TREND_WINDOW = 4

VERDICT_STABILIZING = "stabilizing"
VERDICT_DIVERGING = "diverging"
VERDICT_INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate with normal-theory error bars and a claim label."""

    estimate: float
    std_error: float
    ci95: tuple[float, float]
    n: int
    theorem_tag: str


def _report(values: np.ndarray, tag: str, clip01: bool = False) -> EstimateReport:
    n = values.size
    est = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    lo, hi = est - 1.96 * se, est + 1.96 * se
    if clip01:
        lo, hi = max(0.0, lo), min(1.0, hi)
    return EstimateReport(estimate=est, std_error=se, ci95=(lo, hi), n=n, theorem_tag=tag)


# ---------------------------------------------------------------------------
# Vertex hitting
# ---------------------------------------------------------------------------


def _hitting_tag(cfg: SimConfig, extra: str = "") -> str:
    g = cfg.geometry
    if g.alpha >= 1.0:
        from .geometry import vertex_attraction_condition

        attraction = str(vertex_attraction_condition(g, cfg.mu))
    else:
        attraction = "n/a"
    return (
        f"vertex-hit regime={g.regime} alpha={g.alpha:.4g} "
        f"attraction={attraction} eps={cfg.eps_vertex:.3g}{extra}"
    )


def estimate_hitting_probability(cfg: SimConfig, n_workers: int = 1) -> EstimateReport:
    """Fraction of absorbed-mode paths that reach the vertex ball before T.

    The tag records the regime, the attraction condition, and the estimate at
    twice the detection radius (sensitivity of the finite-resolution ball).
    """
    if cfg.mode != MODE_ABSORBED:
        raise ConfigError("hitting probabilities are estimated in absorbed mode")
    term = simulate_terminals(cfg, n_workers=n_workers, need_free_path=False)
    hit = (term.tau0_index != NEVER).astype(float)
    hit2 = (term.tau0_index_2eps != NEVER).astype(float)
    p = float(hit.mean())
    se = math.sqrt(p * (1.0 - p) / hit.size)
    tag = _hitting_tag(cfg, extra=f" est@2eps={float(hit2.mean()):.4f}")
    return EstimateReport(
        estimate=p,
        std_error=se,
        ci95=(max(0.0, p - 1.96 * se), min(1.0, p + 1.96 * se)),
        n=hit.size,
        theorem_tag=tag,
    )


def hitting_time_profile(
    cfg: SimConfig, horizons: Sequence[float], n_workers: int = 1
) -> list[EstimateReport]:
    """Hitting estimates at several horizons from a single run at max(horizons).

    The absorbed dynamics are causal, so thresholding the hitting times of
    one long run reproduces the separate shorter runs path for path.
    """
    if cfg.mode != MODE_ABSORBED:
        raise ConfigError("hitting probabilities are estimated in absorbed mode")
    horizons = sorted(float(t) for t in horizons)
    if horizons[-1] > cfg.T:
        cfg = replace(cfg, T=horizons[-1])
    term = simulate_terminals(cfg, n_workers=n_workers, need_free_path=False)
    dt = cfg.T / cfg.n_steps
    times = np.where(term.tau0_index == NEVER, np.inf, term.tau0_index * dt)
    out = []
    for t in horizons:
        hit = times <= t + 1e-12
        p = float(hit.mean())
        se = math.sqrt(p * (1.0 - p) / hit.size)
        out.append(
            EstimateReport(
                estimate=p,
                std_error=se,
                ci95=(max(0.0, p - 1.96 * se), min(1.0, p + 1.96 * se)),
                n=hit.size,
                theorem_tag=_hitting_tag(cfg, extra=f" T={t:g}"),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Boundary occupation
# ---------------------------------------------------------------------------


def estimate_boundary_occupation(
    paths: Sequence[PathSample], delta: float
) -> EstimateReport:
    """Mean fraction of time spent within distance delta of the boundary."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    fracs = np.empty(len(paths))
    for i, p in enumerate(paths):
        d = boundary_distance(p.geometry, p.Z[:-1])
        fracs[i] = float((d <= delta).mean())
    return _report(
        fracs, tag=f"boundary-occupation delta={delta:g}", clip01=True
    )


# ---------------------------------------------------------------------------
# p-variation, zero energy
# ---------------------------------------------------------------------------


def dyadic_indices(n_steps: int, level: int) -> np.ndarray:
    """Grid indices of the level-l dyadic partition of [0, n_steps]."""
    cells = 2**level
    if cells >= n_steps:
        return np.arange(n_steps + 1)
    return np.unique(np.rint(np.linspace(0.0, n_steps, cells + 1)).astype(np.int64))


def p_variation(y: np.ndarray, p: float, level: int) -> float:
    """Sum of |increment|^p over the level's dyadic partition of the path.

    A lower bound for the supremum over all partitions; the dyadic sweep
    across levels stands in for the (uncomputable) supremum.
    """
    if p <= 0.0:
        raise ValueError("p must be positive")
    y = np.asarray(y, dtype=float)
    idx = dyadic_indices(y.shape[0] - 1, level)
    inc = np.diff(y[idx], axis=0)
    norms = np.hypot(inc[:, 0], inc[:, 1])
    return float(np.sum(norms**p))


@dataclass(frozen=True)
class VariationSweep:
    """Per-level dyadic variation values and the trend verdict."""

    p: float
    mesh_levels: tuple[int, ...]
    values: tuple[float, ...]
    verdict: str


def _ratio_verdict(values: Sequence[float], margin: float = TREND_MARGIN) -> str:
    tail = list(values[-TREND_WINDOW:])
    ratios = []
    for a, b in zip(tail, tail[1:]):
        if a == 0.0:
            ratios.append(math.inf if b > 0.0 else 1.0)
        else:
            ratios.append(b / a)
    if all(r > 1.0 + margin for r in ratios):
        return VERDICT_DIVERGING
    if all(abs(r - 1.0) <= margin for r in ratios):
        return VERDICT_STABILIZING
    return VERDICT_INCONCLUSIVE


def _decreasing_verdict(values: Sequence[float], margin: float = TREND_MARGIN) -> str:
    tail = list(values[-TREND_WINDOW:])
    if all(b < a for a, b in zip(tail, tail[1:])):
        return VERDICT_STABILIZING
    ratios = [b / a if a else math.inf for a, b in zip(tail, tail[1:])]
    if all(r > 1.0 + margin for r in ratios):
        return VERDICT_DIVERGING
    return VERDICT_INCONCLUSIVE


def _require_strict_regime(g: WedgeGeometry, what: str) -> None:
    if not (1.0 < g.alpha < 2.0):
        raise RegimeError(
            f"{what} targets the regime 1 < alpha < 2 (got alpha={g.alpha:.6g})"
        )


def variation_sweep(
    cfg: SimConfig,
    p: float,
    levels: Sequence[int],
    paths: Sequence[PathSample] | None = None,
    n_workers: int = 1,
) -> VariationSweep:
    """Median dyadic p-variation of Y across mesh levels, with trend verdict.

    Diverging: successive ratios over the last levels stay above 1 + margin.
    Stabilizing: those ratios settle to 1 within the margin.  The divergence
    claim is stated from a vertex start; pass such a cfg to probe it.
    """
    _require_strict_regime(cfg.geometry, "the p-variation threshold")
    if paths is None:
        paths = batch_simulate(cfg, n_workers=n_workers, record=("X", "Z"))
    levels = tuple(int(l) for l in levels)
    per_level = []
    for level in levels:
        vals = np.array([p_variation(s.Y, p, level) for s in paths])
        per_level.append(float(np.median(vals)))
    return VariationSweep(
        p=p, mesh_levels=levels, values=tuple(per_level), verdict=_ratio_verdict(per_level)
    )


def zero_energy_sweep(
    paths: Sequence[PathSample], levels: Sequence[int]
) -> VariationSweep:
    """Mean dyadic quadratic variation of Y across levels; stabilizing means
    a decreasing trend toward zero over the last levels."""
    _require_strict_regime(paths[0].geometry, "the zero-energy check")
    levels = tuple(int(l) for l in levels)
    per_level = []
    for level in levels:
        vals = np.array([p_variation(s.Y, 2.0, level) for s in paths])
        per_level.append(float(vals.mean()))
    return VariationSweep(
        p=2.0,
        mesh_levels=levels,
        values=tuple(per_level),
        verdict=_decreasing_verdict(per_level),
    )


# ---------------------------------------------------------------------------
# Submartingale diagnostic
# ---------------------------------------------------------------------------


def submartingale_check(
    paths: Sequence[PathSample],
    f: TestFunction,
    grid: Sequence[float],
) -> float:
    """Minimum increment z-score of f(Z) - drift and Laplacian Riemann sums.

    For admissible f the compensated process is a submartingale, so every
    mean increment across the check grid should be non-negative up to noise;
    the returned minimum z-score supports the property when it is not far
    below zero.  Requires f's certificates to be present and f to be constant
    near the origin (the certificates themselves may be negative, e.g. for
    planted-defect sensitivity runs).
    """
    if f.boundary_certificates is None:
        raise CertificateError(f"{f.label}: boundary certificates are absent")
    if not (f.origin_constancy_radius > 0.0):
        raise CertificateError(f"{f.label}: not constant near the origin")
    times = paths[0].times
    grid = np.asarray(sorted(grid), dtype=float)
    idx = np.searchsorted(times, grid - 1e-12)
    idx = np.clip(idx, 0, times.size - 1)
    if np.abs(times[idx] - grid).max() > 1e-9 * max(1.0, float(times[-1])):
        raise ValueError("check grid times must lie on the stored path grid")

    n = len(paths)
    m_vals = np.empty((n, idx.size))
    dt = np.diff(times)
    for i, s in enumerate(paths):
        z = s.Z
        mu = np.asarray(s.mu, dtype=float)
        fz = f.eval_f(z)
        grad = f.eval_grad(z)
        lap = f.eval_laplacian(z)
        integrand = grad @ mu + 0.5 * lap
        integral = np.concatenate([[0.0], np.cumsum(integrand[:-1] * dt)])
        m_path = fz - integral
        m_vals[i] = m_path[idx]

    min_z = math.inf
    for j1 in range(idx.size - 1):
        d = m_vals[:, j1 + 1 :] - m_vals[:, j1 : j1 + 1]
        means = d.mean(axis=0)
        ses = d.std(axis=0, ddof=1) / math.sqrt(n)
        z = np.where(ses > 0.0, means / np.where(ses > 0.0, ses, 1.0), 0.0)
        min_z = min(min_z, float(z.min()))
    return min_z


# ---------------------------------------------------------------------------
# Energy distance, Feller and scaling checks
# ---------------------------------------------------------------------------


def _mean_cross_distance(a: np.ndarray, b: np.ndarray, chunk: int = 512) -> float:
    total = 0.0
    for lo in range(0, a.shape[0], chunk):
        total += float(cdist(a[lo : lo + chunk], b).sum())
    return total / (a.shape[0] * b.shape[0])


def _mean_within_distance(a: np.ndarray, chunk: int = 512) -> float:
    n = a.shape[0]
    if n < 2:
        return 0.0
    total = 0.0
    for lo in range(0, n, chunk):
        total += float(cdist(a[lo : lo + chunk], a).sum())
    return total / (n * (n - 1))  # diagonal contributes zero


def energy_distance(a: np.ndarray, b: np.ndarray) -> float:
    """U-statistic energy distance between two planar samples (clipped at 0)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d2 = 2.0 * _mean_cross_distance(a, b) - _mean_within_distance(a) - _mean_within_distance(b)
    return math.sqrt(max(0.0, d2))


def feller_distance(
    cfg: SimConfig, z_a, z_b, t: float, n_workers: int = 1
) -> float:
    """Energy distance between the time-t laws started from z_a and z_b.

    The two batches use decorrelated streams (per-path seeds are not shared),
    so the distance is an honest two-sample statistic.
    """
    cfg_a = replace(cfg, z0=tuple(np.asarray(z_a, dtype=float)), T=t)
    cfg_b = replace(
        cfg,
        z0=tuple(np.asarray(z_b, dtype=float)),
        T=t,
        seed=derived_seed(cfg.seed, stream=1),
    )
    za = simulate_terminals(cfg_a, n_workers=n_workers).ZT
    zb = simulate_terminals(cfg_b, n_workers=n_workers).ZT
    return energy_distance(za, zb)


@dataclass(frozen=True)
class ScalingCheck:
    """Self-similarity check of the driftless law under |x| Z(t / |x|^2)."""

    distance: float
    null_distances: tuple[float, ...]
    threshold: float

    @property
    def passed(self) -> bool:
        return self.distance <= self.threshold


def scaling_check(
    cfg: SimConfig, x, t: float, n_null: int = 5, n_workers: int = 1
) -> ScalingCheck:
    """Compare Z(t) from x against |x| Z(t/|x|^2) from x/|x| (driftless only).

    The acceptance threshold is calibrated from same-law null replicas:
    mean + 4 sd of the energy distances between independent batches of the
    unscaled law.
    """
    if float(np.hypot(*cfg.mu)) != 0.0:
        raise ConfigError("the scaling property is a driftless (mu = 0) statement")
    x = np.asarray(x, dtype=float)
    r = float(np.hypot(x[0], x[1]))
    if r <= 0.0:
        raise ValueError("x must be nonzero")
    cfg_a = replace(cfg, z0=(float(x[0]), float(x[1])), T=t)
    cfg_b = replace(
        cfg,
        z0=(float(x[0] / r), float(x[1] / r)),
        T=t / r**2,
        dt=cfg.dt / r**2 if cfg.dt is not None else None,
        eps_vertex=cfg.eps_vertex / r if cfg.eps_vertex is not None else None,
        seed=derived_seed(cfg.seed, stream=2),
    )
    za = simulate_terminals(cfg_a, n_workers=n_workers).ZT
    zb = r * simulate_terminals(cfg_b, n_workers=n_workers).ZT
    dist = energy_distance(za, zb)

    nulls = []
    for k in range(n_null):
        cfg_n = replace(cfg_a, seed=derived_seed(cfg.seed, stream=10 + k))
        zn = simulate_terminals(cfg_n, n_workers=n_workers).ZT
        nulls.append(energy_distance(za, zn))
    arr = np.array(nulls)
    threshold = float(arr.mean() + 4.0 * arr.std(ddof=1)) if n_null > 1 else float(arr[0]) * 2.0
    return ScalingCheck(distance=dist, null_distances=tuple(nulls), threshold=threshold)


# ---------------------------------------------------------------------------
# Girsanov cross-check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GirsanovCheck:
    """Paired comparison of E_0[zeta g] against E_mu[g]."""

    reweighted: float
    direct: float
    gap: float
    combined_se: float
    n: int

    @property
    def z_score(self) -> float:
        return self.gap / self.combined_se if self.combined_se > 0.0 else 0.0


def girsanov_crosscheck(
    cfg: SimConfig,
    mu,
    functional: Callable[[np.ndarray], np.ndarray],
    n_workers: int = 1,
) -> GirsanovCheck:
    """Check that reweighting driftless paths by zeta(T) reproduces drift mu.

    cfg must be driftless.  The drifted batch reuses the same per-path
    streams, so the discrete identity E_0[zeta g(Z)] = E_mu[g(Z)] holds
    exactly in law and the comparison is paired, which tightens the error
    bars without biasing them.
    """
    if float(np.hypot(*cfg.mu)) != 0.0:
        raise ConfigError("girsanov_crosscheck starts from a driftless configuration")
    mu = np.asarray(mu, dtype=float)
    t0 = simulate_terminals(cfg, n_workers=n_workers)
    t1 = simulate_terminals(replace(cfg, mu=(float(mu[0]), float(mu[1]))),
                            n_workers=n_workers)
    disp = t0.XT - t0.X0
    zeta = np.exp(disp @ mu - 0.5 * float(mu @ mu) * cfg.T)
    g0 = np.asarray(functional(t0.ZT), dtype=float)
    g1 = np.asarray(functional(t1.ZT), dtype=float)
    paired = zeta * g0 - g1
    n = paired.size
    gap = float(paired.mean())
    se = float(paired.std(ddof=1) / math.sqrt(n))
    return GirsanovCheck(
        reweighted=float((zeta * g0).mean()),
        direct=float(g1.mean()),
        gap=gap,
        combined_se=se,
        n=n,
    )


# ---------------------------------------------------------------------------
# Flatness audit
# ---------------------------------------------------------------------------


def flatness_audit(path: PathSample, delta: float) -> float:
    """Total |R d_eta| accumulated strictly inside boundary-clear excursions.

    An excursion runs from a grid entry into S_{2 delta} until the first
    subsequent grid exit from S_delta.  Pushing is attributed to its landing
    time; the exit step lands outside S_delta and is not part of the
    excursion, so the discrete map (which only pushes onto the boundary)
    must audit to exactly zero.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if path.Z is None or path.eta is None:
        raise ValueError("flatness_audit needs recorded Z and eta")
    g = path.geometry
    z = path.Z
    in2 = shifted_contains_mask(g, z, 2.0 * delta)
    out1 = ~shifted_contains_mask(g, z, delta)

    d_eta = np.diff(path.eta, axis=0)
    push = d_eta @ g.R.T
    step_norm = np.hypot(push[:, 0], push[:, 1])
    # prefix[k] = total pushing with landing index <= k
    prefix = np.concatenate([[0.0], np.cumsum(step_norm)])

    total = 0.0
    n = z.shape[0]
    k = 0
    while k < n:
        rel = np.argmax(in2[k:])
        if not in2[k + rel]:
            break
        start = k + rel
        rel_out = np.argmax(out1[start:])
        end = (start + rel_out) if out1[start + rel_out] else n
        # pushing with landing indices in [start, end - 1]
        lo = max(start, 1)
        hi = min(end - 1, n - 1)
        if hi >= lo:
            total += prefix[hi] - prefix[lo - 1]
        if end >= n:
            break
        k = end
    return float(total)
