"""Brownian-with-drift path generation through the wedge constraining map.

Paths are driven by counter-based Philox streams keyed by (seed, path_index),
so the multiset of results is independent of how paths are batched or how
many workers execute them.  Gaussians come from numpy's standard_normal
(ziggurat); bit-exact reproducibility is therefore per numpy build.

The engine advances all paths together one time step at a time through the
vectorized constraining kernel, drawing Gaussians in time windows sized to a
fixed memory budget.  Neither the windowing nor the split of paths across
workers can change per-path results, because every operation is elementwise
across paths and each path consumes only its own stream.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import WedgeGeometry, set_distance
from .skorokhod import MODE_ABSORBED, MODE_REFLECTED, NEVER, constrain_step_many

#: float64 budget for one window's increment buffer (~256 MiB).
_WINDOW_FLOAT_BUDGET = 2**25

FULL_RECORD = ("X", "Z", "eta", "free")


@dataclass(frozen=True)
class SimConfig:
    """Inputs for one batch of constrained paths.

    eps_vertex defaults to 1e-3 * |z0| (1e-3 when starting at the vertex):
    vertex hitting at finite resolution is detected by entry into this ball.
    dt defaults to 1e-4 * T.
    """

    geometry: WedgeGeometry
    mu: tuple[float, float] = (0.0, 0.0)
    z0: tuple[float, float] = (1.0, 0.5)
    T: float = 1.0
    dt: float | None = None
    n_paths: int = 1
    seed: int = 0
    mode: str = MODE_REFLECTED
    eps_vertex: float | None = None

    def __post_init__(self):
        if self.dt is None:
            object.__setattr__(self, "dt", 1e-4 * self.T)
        if self.eps_vertex is None:
            r0 = math.hypot(*self.z0)
            object.__setattr__(self, "eps_vertex", 1e-3 * (r0 if r0 > 0.0 else 1.0))
        self.validate()

    def validate(self) -> None:
        if self.dt <= 0.0:
            raise ConfigError(f"dt={self.dt!r} must be positive")
        if self.T < self.dt:
            raise ConfigError(f"T={self.T!r} must be at least one step dt={self.dt!r}")
        if self.n_paths < 1:
            raise ConfigError(f"n_paths={self.n_paths!r} must be >= 1")
        if self.eps_vertex <= 0.0:
            raise ConfigError(f"eps_vertex={self.eps_vertex!r} must be positive")
        if self.mode not in (MODE_REFLECTED, MODE_ABSORBED):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if set_distance(self.geometry, np.asarray(self.z0, dtype=float)) > 1e-12:
            raise ConfigError(f"z0={self.z0!r} lies outside the wedge")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)


@dataclass(eq=False)
class PathSample:
    """One constrained path and its bookkeeping.

    Z(t) = X(t) + R eta(t) + free(t) pointwise up to absorption; Y = Z - X.
    eta is componentwise non-decreasing; free collects vertex-fallback and
    absorption-snap corrections (zero on paths that never reach the vertex).
    Fields not requested in the record spec are None.
    """

    geometry: WedgeGeometry
    mode: str
    eps_vertex: float
    mu: tuple[float, float]
    path_index: int
    times: np.ndarray
    X: np.ndarray | None
    Z: np.ndarray | None
    eta: np.ndarray | None
    free: np.ndarray | None
    zeta_T: float
    tau0_index: int
    absorbed: bool

    @property
    def Y(self) -> np.ndarray:
        if self.X is None or self.Z is None:
            raise ValueError("Y requires both X and Z to be recorded")
        return self.Z - self.X


@dataclass(eq=False)
class TerminalBatch:
    """Terminal state of a batch, for estimators that do not need full paths."""

    times_T: float
    X0: np.ndarray
    XT: np.ndarray
    ZT: np.ndarray
    eta_T: np.ndarray
    tau0_index: np.ndarray
    tau0_index_2eps: np.ndarray
    absorbed: np.ndarray
    zeta_T: np.ndarray
    xt_valid: bool


def path_gaussians(seed: int, path_index: int, n_steps: int) -> np.ndarray:
    """The (n_steps, 2) standard normals of one path's dedicated stream."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path_index], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.standard_normal((n_steps, 2))


def _worker_spans(n_paths: int, n_workers: int) -> list[tuple[int, int]]:
    n_workers = max(1, min(n_workers, n_paths))
    per = -(-n_paths // n_workers)
    return [(lo, min(lo + per, n_paths)) for lo in range(0, n_paths, per)]


def _simulate_chunk(
    cfg: SimConfig,
    lo: int,
    hi: int,
    record: tuple[str, ...],
    terminal_only: bool,
    allow_early_stop: bool,
) -> dict:
    """Advance paths lo..hi-1 through the constraining map.

    The time axis is processed in windows sized to a fixed memory budget;
    each path's Gaussians are drawn window by window from its own persistent
    stream, so the values are identical to a single whole-path draw and
    independent of the windowing and of how paths are split across workers.
    """
    g = cfg.geometry
    n = cfg.n_steps
    dt = cfg.T / n
    sdt = math.sqrt(dt)
    mu = np.asarray(cfg.mu, dtype=float)
    mu_dt = mu * dt
    m = hi - lo

    rngs = [
        np.random.Generator(
            np.random.Philox(
                key=np.array([cfg.seed & 0xFFFFFFFFFFFFFFFF, i], dtype=np.uint64)
            )
        )
        for i in range(lo, hi)
    ]
    window = max(1, min(n, _WINDOW_FLOAT_BUDGET // (2 * m)))

    z0 = np.asarray(cfg.z0, dtype=float)
    x = np.tile(z0, (m, 1))
    z = x.copy()
    eta = np.zeros((m, 2))
    free = np.zeros((m, 2))
    tau0 = np.full(m, NEVER, dtype=np.int64)
    tau0_2 = np.full(m, NEVER, dtype=np.int64)
    frozen = np.zeros(m, dtype=bool)
    absorbed_mode = cfg.mode == MODE_ABSORBED

    r0 = math.hypot(z0[0], z0[1])
    if r0 <= cfg.eps_vertex:
        tau0[:] = 0
        if absorbed_mode:
            frozen[:] = True
            z[:] = 0.0
    if r0 <= 2.0 * cfg.eps_vertex:
        tau0_2[:] = 0

    out: dict[str, np.ndarray] = {}
    if not terminal_only:
        for name in record:
            out[name] = np.empty((m, n + 1, 2))
        if "X" in out:
            out["X"][:, 0] = x
        if "Z" in out:
            out["Z"][:, 0] = z
        if "eta" in out:
            out["eta"][:, 0] = 0.0
        if "free" in out:
            out["free"][:, 0] = 0.0

    xt_valid = True
    gauss = np.empty((m, window, 2))
    done = 0
    while done < n:
        w = min(window, n - done)
        for row in range(m):
            gauss[row, :w] = rngs[row].standard_normal((w, 2))
        stopped = False
        for j in range(w):
            k = done + j
            dx = gauss[:, j, :] * sdt + mu_dt
            x += dx
            target = z + dx
            z_new, d_eta, d_free, absorbed_now = constrain_step_many(
                g, target, cfg.mode, cfg.eps_vertex
            )
            if frozen.any():
                z_new[frozen] = 0.0
                d_eta[frozen] = 0.0
                d_free[frozen] = 0.0
                absorbed_now[frozen] = False
            eta += d_eta
            free += d_free
            z = z_new

            r = np.hypot(z[:, 0], z[:, 1])
            np.putmask(tau0, (tau0 == NEVER) & (r <= cfg.eps_vertex), k + 1)
            np.putmask(tau0_2, (tau0_2 == NEVER) & (r <= 2.0 * cfg.eps_vertex), k + 1)
            if absorbed_mode:
                frozen |= absorbed_now

            if not terminal_only:
                if "X" in out:
                    out["X"][:, k + 1] = x
                if "Z" in out:
                    out["Z"][:, k + 1] = z
                if "eta" in out:
                    out["eta"][:, k + 1] = eta
                if "free" in out:
                    out["free"][:, k + 1] = free
            elif allow_early_stop and absorbed_mode and frozen.all():
                xt_valid = False  # X not advanced to T; callers must ignore it
                stopped = True
                break
        if stopped:
            break
        done += w

    if xt_valid:
        disp = x - z0
        zeta = np.exp(disp @ mu - 0.5 * float(mu @ mu) * cfg.T)
    else:
        zeta = np.full(m, np.nan)
    out.update(
        x0=np.tile(z0, (m, 1)),
        xt=x,
        zt=z,
        eta_t=eta,
        free_t=free,
        tau0=tau0,
        tau0_2=tau0_2,
        absorbed=frozen if absorbed_mode else np.zeros(m, dtype=bool),
        zeta=zeta,
        xt_valid=xt_valid,
        lo=lo,
        hi=hi,
    )
    return out


def _run_chunks(
    cfg: SimConfig,
    record: tuple[str, ...],
    terminal_only: bool,
    allow_early_stop: bool,
    n_workers: int,
) -> list[dict]:
    spans = _worker_spans(cfg.n_paths, n_workers)
    if len(spans) == 1:
        return [
            _simulate_chunk(cfg, lo, hi, record, terminal_only, allow_early_stop)
            for lo, hi in spans
        ]
    with ProcessPoolExecutor(max_workers=len(spans)) as pool:
        futures = [
            pool.submit(_simulate_chunk, cfg, lo, hi, record, terminal_only, allow_early_stop)
            for lo, hi in spans
        ]
        return [f.result() for f in futures]


def batch_simulate(
    cfg: SimConfig,
    n_workers: int = 1,
    record: tuple[str, ...] = FULL_RECORD,
) -> list[PathSample]:
    """Simulate cfg.n_paths constrained paths, in path-index order.

    The result is identical for any worker count: every path's randomness is
    derived only from (cfg.seed, path_index).
    """
    times = cfg.time_grid()
    chunks = _run_chunks(cfg, record, terminal_only=False, allow_early_stop=False,
                         n_workers=n_workers)
    samples: list[PathSample] = []
    for ch in chunks:
        for row in range(ch["hi"] - ch["lo"]):
            samples.append(
                PathSample(
                    geometry=cfg.geometry,
                    mode=cfg.mode,
                    eps_vertex=cfg.eps_vertex,
                    mu=cfg.mu,
                    path_index=ch["lo"] + row,
                    times=times,
                    X=ch["X"][row] if "X" in ch else None,
                    Z=ch["Z"][row] if "Z" in ch else None,
                    eta=ch["eta"][row] if "eta" in ch else None,
                    free=ch["free"][row] if "free" in ch else None,
                    zeta_T=float(ch["zeta"][row]),
                    tau0_index=int(ch["tau0"][row]),
                    absorbed=bool(ch["absorbed"][row]),
                )
            )
    return samples


def simulate_path(cfg: SimConfig, path_index: int) -> PathSample:
    """Simulate one path of the batch; bit-identical to its batch_simulate row."""
    if not (0 <= path_index < cfg.n_paths):
        raise ConfigError(f"path_index={path_index} out of range for n_paths={cfg.n_paths}")
    ch = _simulate_chunk(cfg, path_index, path_index + 1, FULL_RECORD,
                         terminal_only=False, allow_early_stop=False)
    return PathSample(
        geometry=cfg.geometry,
        mode=cfg.mode,
        eps_vertex=cfg.eps_vertex,
        mu=cfg.mu,
        path_index=path_index,
        times=cfg.time_grid(),
        X=ch["X"][0],
        Z=ch["Z"][0],
        eta=ch["eta"][0],
        free=ch["free"][0],
        zeta_T=float(ch["zeta"][0]),
        tau0_index=int(ch["tau0"][0]),
        absorbed=bool(ch["absorbed"][0]),
    )


def simulate_terminals(
    cfg: SimConfig,
    n_workers: int = 1,
    need_free_path: bool = True,
) -> TerminalBatch:
    """Terminal states only; with need_free_path=False absorbed batches may
    stop early and XT / zeta_T are not meaningful."""
    chunks = _run_chunks(
        cfg,
        record=(),
        terminal_only=True,
        allow_early_stop=not need_free_path,
        n_workers=n_workers,
    )
    cat = lambda key: np.concatenate([ch[key] for ch in chunks], axis=0)
    return TerminalBatch(
        times_T=cfg.T,
        X0=cat("x0"),
        XT=cat("xt"),
        ZT=cat("zt"),
        eta_T=cat("eta_t"),
        tau0_index=cat("tau0"),
        tau0_index_2eps=cat("tau0_2"),
        absorbed=cat("absorbed"),
        zeta_T=cat("zeta"),
        xt_valid=all(ch["xt_valid"] for ch in chunks),
    )


def girsanov_weight(path: PathSample, mu, T: float | None = None) -> float:
    """exp(mu . (X(T) - X(0)) - 0.5 |mu|^2 T): density tilting the driftless
    path law to drift mu.  T defaults to the path horizon and must lie on the
    stored grid."""
    if path.X is None:
        raise ValueError("girsanov_weight requires the free path X to be recorded")
    mu = np.asarray(mu, dtype=float)
    if T is None:
        idx = path.times.size - 1
        T = float(path.times[-1])
    else:
        idx = int(np.searchsorted(path.times, T - 1e-12))
        if idx >= path.times.size or abs(path.times[idx] - T) > 1e-9 * max(1.0, T):
            raise ValueError(f"T={T!r} is not on the stored time grid")
    disp = path.X[idx] - path.X[0]
    return float(math.exp(float(disp @ mu) - 0.5 * float(mu @ mu) * T))


def derived_seed(seed: int, stream: int = 1) -> int:
    """A decorrelated 64-bit seed for auxiliary independent batches."""
    x = (seed ^ (0x9E3779B97F4A7C15 * (stream + 1))) & 0xFFFFFFFFFFFFFFFF
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
    return (x ^ (x >> 31)) & 0xFFFFFFFFFFFFFFFF
