"""Euler-Maruyama integration of the continuous radial processes.

Each step evaluates the drift with every pairing floored at ``wall_floor``,
optionally caps the drift norm, adds the Brownian increment and folds the
result back into the closed positive chamber.  Paths are simulated in
vectorized batches; every path draws from its own stream so results are
bit-identical for any batching or worker count.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import fields, rng
from .roots import RootSystem, fold, pairings, rescale_to_dunkl

PROCESS_KINDS = ("ho", "dunkl", "intrinsic", "f0_complex", "brownian")
BLOCK_STEPS = 512


class SimulationError(RuntimeError):
    """A path produced a non-finite state."""


def default_wall_floor(dt: float) -> float:
    # Floors the drift at the diffusive scale: one step moves at most ~k√dt per root.
    return max(math.sqrt(dt), 1e-10)


@dataclass(frozen=True)
class SimConfig:
    model: RootSystem
    process: str = "ho"
    start: tuple | np.ndarray | None = None
    dt: float = 1e-3
    horizon: float = 1.0
    path_count: int = 100
    master_seed: int = 0
    wall_floor: float | None = None
    drift_cap: float | None = None
    record_noise: bool = False
    stride: int = 1
    channel: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.process not in PROCESS_KINDS:
            raise ValueError(f"unknown process kind {self.process!r}; expected one of {PROCESS_KINDS}")
        if not (self.dt > 0 and self.horizon > 0 and self.dt <= self.horizon):
            raise ValueError("need 0 < dt <= horizon")
        if self.path_count < 1 or self.stride < 1:
            raise ValueError("path_count and stride must be positive")
        if self.wall_floor is not None and not self.wall_floor > 0:
            raise ValueError("wall_floor must be positive")
        start = np.zeros(self.model.rank) if self.start is None else np.asarray(self.start, dtype=float)
        if start.shape != (self.model.rank,):
            raise ValueError(f"start must have {self.model.rank} coordinates")
        if not self.model.in_chamber(start, tol=1e-12):
            raise ValueError("start must lie in the closed positive chamber")
        object.__setattr__(self, "start", start)

    @property
    def floor(self) -> float:
        return self.wall_floor if self.wall_floor is not None else default_wall_floor(self.dt)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def dunkl(self) -> RootSystem:
        return rescale_to_dunkl(self.model)

    def grid_indices(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.stride)
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return idx


def drift_function(config: SimConfig) -> Callable[[np.ndarray, float], np.ndarray]:
    """Floored radial drift ``b(x, floor)`` for the configured process kind."""
    model, kind = config.model, config.process
    if kind == "ho":
        return lambda x, floor: fields.ho_drift_floored(model, x, floor)
    if kind == "brownian":
        return lambda x, floor: np.zeros_like(x)
    dunkl = rescale_to_dunkl(model)
    if kind == "dunkl":
        return lambda x, floor: fields.rational_drift_floored(dunkl, x, floor)
    if kind == "f0_complex":
        require_complex_case(model)
    return lambda x, floor: fields.rational_drift_floored(dunkl, x, floor, unit=True)


def require_complex_case(model: RootSystem) -> None:
    if not model.is_reduced or not np.allclose(model.multiplicities, 1.0):
        raise ValueError("the F0-process is only available in the complex case (reduced system, k = 1)")


def cap_drift(b: np.ndarray, drift_cap: float | None) -> np.ndarray:
    if drift_cap is None:
        return b
    norm = np.sqrt(np.sum(b * b, axis=-1, keepdims=True))
    return b * np.minimum(1.0, drift_cap / np.maximum(norm, 1e-300))


def step(model: RootSystem, state: np.ndarray, drift_field, dW: np.ndarray, dt: float,
         wall_floor: float, drift_cap: float | None = None) -> np.ndarray:
    """One Euler-Maruyama step followed by the Weyl fold."""
    b = cap_drift(drift_field(state, wall_floor), drift_cap)
    nxt = fold(model, state + b * dt + dW)
    if not np.all(np.isfinite(nxt)):
        raise SimulationError("non-finite state after Euler step")
    return nxt


@dataclass
class RadialPaths:
    """A batch of radial paths (row ``i`` belongs to path ``path_ids[i]``).

    ``noise`` holds the Brownian increments (variance ``dt`` per step and
    coordinate) when recorded.  ``coth_integral`` and ``rate_integral`` are
    the online left-point sums of ``coth((α, X)/2)`` and of the HO jump rate
    per positive root.
    """

    config: SimConfig
    path_ids: np.ndarray
    times: np.ndarray
    states: np.ndarray
    noise: np.ndarray | None
    coth_integral: np.ndarray
    rate_integral: np.ndarray
    near_wall_steps: np.ndarray
    flags: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.path_ids)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[:, -1]

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.states[:, i]

    def path(self, i: int) -> "RadialPaths":
        sl = slice(i, i + 1)
        return RadialPaths(self.config, self.path_ids[sl], self.times, self.states[sl],
                           None if self.noise is None else self.noise[sl],
                           self.coth_integral[sl], self.rate_integral[sl],
                           self.near_wall_steps[sl], list(self.flags))

    @staticmethod
    def concat(parts: list["RadialPaths"]) -> "RadialPaths":
        first = parts[0]
        noise = None if first.noise is None else np.concatenate([p.noise for p in parts])
        return RadialPaths(
            first.config,
            np.concatenate([p.path_ids for p in parts]),
            first.times,
            np.concatenate([p.states for p in parts]),
            noise,
            np.concatenate([p.coth_integral for p in parts]),
            np.concatenate([p.rate_integral for p in parts]),
            np.concatenate([p.near_wall_steps for p in parts]),
            list(first.flags),
        )


def _start_flags(config: SimConfig) -> list[str]:
    model = config.model
    flags = []
    p = pairings(config.start, model.positive_roots)
    if np.any(np.abs(p) < 1e-12):
        dunkl = rescale_to_dunkl(model)
        if config.process in ("ho", "dunkl") and np.any(dunkl.positive_k < 0.5):
            msg = "start on a wall with k_α + k_2α < 1/2: wall avoidance is not guaranteed"
            warnings.warn(msg, stacklevel=3)
            flags.append(msg)
    return flags


def _radial_chunk(config: SimConfig, path_ids: np.ndarray) -> RadialPaths:
    model = config.model
    n, dt, floor = model.rank, config.dt, config.floor
    n_steps = config.n_steps
    grid = config.grid_indices()
    store_at = np.full(n_steps + 1, -1)
    store_at[grid] = np.arange(len(grid))
    P = len(path_ids)
    drift = drift_function(config)
    pos = model.positive_roots
    rate_coef = model.positive_k * model.positive_norm2 / 8.0

    x = np.tile(config.start, (P, 1))
    states = np.empty((P, len(grid), n))
    states[:, 0] = x
    noise = np.empty((P, n_steps, n)) if config.record_noise else None
    coth_int = np.zeros((P, len(pos)))
    rate_int = np.zeros((P, len(pos)))
    near_wall = np.zeros(P, dtype=np.int64)
    draws = rng.BlockDraws(config.master_seed, path_ids, rng.NOISE, config.channel, (n,))
    sq = math.sqrt(dt)

    k = 0
    while k < n_steps:
        b = min(BLOCK_STEPS, n_steps - k)
        block = draws.next_block(b) * sq
        if noise is not None:
            noise[:, k:k + b] = block
        for j in range(b):
            p = pairings(x, pos)
            near_wall += np.min(p, axis=1) < floor
            pf = np.maximum(p, floor)
            coth_int += dt / np.tanh(0.5 * pf)
            rate_int += dt * rate_coef * fields.inv_sinh2(0.5 * pf)
            dW = block[:, j]
            bvec = cap_drift(drift(x, floor), config.drift_cap)
            x = fold(model, x + bvec * dt + dW)
            if not np.all(np.isfinite(x)):
                bad = path_ids[~np.all(np.isfinite(x), axis=1)][0]
                raise SimulationError(f"path {bad}: non-finite state at step {k + j + 1}")
            s = store_at[k + j + 1]
            if s >= 0:
                states[:, s] = x
        k += b
    return RadialPaths(config, np.asarray(path_ids), grid * dt, states, noise,
                       coth_int, rate_int, near_wall, _start_flags(config))


def _split(ids: np.ndarray, workers: int) -> list[np.ndarray]:
    return [c for c in np.array_split(ids, max(1, workers)) if len(c)]


def run_parallel(fn, config, ids, workers):
    chunks = _split(ids, workers)
    if workers <= 1 or len(chunks) == 1:
        return [fn(config, c) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [config] * len(chunks), chunks))


def simulate_radial(config: SimConfig, path_ids=None) -> RadialPaths:
    """Simulate ``config.path_count`` radial paths (or the given path indices)."""
    ids = np.arange(config.path_count) if path_ids is None else np.asarray(path_ids)
    parts = run_parallel(_radial_chunk, config, ids, config.workers)
    return RadialPaths.concat(parts)


def simulate_coupled_pair(config: SimConfig, start_a, start_b) -> tuple[RadialPaths, RadialPaths]:
    """Two batches driven by identical Brownian increments from different starts."""
    a = simulate_radial(replace(config, start=np.asarray(start_a, dtype=float)))
    b = simulate_radial(replace(config, start=np.asarray(start_b, dtype=float)))
    return a, b


# squared Bessel reference ------------------------------------------------------

@dataclass(frozen=True)
class BesselRef:
    dimension: float
    start_radius: float = 0.0

    def __post_init__(self):
        if not self.dimension > 0:
            raise ValueError("Bessel dimension must be positive")
        if self.start_radius < 0:
            raise ValueError("start radius must be nonnegative")


def simulate_bessel_sq(ref: BesselRef, dt: float, horizon: float, seed: int,
                       path_count: int = 1, channel: int = rng.CHANNELS["reference"]) -> np.ndarray:
    """Euler scheme for ``dZ = d dt + 2√Z dβ`` floored at 0; shape ``(paths, steps + 1)``."""
    n_steps = int(round(horizon / dt))
    draws = rng.BlockDraws(seed, np.arange(path_count), rng.NOISE, channel, ())
    z = np.full(path_count, ref.start_radius ** 2)
    out = np.empty((path_count, n_steps + 1))
    out[:, 0] = z
    sq = math.sqrt(dt)
    k = 0
    while k < n_steps:
        b = min(BLOCK_STEPS, n_steps - k)
        block = draws.next_block(b) * sq
        for j in range(b):
            z = np.maximum(z + ref.dimension * dt + 2.0 * np.sqrt(z) * block[:, j], 0.0)
            out[:, k + j + 1] = z
        k += b
    return out


# path functionals ---------------------------------------------------------------

@dataclass
class GirsanovIntegral:
    """``L_t = ∫ g dβ`` and ``⟨L⟩_t = ∫ |g|² ds`` on the grid, and the log-weight."""

    L: np.ndarray
    qv: np.ndarray

    @property
    def log_weight(self) -> np.ndarray:
        return self.L - 0.5 * self.qv

    @property
    def weight(self) -> np.ndarray:
        return np.exp(self.log_weight)


def path_integral(paths: RadialPaths, kind: str, model: RootSystem | None = None, integrand=None):
    """Left-point sums of a functional along stored paths.

    ``kind`` is ``"coth_alpha"`` or ``"jump_rate_alpha"`` (per-root
    Riemann sums, shape ``(paths, grid, roots)``), ``"girsanov"`` (Itô sum of
    the Girsanov integrand against the recorded noise) or ``"constant"``
    (Itô sum of the constant vector ``integrand``).
    """
    model = model or paths.config.model
    if paths.config.stride != 1:
        raise ValueError("path_integral needs every grid point (stride 1)")
    x = paths.states[:, :-1]
    dt = paths.config.dt
    if kind in ("coth_alpha", "jump_rate_alpha"):
        p = np.maximum(pairings(x, model.positive_roots), paths.config.floor)
        if kind == "coth_alpha":
            vals = 1.0 / np.tanh(0.5 * p)
        else:
            vals = model.positive_k * model.positive_norm2 / 8.0 * fields.inv_sinh2(0.5 * p)
        return np.concatenate([np.zeros_like(vals[:, :1]), np.cumsum(vals * dt, axis=1)], axis=1)
    if paths.noise is None:
        raise ValueError("path_integral of a stochastic integral needs the recorded noise")
    if kind == "girsanov":
        g = fields.girsanov_integrand(model, x)
    elif kind == "constant":
        g = np.broadcast_to(np.asarray(integrand, dtype=float), x.shape)
    else:
        raise ValueError(f"unknown integrand kind {kind!r}")
    dL = np.sum(g * paths.noise, axis=-1)
    dq = np.sum(g * g, axis=-1) * dt
    zero = np.zeros((len(paths), 1))
    return GirsanovIntegral(np.concatenate([zero, np.cumsum(dL, axis=1)], axis=1),
                            np.concatenate([zero, np.cumsum(dq, axis=1)], axis=1))


def write_paths_csv(paths, fh, stride: int = 1) -> None:
    """CSV with header ``path_id,t,x_1..x_n``; one row per stored grid point."""
    n = paths.states.shape[-1]
    fh.write("path_id,t," + ",".join(f"x_{i + 1}" for i in range(n)) + "\n")
    for row, pid in enumerate(paths.path_ids):
        for g in range(0, len(paths.times), stride):
            xs = ",".join(repr(float(v)) for v in paths.states[row, g])
            fh.write(f"{int(pid)},{float(paths.times[g])!r},{xs}\n")
