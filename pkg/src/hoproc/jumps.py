"""Full HO, Dunkl and complex-case F₀ processes as skew products.

The continuous radial path is integrated as in :mod:`hoproc.sde`; the
chamber element ``w_t`` jumps by left multiplication with ``r_α`` at rate
``λ_α(X_t)`` evaluated at the full state ``X_t = w_t X^W_t``.  Within a step
the rates are frozen: root ``α`` proposes an exponential time with rate
``λ_α`` and the earliest proposal inside ``dt`` fires (at most one jump per
step).

Online accumulators give the martingales
``M^α_t = Σ_{s≤t} -(α∨, X_{s-}) 1{jump across α} + ∫ λ_α(X_s)(α∨, X_s) ds``,
their predictable brackets ``∫ λ_α (α∨, X)² ds``, the drift term ``A_t``
and the Brownian part ``β_t`` of the semimartingale decomposition.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import fields, rng
from .roots import RootSystem, WeylElement, fold, pairings, radial_decompose, rescale_to_dunkl
from .sde import SimConfig, SimulationError, cap_drift, drift_function, run_parallel, require_complex_case

JUMP_KINDS = ("ho", "dunkl", "f0_complex")
DEFAULT_RATE_CAP = 1e6


@dataclass(frozen=True)
class JumpOptions:
    rate_cap: float = DEFAULT_RATE_CAP
    jump_scale: float = 1.0
    wall_epsilon: float = fields.WALL_EPSILON
    wall_start: str = "decompose"

    def __post_init__(self):
        if self.wall_start not in ("decompose", "uniform"):
            raise ValueError("wall_start must be 'decompose' or 'uniform'")
        if not self.rate_cap > 0 or self.jump_scale < 0:
            raise ValueError("rate_cap must be positive and jump_scale nonnegative")


@dataclass
class EventLog:
    path_id: np.ndarray
    t: np.ndarray
    root: np.ndarray
    pre: np.ndarray
    post: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @staticmethod
    def empty(n: int) -> "EventLog":
        return EventLog(np.empty(0, int), np.empty(0), np.empty(0, int), np.empty((0, n)), np.empty((0, n)))

    @staticmethod
    def concat(logs: list["EventLog"]) -> "EventLog":
        return EventLog(*(np.concatenate([getattr(e, f) for e in logs])
                          for f in ("path_id", "t", "root", "pre", "post")))

    def for_path(self, pid: int) -> "EventLog":
        sel = self.path_id == pid
        return EventLog(self.path_id[sel], self.t[sel], self.root[sel], self.pre[sel], self.post[sel])


@dataclass
class SkewProductPaths:
    """Batch of full paths: radial part, chamber index path, events, accumulators.

    Grid arrays have shape ``(paths, grid)`` or ``(paths, grid, ·)``; chamber
    indices refer to ``geometry.weyl_group``.
    """

    config: SimConfig
    kind: str
    geometry: RootSystem
    options: JumpOptions
    path_ids: np.ndarray
    times: np.ndarray
    radial: np.ndarray
    chamber: np.ndarray
    full: np.ndarray
    counts: np.ndarray
    events: EventLog
    jump_sum: np.ndarray
    compensator: np.ndarray
    sq_jump_sum: np.ndarray
    bracket: np.ndarray
    rate_integral: np.ndarray
    drift_term: np.ndarray
    brownian: np.ndarray
    amplitude: np.ndarray
    root_counts: np.ndarray
    capped_steps: np.ndarray
    initial_chamber: np.ndarray
    flags: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.path_ids)

    @property
    def terminal(self) -> np.ndarray:
        return self.full[:, -1]

    @property
    def terminal_chamber(self) -> np.ndarray:
        return self.chamber[:, -1]

    def chamber_element(self, i: int, g: int = -1) -> WeylElement:
        return self.geometry.weyl_group[int(self.chamber[i, g])]

    def at(self, t: float) -> np.ndarray:
        return self.full[:, int(np.argmin(np.abs(self.times - t)))]

    @staticmethod
    def concat(parts: list["SkewProductPaths"]) -> "SkewProductPaths":
        first = parts[0]
        arrays = {}
        for name in ("path_ids", "radial", "chamber", "full", "counts", "jump_sum", "compensator",
                     "sq_jump_sum", "bracket", "rate_integral", "drift_term", "brownian",
                     "amplitude", "root_counts", "capped_steps", "initial_chamber"):
            arrays[name] = np.concatenate([getattr(p, name) for p in parts])
        return SkewProductPaths(first.config, first.kind, first.geometry, first.options,
                                times=first.times, events=EventLog.concat([p.events for p in parts]),
                                flags=list(first.flags), **arrays)


def _geometry(config: SimConfig, kind: str) -> RootSystem:
    return rescale_to_dunkl(config.model) if kind == "dunkl" else config.model


def _rate_and_drift_coef(config: SimConfig, kind: str, geometry: RootSystem):
    """Closures mapping full-state pairings to (jump rates, drift coefficients per root)."""
    k = geometry.positive_k
    n2 = geometry.positive_norm2
    floor = config.floor

    def signed_floor(p):
        return np.where(p < 0, -1.0, 1.0) * np.maximum(np.abs(p), floor)

    if kind == "dunkl":
        def rates(p, eps):
            on = np.abs(p) < eps
            return np.where(on, 0.0, k / np.where(on, 1.0, p) ** 2)

        def coef(p):
            return k / signed_floor(p)
    else:
        def rates(p, eps):
            on = np.abs(p) < eps
            return np.where(on, 0.0, k * n2 / 8.0 * fields.inv_sinh2(0.5 * np.where(on, 1.0, p)))

        if kind == "ho":
            def coef(p):
                return 0.5 * k / np.tanh(0.5 * signed_floor(p))
        else:
            def coef(p):
                return 1.0 / signed_floor(p)
    return rates, coef


def _matvec(mats: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise ``mats[i] @ x[i]`` with a fixed summation order."""
    out = mats[:, :, 0] * x[:, None, 0]
    for j in range(1, x.shape[1]):
        out = out + mats[:, :, j] * x[:, None, j]
    return out


def _initial_chambers(config: SimConfig, geometry: RootSystem, options: JumpOptions, path_ids) -> np.ndarray:
    w0 = radial_decompose(geometry, config.start).w
    if options.wall_start == "decompose":
        return np.full(len(path_ids), w0.index, dtype=int)
    # Uniform over {w : w·start = start}: the start does not single out a chamber.
    stab = [w.index for w in geometry.weyl_group
            if np.max(np.abs(w.matrix @ config.start - config.start)) < 1e-12]
    out = np.empty(len(path_ids), dtype=int)
    for i, pid in enumerate(path_ids):
        g = rng.stream(config.master_seed, pid, rng.CHAMBER, config.channel)
        out[i] = stab[int(g.integers(len(stab)))]
    return out


def _skew_chunk(args, path_ids) -> SkewProductPaths:
    config, kind, options = args
    model = config.model
    geometry = _geometry(config, kind)
    n, dt, floor = model.rank, config.dt, config.floor
    n_steps = config.n_steps
    grid = config.grid_indices()
    store_at = np.full(n_steps + 1, -1)
    store_at[grid] = np.arange(len(grid))
    P, G = len(path_ids), len(grid)
    pos = geometry.positive_roots
    m = len(pos)
    coroot = 2.0 / geometry.positive_norm2
    root_len = np.sqrt(geometry.positive_norm2)
    mats = geometry.weyl_matrices
    table = geometry.reflection_table
    drift = drift_function(config)
    rates_fn, coef_fn = _rate_and_drift_coef(config, kind, geometry)
    eps = options.wall_epsilon

    xw = np.tile(config.start, (P, 1))
    w = _initial_chambers(config, geometry, options, path_ids)
    w_init = w.copy()
    x = _matvec(mats[w], xw)

    radial = np.empty((P, G, n)); chamber = np.empty((P, G), dtype=int); full = np.empty((P, G, n))
    counts = np.zeros((P, G), dtype=np.int64)
    jsum_g = np.zeros((P, G, m)); comp_g = np.zeros((P, G, m)); sq_g = np.zeros((P, G, m))
    brk_g = np.zeros((P, G, m)); rate_g = np.zeros((P, G, m))
    A_g = np.zeros((P, G, n)); beta_g = np.zeros((P, G, n))
    radial[:, 0], chamber[:, 0], full[:, 0] = xw, w, x

    jsum = np.zeros((P, m)); comp = np.zeros((P, m)); sq = np.zeros((P, m)); brk = np.zeros((P, m))
    rate_int = np.zeros((P, m)); a_coef = np.zeros((P, m)); beta = np.zeros((P, n))
    amplitude = np.zeros(P); root_counts = np.zeros((P, m), dtype=np.int64)
    capped = np.zeros(P, dtype=np.int64); n_events = np.zeros(P, dtype=np.int64)
    ev_rows, ev_t, ev_root, ev_pre, ev_post = [], [], [], [], []
    rows_all = np.arange(P)

    noise = rng.BlockDraws(config.master_seed, path_ids, rng.NOISE, config.channel, (n,))
    unif = rng.BlockDraws(config.master_seed, path_ids, rng.JUMP, config.channel, (m,), kind="uniform")
    sq_dt = math.sqrt(dt)
    k = 0
    while k < n_steps:
        b = min(512, n_steps - k)
        dW_block = noise.next_block(b) * sq_dt
        u_block = unif.next_block(b)
        for j in range(b):
            t = (k + j) * dt
            p = pairings(x, pos)
            lam = rates_fn(p, eps) * options.jump_scale
            over = lam > options.rate_cap
            capped += over.any(axis=1)
            lam = np.minimum(lam, options.rate_cap)
            cv = coroot * p
            rate_int += lam * dt
            comp += lam * cv * dt
            brk += lam * cv * cv * dt
            a_coef -= lam * cv * dt
            with np.errstate(divide="ignore", over="ignore"):
                wait = -np.log1p(-u_block[:, j]) / lam
            first = np.argmin(wait, axis=1)
            fired = wait[rows_all, first] < dt
            if fired.any():
                rows = np.flatnonzero(fired)
                a = first[rows]
                pre = x[rows]
                c = 2.0 * p[rows, a] / geometry.positive_norm2[a]
                post = pre - (c[:, None]) * pos[a]
                x = x.copy()
                x[rows] = post
                w = w.copy()
                w[rows] = table[a, w[rows]]
                jsum[rows, a] -= c
                sq[rows, a] += c * c
                amplitude[rows] += np.abs(c) * root_len[a]
                root_counts[rows, a] += 1
                n_events[rows] += 1
                ev_rows.append(path_ids[rows]); ev_t.append(t + wait[rows, a]); ev_root.append(a)
                ev_pre.append(pre); ev_post.append(post)
                p = pairings(x, pos)
            a_coef += coef_fn(p) * dt
            dW = dW_block[:, j]
            beta += _matvec(mats[w], dW)
            bvec = cap_drift(drift(xw, floor), config.drift_cap)
            xw = fold(model, xw + bvec * dt + dW)
            if not np.all(np.isfinite(xw)):
                bad = path_ids[~np.all(np.isfinite(xw), axis=1)][0]
                raise SimulationError(f"path {bad}: non-finite state at step {k + j + 1}")
            x = _matvec(mats[w], xw)
            s = store_at[k + j + 1]
            if s >= 0:
                radial[:, s], chamber[:, s], full[:, s] = xw, w, x
                counts[:, s] = n_events
                jsum_g[:, s], comp_g[:, s], sq_g[:, s], brk_g[:, s] = jsum, comp, sq, brk
                rate_g[:, s] = rate_int
                A_g[:, s] = _combine_rows(a_coef, pos)
                beta_g[:, s] = beta
        k += b

    if ev_t:
        events = EventLog(np.concatenate(ev_rows), np.concatenate(ev_t), np.concatenate(ev_root),
                          np.concatenate(ev_pre), np.concatenate(ev_post))
    else:
        events = EventLog.empty(n)
    return SkewProductPaths(
        config, kind, geometry, options, np.asarray(path_ids), grid * dt, radial, chamber, full, counts,
        events, jsum_g, comp_g, sq_g, brk_g, rate_g, A_g, beta_g, amplitude, root_counts, capped, w_init,
    )


def _combine_rows(coef: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    out = coef[:, 0, None] * vectors[0]
    for i in range(1, len(vectors)):
        out = out + coef[:, i, None] * vectors[i]
    return out


def simulate_skew_product(config: SimConfig, kind: str | None = None, options: JumpOptions | None = None,
                          path_ids=None) -> SkewProductPaths:
    """Simulate the full process of the given kind (defaults to ``config.process``)."""
    kind = kind or config.process
    if kind not in JUMP_KINDS:
        raise ValueError(f"jump process kind must be one of {JUMP_KINDS}")
    if kind == "f0_complex":
        require_complex_case(config.model)
    if config.process != kind:
        config = replace(config, process=kind)
    options = options or JumpOptions()
    ids = np.arange(config.path_count) if path_ids is None else np.asarray(path_ids)
    parts = run_parallel(_skew_chunk, (config, kind, options), ids, config.workers)
    out = SkewProductPaths.concat(parts)
    ev = out.events
    order = np.lexsort((ev.t, ev.path_id))
    out.events = EventLog(ev.path_id[order], ev.t[order], ev.root[order], ev.pre[order], ev.post[order])
    k_eff = rescale_to_dunkl(config.model).positive_k
    if np.any(k_eff < 0.5):
        msg = "k_α + k_2α < 1/2 on some orbit: finite-jump guarantee does not apply"
        warnings.warn(msg, stacklevel=2)
        out.flags.append(msg)
    return out


@dataclass
class MartingaleDecomposition:
    """Grid paths of ``M^α``, its compensator, brackets, ``A_t`` and the residual."""

    times: np.ndarray
    M: np.ndarray
    compensator: np.ndarray
    bracket: np.ndarray
    realized_sq: np.ndarray
    A: np.ndarray
    beta: np.ndarray
    residual: np.ndarray
    simultaneous_jumps: int


def compute_malpha(paths: SkewProductPaths) -> MartingaleDecomposition:
    M = paths.jump_sum + paths.compensator
    pos = paths.geometry.positive_roots
    jumps_part = np.einsum("pgm,mn->pgn", M, pos)
    residual = paths.full - paths.full[:, :1] - paths.brownian - jumps_part - paths.drift_term
    ev = paths.events
    step_id = np.floor(ev.t / paths.config.dt + 1e-9).astype(np.int64)
    keys = np.stack([ev.path_id, step_id], axis=1)
    simultaneous = 0
    if len(keys):
        _, cnt = np.unique(keys, axis=0, return_counts=True)
        simultaneous = int(np.sum(cnt > 1))
    return MartingaleDecomposition(paths.times, M, paths.compensator, paths.bracket, paths.sq_jump_sum,
                                   paths.drift_term, paths.brownian, residual, simultaneous)


@dataclass
class JumpStats:
    times: np.ndarray
    mean_counts: np.ndarray
    count_quantiles: dict
    mean_amplitude: float
    amplitude_se: float
    amplitude_quantiles: dict
    root_counts: np.ndarray
    w_infinity: np.ndarray | None
    late_jump_fraction: float
    w_infinity_reliable: np.ndarray | None
    suppressed_reason: str | None = None


def jump_statistics(paths: SkewProductPaths, late_window: float = 0.1) -> JumpStats:
    if len(paths) < 1:
        raise ValueError("need at least one path")
    horizon = paths.config.n_steps * paths.config.dt
    qs = (0.05, 0.25, 0.5, 0.75, 0.95)
    ev = paths.events
    late_paths = np.unique(ev.path_id[ev.t > (1.0 - late_window) * horizon])
    late = np.isin(paths.path_ids, late_paths)
    k_eff = rescale_to_dunkl(paths.config.model).positive_k
    suppressed = None
    w_inf = paths.terminal_chamber.copy()
    reliable = ~late
    if np.any(k_eff < 0.5):
        suppressed = "k_α + k_2α < 1/2: no finite-jump guarantee, w_∞ not reported"
        w_inf, reliable = None, None
    amp = paths.amplitude
    return JumpStats(
        times=paths.times,
        mean_counts=paths.counts.mean(axis=0),
        count_quantiles={q: np.quantile(paths.counts, q, axis=0) for q in qs},
        mean_amplitude=float(amp.mean()),
        amplitude_se=float(amp.std(ddof=1) / math.sqrt(len(amp))) if len(amp) > 1 else float("nan"),
        amplitude_quantiles={q: float(np.quantile(amp, q)) for q in qs},
        root_counts=paths.root_counts.sum(axis=0),
        w_infinity=w_inf,
        late_jump_fraction=float(late.mean()),
        w_infinity_reliable=reliable,
        suppressed_reason=suppressed,
    )


def write_events_csv(paths: SkewProductPaths, fh) -> None:
    """Event log: ``path_id,t,root_index,pre_1..pre_n,post_1..post_n``."""
    n = paths.full.shape[-1]
    fh.write("path_id,t,root_index," + ",".join(f"pre_{i + 1}" for i in range(n)) + ","
             + ",".join(f"post_{i + 1}" for i in range(n)) + "\n")
    ev = paths.events
    order = np.lexsort((ev.t, ev.path_id))
    for i in order:
        vals = ",".join(repr(float(v)) for v in np.concatenate([ev.pre[i], ev.post[i]]))
        fh.write(f"{int(ev.path_id[i])},{float(ev.t[i])!r},{int(ev.root[i])},{vals}\n")


def write_full_csv(paths: SkewProductPaths, fh, stride: int = 1) -> None:
    """Full states: ``path_id,t,x_1..x_n,chamber_word``."""
    n = paths.full.shape[-1]
    fh.write("path_id,t," + ",".join(f"x_{i + 1}" for i in range(n)) + ",chamber_word\n")
    group = paths.geometry.weyl_group
    for row, pid in enumerate(paths.path_ids):
        for g in range(0, len(paths.times), stride):
            xs = ",".join(repr(float(v)) for v in paths.full[row, g])
            fh.write(f"{int(pid)},{float(paths.times[g])!r},{xs},{group[paths.chamber[row, g]].word_str() or 'e'}\n")
