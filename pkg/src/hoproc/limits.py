"""Normalizations and samplers for the long-time and scaling limits.

Every sampler returns plain arrays plus the statistics needed by the
verification registry; pass/fail thresholds live in :mod:`hoproc.verification`.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng, stats
from .jumps import JumpOptions, SkewProductPaths, simulate_skew_product
from .roots import RootSystem, WeylElement, chamber_signs, combine, pairings, rescale_to_dunkl
from .sde import RadialPaths, SimConfig, path_integral, require_complex_case, simulate_radial


def config_hash(config: SimConfig, extra: dict | None = None) -> str:
    """Short content hash of a simulation configuration (provenance tag)."""
    payload = {
        "roots": np.round(config.model.roots, 12).tolist(),
        "k": np.round(config.model.multiplicities, 12).tolist(),
        "process": config.process, "start": np.asarray(config.start).tolist(),
        "dt": config.dt, "horizon": config.horizon, "paths": config.path_count,
        "seed": config.master_seed, "floor": config.floor, "channel": config.channel,
    }
    payload.update(extra or {})
    return hashlib.sha1(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


@dataclass
class NormalizedSample:
    T: float
    values: np.ndarray
    provenance: str
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("normalized sample contains non-finite values")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ChamberSignVector:
    """Signs ``ε^α`` with ``ε^α α ∈ w R⁺`` for one Weyl element."""

    model: RootSystem
    element: WeylElement
    signs: np.ndarray

    @classmethod
    def of(cls, model: RootSystem, w: WeylElement) -> "ChamberSignVector":
        return cls(model, w, chamber_signs(model, w))

    @property
    def w_rho(self) -> np.ndarray:
        """``w·ρ = ½ Σ_{α>0} k_α ε^α α``."""
        return 0.5 * combine(self.model.positive_k * self.signs, self.model.positive_roots)


def w_rho_table(model: RootSystem) -> np.ndarray:
    """``w·ρ`` for every element of the Weyl group, row ``i`` for element index ``i``."""
    return np.stack([ChamberSignVector.of(model, w).w_rho for w in model.weyl_group])


# law of large numbers and central limit ------------------------------------------

@dataclass
class LLNEstimate:
    estimate: np.ndarray
    se: np.ndarray
    rho: np.ndarray
    T: float
    n: int

    @property
    def relative_error(self) -> float:
        return float(np.linalg.norm(self.estimate - self.rho) / np.linalg.norm(self.rho))


def _terminal_time(paths, T: float | None) -> tuple[float, int]:
    T = float(paths.times[-1]) if T is None else float(T)
    g = int(np.argmin(np.abs(paths.times - T)))
    if abs(paths.times[g] - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"time {T} is not on the stored grid")
    return T, g


def lln_estimate(paths: RadialPaths, T: float | None = None) -> LLNEstimate:
    """Mean of ``X^W_T / T`` with per-coordinate standard errors."""
    if len(paths) < 10:
        raise ValueError("LLN estimate needs at least 10 paths")
    T, g = _terminal_time(paths, T)
    mc = stats.mean_cov(paths.states[:, g] / T)
    return LLNEstimate(mc.mean, mc.mean_se, paths.config.model.rho, T, len(paths))


def clt_sample(paths: RadialPaths, T: float | None = None) -> NormalizedSample:
    """``(X^W_T - ρT) / √T``; should be close to a standard Gaussian for large ``T``."""
    if len(paths) < 10:
        raise ValueError("CLT sample needs at least 10 paths")
    T, g = _terminal_time(paths, T)
    vals = (paths.states[:, g] - paths.config.model.rho * T) / math.sqrt(T)
    return NormalizedSample(T, vals, config_hash(paths.config, {"kind": "clt"}))


def nonradial_clt_sample(paths: SkewProductPaths, T: float | None = None) -> NormalizedSample:
    """``(X_T - w_T·ρT) / √T`` centered with the chamber occupied at time ``T``.

    The late-jump fraction (paths that changed chamber in the final tenth of
    the horizon) is reported in ``extra`` since such paths blur the centering.
    """
    k_eff = rescale_to_dunkl(paths.config.model).positive_k
    if np.any(k_eff < 0.5):
        raise ValueError("non-radial CLT requires k_α + k_2α ≥ 1/2 on every orbit")
    T, g = _terminal_time(paths, T)
    table = w_rho_table(paths.geometry)
    centers = table[paths.chamber[:, g]]
    vals = (paths.full[:, g] - centers * T) / math.sqrt(T)
    ev = paths.events
    late = np.isin(paths.path_ids, ev.path_id[ev.t > 0.9 * T])
    return NormalizedSample(T, vals, config_hash(paths.config, {"kind": "nonradial_clt"}),
                            {"late_jump_fraction": float(late.mean())})


def gaussianity(sample: NormalizedSample) -> dict:
    """Covariance deviation from the identity and per-coordinate KS against N(0, 1)."""
    from scipy.stats import norm

    mc = stats.mean_cov(sample.values)
    ks = [stats.ks_1d(sample.values[:, i], norm.cdf) for i in range(sample.values.shape[1])]
    return {
        "mean": mc.mean.tolist(),
        "cov": mc.cov.tolist(),
        "cov_opnorm_dev": stats.operator_norm_deviation(mc.cov),
        "ks_p": [r.p_value for r in ks],
        "ks_stat": [r.statistic for r in ks],
    }


# HO → Dunkl scaling limit --------------------------------------------------------

def scaled_ho_sample(model: RootSystem, T: float, dt: float, path_count: int, seed: int,
                     channel: int = rng.CHANNELS["ho"], start=None, options: JumpOptions | None = None) -> np.ndarray:
    """Samples of ``X^T_1 = √T X_{1/T}`` for the full HO process started at ``start/√T``.

    The HO path is integrated over ``[0, 1/T]`` with step ``dt/T``; in the
    scaled coordinates this is an Euler scheme of step ``dt`` for drift
    ``T^{-1/2} b(x/√T)`` and jump rates ``T^{-1} λ(x/√T)``.  The rate cap is
    scaled by ``T`` so that it stays fixed in the scaled clock.
    """
    options = options or JumpOptions()
    options = replace(options, rate_cap=options.rate_cap * T)
    s = math.sqrt(T)
    x0 = np.zeros(model.rank) if start is None else np.asarray(start, dtype=float) / s
    cfg = SimConfig(model, "ho", start=x0, dt=dt / T, horizon=1.0 / T, path_count=path_count,
                    master_seed=seed, stride=int(round(1.0 / dt)), channel=channel,
                    wall_floor=math.sqrt(dt / T))
    return simulate_skew_product(cfg, options=options).terminal * s


def dunkl_sample(model: RootSystem, t: float, dt: float, path_count: int, seed: int,
                 channel: int = rng.CHANNELS["dunkl"], start=None, options: JumpOptions | None = None) -> np.ndarray:
    """Full Dunkl process at time ``t`` for the rescaled system of ``model``."""
    x0 = np.zeros(model.rank) if start is None else np.asarray(start, dtype=float)
    cfg = SimConfig(model, "dunkl", start=x0, dt=dt, horizon=t, path_count=path_count,
                    master_seed=seed, stride=int(round(t / dt)), channel=channel)
    return simulate_skew_product(cfg, options=options).terminal


@dataclass
class DunklConvergenceRow:
    T: float
    energy: float
    p_value: float
    coupled_energy: float


def dunkl_convergence_test(model: RootSystem, T_grid=(1.0, 1e2, 1e4), dt: float = 1e-3,
                           path_count: int = 500, seed: int = 42, permutations: int = 500,
                           dunkl_model: RootSystem | None = None) -> list[DunklConvergenceRow]:
    """Energy distance between ``√T X_{1/T}`` and ``Z_1`` for each ``T``.

    ``p_value`` compares the HO sample with an independent Dunkl sample.
    ``coupled_energy`` compares it with a Dunkl sample driven by the same
    Brownian increments and jump uniforms, which removes most Monte Carlo
    noise from the trend in ``T``.
    """
    if dunkl_model is not None:
        expected = rescale_to_dunkl(model)
        if (dunkl_model.roots.shape != expected.roots.shape
                or not np.allclose(dunkl_model.roots, expected.roots)
                or not np.allclose(dunkl_model.multiplicities, expected.multiplicities)):
            raise ValueError("Dunkl system must be the rescaling of the HO system")
    indep = dunkl_sample(model, 1.0, dt, path_count, seed, channel=rng.CHANNELS["dunkl"])
    coupled = dunkl_sample(model, 1.0, dt, path_count, seed, channel=rng.CHANNELS["ho"])
    rows = []
    for T in T_grid:
        ho = scaled_ho_sample(model, T, dt, path_count, seed)
        res = stats.energy_distance_perm(ho, indep, permutations=permutations, seed=seed)
        rows.append(DunklConvergenceRow(float(T), res.statistic, res.p_value,
                                        stats.energy_statistic(ho, coupled)))
    return rows


# Girsanov identity ----------------------------------------------------------------

DEFAULT_FUNCTIONALS = {
    "one": lambda x: np.ones(len(x)),
    "norm2": lambda x: np.sum(x * x, axis=-1),
    "gauss": lambda x: np.exp(-np.sum(x * x, axis=-1)),
}


@dataclass
class GirsanovRow:
    name: str
    direct: float
    direct_se: float
    reweighted: float
    reweighted_se: float

    @property
    def pooled_se(self) -> float:
        return math.hypot(self.direct_se, self.reweighted_se)

    @property
    def z(self) -> float:
        return (self.direct - self.reweighted) / self.pooled_se if self.pooled_se > 0 else 0.0


@dataclass
class GirsanovReport:
    rows: list[GirsanovRow]
    mean_weight: float
    weight_se: float
    min_weight: float
    t: float


def girsanov_check(model: RootSystem, t: float = 1.0, dt: float = 1e-3, path_count: int = 4000,
                   seed: int = 42, start=None, functionals: dict | None = None) -> GirsanovReport:
    """Compare ``E_P f(X^W_t)`` (HO radial) with ``E_Q[M_t f(Z^W_t)]`` (Dunkl radial).

    ``M_t = exp(∫ g dβ - ½ ∫ |g|² ds)`` with ``g`` the difference of the two
    radial drifts, accumulated in log space along the recorded Dunkl noise.
    The default start is the point on the first simple root direction with
    ``(α, x) = 1``.
    """
    if start is None:
        a = model.simple_roots[0]
        start = a / float(a @ a)
        if not model.in_chamber(start, tol=1e-12):
            start = model.rho / float(np.min(pairings(model.rho, model.positive_roots)))
    functionals = dict(functionals or DEFAULT_FUNCTIONALS)
    for i in range(model.rank):
        functionals.setdefault(f"x{i + 1}", (lambda j: (lambda x: x[:, j]))(i))
    p_cfg = SimConfig(model, "ho", start=start, dt=dt, horizon=t, path_count=path_count,
                      master_seed=seed, channel=rng.CHANNELS["ho"])
    q_cfg = SimConfig(model, "dunkl", start=start, dt=dt, horizon=t, path_count=path_count,
                      master_seed=seed, channel=rng.CHANNELS["dunkl"], record_noise=True)
    xp = simulate_radial(p_cfg).terminal
    qpaths = simulate_radial(q_cfg)
    gi = path_integral(qpaths, "girsanov", model=model)
    weight = np.exp(gi.log_weight[:, -1])
    zq = qpaths.terminal
    rows = []
    for name, f in functionals.items():
        d_mean, d_se = stats.mean_with_se(f(xp))
        r_mean, r_se = stats.mean_with_se(weight * f(zq))
        rows.append(GirsanovRow(name, d_mean, d_se, r_mean, r_se))
    w_mean, w_se = stats.mean_with_se(weight)
    return GirsanovReport(rows, w_mean, w_se, float(weight.min()), t)


# I* and the complex-case F0 limit --------------------------------------------------

def istar_sample(model: RootSystem, t: float, path_count: int, seed: int, dt: float = 1e-3,
                 channel: int = rng.CHANNELS["istar"]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Samples of ``I*_t = w·I_t``: intrinsic radial part, independent uniform ``w``.

    Returns ``(values, radial, chamber_indices)``.
    """
    if not model.is_reduced:
        raise ValueError("I* is defined for reduced root systems")
    cfg = SimConfig(model, "intrinsic", dt=dt, horizon=t, path_count=path_count, master_seed=seed,
                    stride=int(round(t / dt)), channel=channel)
    radial = simulate_radial(cfg).terminal
    order = len(model.weyl_group)
    w = np.array([int(rng.stream(seed, i, rng.CHAMBER, channel).integers(order)) for i in range(path_count)])
    mats = model.weyl_matrices[w]
    values = np.einsum("pij,pj->pi", mats, radial)
    return values, radial, w


def istar1_log_density(model: RootSystem, y) -> np.ndarray:
    """Unnormalized ``log`` density of ``I*_1``: ``-|y|²/2 + Σ_{α>0} 2 log|(α, y)|``.

    Uses the rescaled system's roots; returns ``-inf`` on walls.
    """
    dunkl = rescale_to_dunkl(model)
    y = np.asarray(y, dtype=float)
    p = np.abs(pairings(y, dunkl.positive_roots))
    with np.errstate(divide="ignore"):
        logs = np.log(p)
    return -0.5 * np.sum(y * y, axis=-1) + 2.0 * np.sum(logs, axis=-1)


def istar1_log_density_grad(model: RootSystem, y) -> np.ndarray:
    dunkl = rescale_to_dunkl(model)
    y = np.asarray(y, dtype=float)
    p = pairings(y, dunkl.positive_roots)
    return -y + combine(2.0 / p, dunkl.positive_roots)


@dataclass(frozen=True)
class NormalizingConstant:
    value: float
    se: float
    samples: int
    estimated: bool = True


def istar1_normalizer(model: RootSystem, samples: int = 200_000, seed: int = 0) -> NormalizingConstant:
    """Monte Carlo estimate of ``∫ exp(log density)``, i.e. ``(2π)^{n/2} E Π(α, G)²``."""
    dunkl = rescale_to_dunkl(model)
    n = model.rank
    g = rng.generator(seed, rng.CHANNELS["stats"], 1).standard_normal((samples, n))
    vals = np.prod(pairings(g, dunkl.positive_roots) ** 2, axis=-1)
    c = (2 * math.pi) ** (n / 2)
    return NormalizingConstant(c * float(vals.mean()), c * float(vals.std(ddof=1) / math.sqrt(samples)), samples)


@dataclass
class F0LimitReport:
    T: float
    energy: stats.TestResult
    chamber: stats.TestResult
    chamber_counts: np.ndarray
    trend_T: tuple
    trend_values: list
    trend_se: list
    late_jump_fraction: float


def f0_limit_check(model: RootSystem, T: float = 100.0, dt: float = 1e-2, path_count: int = 500,
                   seed: int = 42, trend_T=(25.0, 100.0, 400.0), trend_dt: float = 1e-2,
                   reference_dt: float = 1e-3, permutations: int = 500) -> F0LimitReport:
    """Complex-case check of ``Y^T_1 = Y_T/√T → I*_1`` plus the decay of ``|Y_t|/t``.

    ``dt`` is the step in the unscaled clock; the reference ``I*_1`` sample
    uses ``reference_dt`` in the scaled clock.
    """
    require_complex_case(model)
    cfg = SimConfig(model, "f0_complex", dt=dt, horizon=T, path_count=path_count, master_seed=seed,
                    stride=int(round(T / dt)), channel=rng.CHANNELS["ho"])
    paths = simulate_skew_product(cfg)
    y = paths.terminal / math.sqrt(T)
    ref, _, _ = istar_sample(model, 1.0, path_count, seed, dt=reference_dt)
    energy = stats.energy_distance_perm(y, ref, permutations=permutations, seed=seed)
    order = len(model.weyl_group)
    counts = np.bincount(paths.terminal_chamber, minlength=order)
    chamber = stats.chi_square_uniform(counts)
    ev = paths.events
    late = float(np.isin(paths.path_ids, ev.path_id[ev.t > 0.9 * T]).mean())
    # |Y_t| = |Y^W_t| and the radial F0-process is the intrinsic Brownian motion.
    tcfg = SimConfig(model, "f0_complex", dt=trend_dt, horizon=max(trend_T), path_count=path_count,
                     master_seed=seed, stride=int(round(min(trend_T) / trend_dt)),
                     channel=rng.CHANNELS["reference"])
    radial = simulate_radial(tcfg)
    vals, ses = [], []
    for Tt in trend_T:
        _, g = _terminal_time(radial, Tt)
        m, s = stats.mean_with_se(np.linalg.norm(radial.states[:, g], axis=-1) / Tt)
        vals.append(m)
        ses.append(s)
    return F0LimitReport(T, energy, chamber, counts, tuple(trend_T), vals, ses, late)


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    slope_se: float
    expected: float
    times: np.ndarray
    means: np.ndarray

    @property
    def relative_error(self) -> float:
        return abs(self.slope - self.expected) / self.expected


def besq_slope(model: RootSystem, horizon: float = 10.0, dt: float = 5e-3, path_count: int = 4000,
               seed: int = 42, t_min: float = 1.0, grid_points: int = 10) -> SlopeFit:
    """Least-squares slope of ``E|Y^W_t|²`` against ``t`` for the complex-case radial process.

    The expected slope ``n + 2|R⁺|`` is that of a squared Bessel process of
    that dimension (``n`` the ambient dimension).  Each path gets its own
    least-squares slope; their mean is the fitted slope and their spread gives the SE.
    """
    require_complex_case(model)
    stride = int(round(horizon / grid_points / dt))
    cfg = SimConfig(model, "f0_complex", dt=dt, horizon=horizon, path_count=path_count, master_seed=seed,
                    stride=stride, channel=rng.CHANNELS["reference"])
    paths = simulate_radial(cfg)
    sel = paths.times >= t_min - 1e-12
    t = paths.times[sel]
    sq = np.sum(paths.states[:, sel] ** 2, axis=-1)
    tc = t - t.mean()
    per_path = sq @ tc / float(tc @ tc)
    slope, se = stats.mean_with_se(per_path)
    means = sq.mean(axis=0)
    intercept = float(means.mean() - slope * t.mean())
    expected = model.rank + 2 * len(model.positive_roots)
    return SlopeFit(slope, intercept, se, float(expected), t, means)


# coupling and jump statistics ----------------------------------------------------------

@dataclass
class CouplingReport:
    nonincreasing_fraction: np.ndarray
    initial: np.ndarray
    terminal: np.ndarray

    @property
    def contracted(self) -> np.ndarray:
        return self.terminal < self.initial


def coupling_check(model: RootSystem, start_a, start_b, dt: float = 1e-4, horizon: float = 1.0,
                   path_count: int = 100, seed: int = 42, process: str = "ho") -> CouplingReport:
    """Two radial paths per seed driven by one Brownian path; per-seed distance monotonicity."""
    cfg = SimConfig(model, process, dt=dt, horizon=horizon, path_count=path_count, master_seed=seed)
    a = simulate_radial(replace(cfg, start=np.asarray(start_a, dtype=float)))
    b = simulate_radial(replace(cfg, start=np.asarray(start_b, dtype=float)))
    d = np.linalg.norm(a.states - b.states, axis=-1)
    frac = np.mean(np.diff(d, axis=1) <= 0, axis=1)
    return CouplingReport(frac, d[:, 0], d[:, -1])


def amplitude_ratio(model: RootSystem, t: float = 1.0, dt: float = 1e-3, path_count: int = 1000,
                    seed: int = 42, start=None) -> dict:
    """Mean total jump amplitude ``Σ|ΔX|`` at ``dt`` and ``dt/2``."""
    out = {}
    for label, h in (("dt", dt), ("dt/2", dt / 2)):
        cfg = SimConfig(model, "ho", start=start, dt=h, horizon=t, path_count=path_count,
                        master_seed=seed, stride=int(round(t / h)))
        amp = simulate_skew_product(cfg).amplitude
        out[label] = stats.mean_with_se(amp)
    out["ratio"] = out["dt"][0] / out["dt/2"][0]
    return out
