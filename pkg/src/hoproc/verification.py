"""Registry of verification entries and the runner that turns them into a report.

Each entry maps a system, a seed and a budget (numeric parameters) to a
dictionary of statistics, the tolerance that was applied and a pass flag.
Entries that cannot run on the requested system are reported as skipped.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import limits, stats
from .jumps import compute_malpha, jump_statistics, simulate_skew_product
from .roots import (RootSystem, build_standard, fold, generate_weyl_group, radial_decompose, reflect,
                    rescale_to_dunkl, validate_axioms)
from .sde import SimConfig, simulate_radial


class Infeasible(Exception):
    """The entry cannot run on the requested system; carries the reason."""


@dataclass(frozen=True)
class Entry:
    id: str
    anchor: str
    description: str
    budget: dict
    runner: Callable


@dataclass
class Context:
    """Shared state for one verification run (lets entries reuse a simulation)."""

    model: RootSystem
    seed: int
    workers: int = 1
    cache: dict = field(default_factory=dict)

    def radial(self, process: str, dt: float, horizon: float, paths: int, start=None, stride: int = 1):
        key = (process, dt, horizon, stride, None if start is None else tuple(np.asarray(start).tolist()))
        hit = self.cache.get(key)
        if hit is None or len(hit) < paths:
            cfg = SimConfig(self.model, process, start=start, dt=dt, horizon=horizon, path_count=paths,
                            master_seed=self.seed, stride=stride, workers=self.workers)
            hit = simulate_radial(cfg)
            self.cache[key] = hit
        return hit if len(hit) == paths else _head(hit, paths)


def _head(paths, n):
    from .sde import RadialPaths

    return RadialPaths(paths.config, paths.path_ids[:n], paths.times, paths.states[:n],
                       None if paths.noise is None else paths.noise[:n], paths.coth_integral[:n],
                       paths.rate_integral[:n], paths.near_wall_steps[:n], list(paths.flags))


def _unit_rho(model: RootSystem) -> np.ndarray:
    """``ρ`` scaled so that its smallest positive-root pairing equals 1."""
    p = model.positive_roots @ model.rho
    return model.rho / float(np.min(p))


def _rank_one(ctx: Context) -> None:
    if ctx.model.rank != 1:
        raise Infeasible("entry is calibrated for rank-1 systems")


def _complex(ctx: Context) -> None:
    if not ctx.model.is_reduced or not np.allclose(ctx.model.multiplicities, 1.0):
        raise Infeasible("needs the complex case: reduced root system with k = 1")


# runners ---------------------------------------------------------------------------

def run_lln(ctx: Context, b: dict) -> dict:
    paths = ctx.radial("ho", b["dt"], b["T"], b["paths"], stride=int(round(b["T"] / b["dt"])))
    est = limits.lln_estimate(paths)
    return {"statistics": {"estimate": est.estimate.tolist(), "se": est.se.tolist(), "rho": est.rho.tolist(),
                           "relative_error": est.relative_error},
            "tolerance": {"relative_error_max": b["tol"]},
            "pass": est.relative_error <= b["tol"]}


def run_clt(ctx: Context, b: dict) -> dict:
    paths = ctx.radial("ho", b["dt"], b["T"], b["paths"], stride=int(round(b["T"] / b["dt"])))
    g = limits.gaussianity(limits.clt_sample(paths))
    ok = g["cov_opnorm_dev"] <= b["cov_tol"] and min(g["ks_p"]) > b["ks_p_min"]
    return {"statistics": g, "tolerance": {"cov_opnorm_dev_max": b["cov_tol"], "ks_p_min": b["ks_p_min"]},
            "pass": ok}


def run_w_uniform(ctx: Context, b: dict) -> dict:
    cfg = SimConfig(ctx.model, "ho", dt=b["dt"], horizon=b["T"], path_count=b["paths"], master_seed=ctx.seed,
                    stride=int(round(b["T"] / b["dt"])), workers=ctx.workers)
    js = jump_statistics(simulate_skew_product(cfg))
    if js.w_infinity is None:
        raise Infeasible(js.suppressed_reason)
    counts = np.bincount(js.w_infinity, minlength=len(ctx.model.weyl_group))
    chi = stats.chi_square_uniform(counts)
    ok = chi.p_value > b["p_min"] and js.late_jump_fraction < b["late_max"]
    return {"statistics": {"counts": counts.tolist(), "chi2": chi.statistic, "p_value": chi.p_value,
                           "late_jump_fraction": js.late_jump_fraction,
                           "mean_jumps": float(js.mean_counts[-1])},
            "tolerance": {"p_min": b["p_min"], "late_fraction_max": b["late_max"]}, "pass": ok}


def run_dunkl_limit(ctx: Context, b: dict) -> dict:
    _rank_one(ctx)
    rows = limits.dunkl_convergence_test(ctx.model, tuple(b["T_grid"]), b["dt"], b["paths"], ctx.seed,
                                         b["permutations"])
    coupled = [r.coupled_energy for r in rows]
    decreasing = all(a > c for a, c in zip(coupled, coupled[1:]))
    ok = rows[-1].p_value > b["p_min"] and decreasing
    return {"statistics": {"T": [r.T for r in rows], "energy": [r.energy for r in rows],
                           "p_value": [r.p_value for r in rows], "coupled_energy": coupled,
                           "coupled_strictly_decreasing": decreasing},
            "tolerance": {"p_min_at_largest_T": b["p_min"], "trend": "strictly decreasing"}, "pass": ok}


def run_girsanov(ctx: Context, b: dict) -> dict:
    _rank_one(ctx)
    rep = limits.girsanov_check(ctx.model, b["t"], b["dt"], b["paths"], ctx.seed)
    rows = {r.name: r for r in rep.rows}
    main = rows["norm2"]
    w_ok = abs(rep.mean_weight - 1.0) <= b["z_max"] * rep.weight_se
    ok = abs(main.z) <= b["z_max"] and w_ok and rep.min_weight > 0
    return {"statistics": {
                "direct": {k: r.direct for k, r in rows.items()},
                "reweighted": {k: r.reweighted for k, r in rows.items()},
                "pooled_se": {k: r.pooled_se for k, r in rows.items()},
                "z": {k: r.z for k, r in rows.items()},
                "mean_weight": rep.mean_weight, "weight_se": rep.weight_se, "min_weight": rep.min_weight},
            "tolerance": {"z_max": b["z_max"], "functional": "norm2"}, "pass": ok}


def run_jump_ampl(ctx: Context, b: dict) -> dict:
    _rank_one(ctx)
    r = limits.amplitude_ratio(ctx.model, b["t"], b["dt"], b["paths"], ctx.seed)
    lo, hi = b["ratio_range"]
    return {"statistics": {"mean_dt": r["dt"][0], "se_dt": r["dt"][1], "mean_half_dt": r["dt/2"][0],
                           "se_half_dt": r["dt/2"][1], "ratio": r["ratio"]},
            "tolerance": {"ratio_range": [lo, hi]}, "pass": lo <= r["ratio"] <= hi}


def run_martingale(ctx: Context, b: dict) -> dict:
    _rank_one(ctx)
    start = b["start_pairing"] * _unit_rho(ctx.model)
    cfg = SimConfig(ctx.model, "ho", start=start, dt=b["dt"], horizon=b["t"], path_count=b["paths"],
                    master_seed=ctx.seed, stride=int(round(b["t"] / b["dt"])), workers=ctx.workers)
    dec = compute_malpha(simulate_skew_product(cfg))
    M = dec.M[:, -1]
    mean = M.mean(axis=0)
    se = M.std(axis=0, ddof=1) / math.sqrt(len(M))
    sq = dec.realized_sq[:, -1].mean(axis=0)
    brk = dec.bracket[:, -1].mean(axis=0)
    rel = np.abs(sq - brk) / brk
    ok = bool(np.all(np.abs(mean) <= b["z_max"] * se) and np.all(rel <= b["bracket_tol"])
              and dec.simultaneous_jumps == 0)
    return {"statistics": {"mean_M": mean.tolist(), "se_M": se.tolist(), "realized_sq": sq.tolist(),
                           "bracket": brk.tolist(), "relative_gap": rel.tolist(),
                           "simultaneous_jumps": dec.simultaneous_jumps,
                           "max_abs_residual": float(np.max(np.abs(dec.residual)))},
            "tolerance": {"z_max": b["z_max"], "bracket_rel_max": b["bracket_tol"], "simultaneous": 0},
            "pass": ok}


def run_uniqueness(ctx: Context, b: dict) -> dict:
    u = _unit_rho(ctx.model)
    rep = limits.coupling_check(ctx.model, b["start_a"] * u, b["start_b"] * u, b["dt"], b["t"], b["paths"], ctx.seed)
    ok = bool(np.all(rep.nonincreasing_fraction >= b["monotone_min"]) and np.all(rep.contracted))
    return {"statistics": {"min_nonincreasing_fraction": float(rep.nonincreasing_fraction.min()),
                           "contracted_runs": int(rep.contracted.sum()), "runs": len(rep.initial),
                           "mean_terminal_distance": float(rep.terminal.mean())},
            "tolerance": {"nonincreasing_fraction_min": b["monotone_min"], "contracted": "all"}, "pass": ok}


def run_f0_limit(ctx: Context, b: dict) -> dict:
    _complex(ctx)
    r = limits.f0_limit_check(ctx.model, b["T"], b["dt"], b["paths"], ctx.seed, tuple(b["trend_T"]),
                              b["trend_dt"], b["reference_dt"], b["permutations"])
    decreasing = all(a > c for a, c in zip(r.trend_values, r.trend_values[1:]))
    ok = r.energy.p_value > b["energy_p_min"] and r.chamber.p_value > b["chamber_p_min"] and decreasing
    return {"statistics": {"energy": r.energy.statistic, "energy_p": r.energy.p_value,
                           "chamber_counts": r.chamber_counts.tolist(), "chamber_p": r.chamber.p_value,
                           "trend_T": list(r.trend_T), "mean_norm_over_T": r.trend_values,
                           "trend_se": r.trend_se, "late_jump_fraction": r.late_jump_fraction},
            "tolerance": {"energy_p_min": b["energy_p_min"], "chamber_p_min": b["chamber_p_min"],
                          "trend": "strictly decreasing"}, "pass": ok}


def run_besq_slope(ctx: Context, b: dict) -> dict:
    _complex(ctx)
    f = limits.besq_slope(ctx.model, b["T"], b["dt"], b["paths"], ctx.seed)
    return {"statistics": {"slope": f.slope, "slope_se": f.slope_se, "expected": f.expected,
                           "relative_error": f.relative_error, "intercept": f.intercept},
            "tolerance": {"relative_error_max": b["tol"]}, "pass": f.relative_error <= b["tol"]}


REGISTRY: dict[str, Entry] = {e.id: e for e in [
    Entry("LLN", "radial law of large numbers: X^W_t / t converges to rho",
          "mean of X^W_T/T within a relative tolerance of rho",
          {"dt": 1e-3, "T": 200.0, "paths": 200, "tol": 0.05}, run_lln),
    Entry("CLT", "radial central limit: (X^W_tT - rho tT)/sqrt(T) converges to Brownian motion",
          "covariance of the normalized terminal value near identity, KS per coordinate",
          {"dt": 1e-3, "T": 200.0, "paths": 500, "cov_tol": 0.10, "ks_p_min": 0.01}, run_clt),
    Entry("W-UNIFORM", "terminal chamber w_infinity is uniform on W",
          "chi-square over |W| chambers and late-jump fraction, start at 0",
          {"dt": 1e-3, "T": 40.0, "paths": 1200, "p_min": 0.01, "late_max": 0.05}, run_w_uniform),
    Entry("DUNKL-LIMIT", "sqrt(T) X_{t/T} converges in law to the Dunkl process",
          "energy permutation test at the largest T and trend of the coupled energy distance",
          {"dt": 1e-3, "T_grid": [1.0, 1e2, 1e4], "paths": 500, "permutations": 500, "p_min": 0.05},
          run_dunkl_limit),
    Entry("GIRSANOV", "HO radial law equals the Girsanov-reweighted Dunkl radial law",
          "E|X_t|^2 directly vs reweighted, mean weight near 1",
          {"dt": 1e-3, "t": 1.0, "paths": 4000, "z_max": 3.0}, run_girsanov),
    Entry("JUMP-AMPL", "the total amplitude of the jumps is finite",
          "mean sum |dX| stable under halving dt",
          {"dt": 1e-3, "t": 1.0, "paths": 1000, "ratio_range": [0.8, 1.25]}, run_jump_ampl),
    Entry("MARTINGALE", "M^alpha are martingales with the stated compensator and bracket; no simultaneous jumps",
          "mean M^alpha_t near 0, realized squared jumps vs predictable bracket",
          {"dt": 1e-3, "t": 1.0, "paths": 2000, "start_pairing": 0.5, "z_max": 3.0, "bracket_tol": 0.10},
          run_martingale),
    Entry("UNIQUENESS", "solutions driven by one Brownian motion are pathwise unique and contract",
          "two radial paths sharing noise: distance non-increasing",
          {"dt": 1e-4, "t": 1.0, "paths": 100, "start_a": 0.2, "start_b": 2.0, "monotone_min": 0.99},
          run_uniqueness),
    Entry("F0-LIMIT", "complex case: Y_{tT}/sqrt(T) converges to I*, and |Y_t|/t tends to 0",
          "energy permutation test vs I*_1, chamber chi-square, decay of |Y_T|/T",
          {"dt": 1e-3, "T": 100.0, "paths": 500, "trend_T": [25.0, 100.0, 400.0], "trend_dt": 1e-2,
           "reference_dt": 1e-3, "permutations": 500, "energy_p_min": 0.05, "chamber_p_min": 0.01},
          run_f0_limit),
    Entry("BESQ-SLOPE", "complex case: |Y^W_t|^2 is a squared Bessel process of dimension n + 2|R+|",
          "regression slope of E|Y^W_t|^2 on t",
          {"dt": 5e-3, "T": 10.0, "paths": 4000, "tol": 0.05}, run_besq_slope),
]}


def registry_listing() -> list[dict]:
    return [{"id": e.id, "anchor": e.anchor, "description": e.description, "budget": e.budget}
            for e in REGISTRY.values()]


def audit_anchors(entries: list[dict]) -> None:
    """Check every report entry carries its registry anchor verbatim."""
    for e in entries:
        if e["id"] in REGISTRY and e["anchor"] != REGISTRY[e["id"]].anchor:
            raise RuntimeError(f"anchor mismatch for {e['id']}")


def run_entry(entry_id: str, model: RootSystem, seed: int, budget: dict | None = None,
              workers: int = 1, ctx: Context | None = None) -> dict:
    if entry_id not in REGISTRY:
        raise KeyError(f"unknown verification id {entry_id!r}; known: {sorted(REGISTRY)}")
    entry = REGISTRY[entry_id]
    b = dict(entry.budget)
    unknown = set(budget or {}) - set(b)
    if unknown:
        raise ValueError(f"unknown budget keys for {entry_id}: {sorted(unknown)}")
    b.update(budget or {})
    ctx = ctx or Context(model, seed, workers)
    t0 = time.perf_counter()
    out = {"id": entry_id, "anchor": entry.anchor, "budget": b, "seeds": {"master_seed": seed,
           "streams": "SeedSequence(master_seed, spawn_key=(channel, path_index, purpose))"}}
    try:
        res = entry.runner(ctx, b)
        out.update(status="pass" if res["pass"] else "fail", **res)
        out["pass"] = bool(res["pass"])
    except Infeasible as exc:
        out.update(status="skipped", reason=str(exc), statistics={}, tolerance={}, **{"pass": None})
    out["runtime"] = time.perf_counter() - t0
    return _jsonable(out)


def run_verification(model: RootSystem, ids, seed: int, budgets: dict | None = None, workers: int = 1) -> list[dict]:
    ctx = Context(model, seed, workers)
    ids = list(ids)
    # CLT uses the most paths of the shared radial run, so running it first lets LLN slice the cache
    order = sorted(range(len(ids)), key=lambda i: ids[i] != "CLT")
    done = {i: run_entry(ids[i], model, seed, (budgets or {}).get(ids[i]), workers, ctx) for i in order}
    entries = [done[i] for i in range(len(ids))]
    audit_anchors(entries)
    return entries


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


# algebraic suite ----------------------------------------------------------------------

def algebraic_suite() -> list[tuple[str, bool, str]]:
    """Deterministic checks of the root-system layer; each item is ``(name, ok, detail)``."""
    out = []
    systems = {name: build_standard(f, r) for name, (f, r) in
               {"A1": ("A", 1), "A2": ("A", 2), "B2": ("B", 2), "C2": ("C", 2), "BC1": ("BC", 1),
                "BC2": ("BC", 2), "D3": ("D", 3)}.items()}
    for name, m in systems.items():
        rep = validate_axioms(m.roots, m.multiplicities)
        out.append((f"axioms {name}", bool(rep), rep.message))
    for name, order in (("A2", 6), ("B2", 8)):
        got = len(generate_weyl_group(systems[name]))
        out.append((f"Weyl order {name}", got == order, f"{got} (expected {order})"))
    x = np.array([0.3, -1.7, 2.2])
    err = max(float(np.max(np.abs(reflect(a, reflect(a, x)) - x))) for a in systems["D3"].roots)
    out.append(("reflection involution", err <= 1e-12, f"max error {err:.2e}"))
    gen = np.random.default_rng(0)
    worst = 0.0
    for m in systems.values():
        for _ in range(20):
            y = gen.standard_normal(m.rank) * 3
            d = radial_decompose(m, y)
            worst = max(worst, float(np.max(np.abs(d.w.matrix @ d.x_plus - y))))
            worst = max(worst, float(np.max(np.abs(d.x_plus - fold(m, y)))))
    out.append(("radial decomposition exact", worst <= 1e-12, f"max error {worst:.2e}"))
    ok = all(bool(np.all(m.positive_roots @ m.rho > 0)) for m in systems.values())
    out.append(("rho interior", ok, "all positive pairings of rho are > 0"))
    bc1 = build_standard("BC", 1, {"short": 0.7, "double": 0.4})
    d = rescale_to_dunkl(bc1)
    beta = d.positive_roots[0]
    ok = (len(d.positive_roots) == 1 and abs(float(beta @ beta) - 2.0) <= 1e-12
          and abs(float(d.positive_k[0]) - 1.1) <= 1e-12)
    out.append(("rescale BC1", ok, f"beta={beta.tolist()}, k'={d.positive_k.tolist()}"))
    return out
