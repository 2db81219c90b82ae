import io
import math

import numpy as np
import pytest
from scipy import stats as sps

from hoproc import fields
from hoproc.roots import build_standard, pairings
from hoproc.sde import (BesselRef, SimConfig, SimulationError, default_wall_floor, path_integral, simulate_bessel_sq,
                        simulate_coupled_pair, simulate_radial, step, write_paths_csv)


@pytest.fixture(scope="module")
def a1():
    return build_standard("A", 1)


@pytest.fixture(scope="module")
def a2():
    return build_standard("A", 2)


def test_config_validation(a2):
    with pytest.raises(ValueError):
        SimConfig(a2, "nonsense")
    with pytest.raises(ValueError):
        SimConfig(a2, dt=2.0, horizon=1.0)
    with pytest.raises(ValueError):
        SimConfig(a2, start=-a2.rho)
    with pytest.raises(ValueError):
        SimConfig(a2, start=[1.0])
    with pytest.raises(ValueError):
        SimConfig(a2, process="f0_complex", wall_floor=0.0)
    cfg = SimConfig(a2, dt=1e-3, horizon=0.5, stride=7)
    g = cfg.grid_indices()
    assert g[0] == 0 and g[-1] == 500 and np.all(np.diff(g) > 0)
    assert cfg.floor == default_wall_floor(1e-3)


def test_f0_requires_complex_case():
    b2 = build_standard("B", 2, {"short": 0.5, "long": 1.0})
    with pytest.raises(ValueError, match="complex case"):
        simulate_radial(SimConfig(b2, "f0_complex", horizon=0.01, path_count=2))


def test_paths_stay_in_closed_chamber_and_are_finite(a2):
    cfg = SimConfig(a2, "ho", dt=1e-3, horizon=0.5, path_count=20, master_seed=3)
    r = simulate_radial(cfg)
    assert r.states.shape == (20, 501, 2)
    assert np.all(np.isfinite(r.states))
    assert np.all(pairings(r.states, a2.positive_roots) >= -1e-12)


def test_batching_and_workers_do_not_change_paths(a2):
    cfg = SimConfig(a2, "ho", dt=1e-2, horizon=0.6, path_count=9, master_seed=11)
    full = simulate_radial(cfg)
    sub = simulate_radial(cfg, path_ids=[4, 7])
    assert np.array_equal(sub.states, full.states[[4, 7]])
    par = simulate_radial(SimConfig(a2, "ho", dt=1e-2, horizon=0.6, path_count=9, master_seed=11, workers=2))
    assert np.array_equal(par.states, full.states)
    other = simulate_radial(SimConfig(a2, "ho", dt=1e-2, horizon=0.6, path_count=9, master_seed=12))
    assert not np.array_equal(other.states, full.states)


def test_brownian_kind_is_reflected_walk(a1):
    cfg = SimConfig(a1, "brownian", dt=1e-2, horizon=1.0, path_count=4, master_seed=0, record_noise=True)
    r = simulate_radial(cfg)
    # the scheme is the reflected walk x_{k+1} = |x_k + dW_k|
    assert np.allclose(r.states[:, 1:], np.abs(r.states[:, :-1] + r.noise), atol=1e-15)


def test_intrinsic_rank_one_is_bessel3(a1):
    # |α|² = 2, so x = |α|/√2 · r with r a Bessel(3) process; at t = 1 that is χ with 3 degrees of freedom
    cfg = SimConfig(a1, "intrinsic", dt=1e-3, horizon=1.0, path_count=1000, master_seed=42, stride=1000)
    r = simulate_radial(cfg).terminal[:, 0]
    res = sps.kstest(r, sps.chi(3).cdf)
    assert res.pvalue > 0.01
    assert abs(r.mean() - sps.chi(3).mean()) < 3 * r.std() / math.sqrt(len(r))


def test_ho_rank_one_moves_faster_than_dunkl(a1):
    ho = simulate_radial(SimConfig(a1, "ho", dt=1e-3, horizon=2.0, path_count=300, master_seed=1, stride=2000))
    du = simulate_radial(SimConfig(a1, "dunkl", dt=1e-3, horizon=2.0, path_count=300, master_seed=1, stride=2000))
    # same noise and a larger drift everywhere: (α/2) coth((α, x)/2) > α/(α, x) on the chamber
    assert np.all(ho.terminal >= du.terminal - 1e-12)


def test_step_matches_manual_euler(a2):
    x = np.array([[0.9, 0.2]])
    dW = np.array([[0.01, -0.03]])
    floor = 1e-3
    nxt = step(a2, x, lambda y, f: fields.ho_drift_floored(a2, y, f), dW, 1e-3, floor)
    manual = x + fields.ho_radial_drift(a2, x[0]) * 1e-3 + dW
    assert np.allclose(nxt, manual, atol=1e-15)


def test_step_rejects_nonfinite(a2):
    with pytest.raises(SimulationError):
        step(a2, np.array([[0.5, 0.1]]), lambda y, f: np.full_like(y, np.nan), np.zeros((1, 2)), 1e-3, 1e-3)


def test_drift_cap_bounds_increment(a2):
    cfg = SimConfig(a2, "ho", dt=1e-2, horizon=0.02, path_count=5, master_seed=0, drift_cap=1.0, record_noise=True)
    r = simulate_radial(cfg)
    # first step from the origin: |x_1 - dW| ≤ cap·dt up to the fold, which preserves norms
    drift_part = np.linalg.norm(r.states[:, 1], axis=-1) - np.linalg.norm(r.noise[:, 0], axis=-1)
    assert np.all(drift_part <= 1.0 * 1e-2 + 1e-12)


def test_coupled_pair_shares_noise(a1):
    cfg = SimConfig(a1, "ho", dt=1e-3, horizon=0.3, path_count=3, master_seed=9)
    a, b = simulate_coupled_pair(cfg, [0.5], [0.5])
    assert np.array_equal(a.states, b.states)
    a, b = simulate_coupled_pair(cfg, [0.2], [1.5])
    d = np.abs(a.states - b.states)[..., 0]
    assert np.all(np.diff(d, axis=1) <= 1e-15)


def test_online_integrals_match_path_integral(a2):
    cfg = SimConfig(a2, "ho", start=a2.rho, dt=1e-3, horizon=0.2, path_count=4, master_seed=2)
    r = simulate_radial(cfg)
    coth = path_integral(r, "coth_alpha")
    rate = path_integral(r, "jump_rate_alpha")
    assert np.allclose(coth[:, -1], r.coth_integral, rtol=1e-10)
    assert np.allclose(rate[:, -1], r.rate_integral, rtol=1e-10)


def test_path_integral_needs_noise_and_full_grid(a1):
    r = simulate_radial(SimConfig(a1, "dunkl", start=[1.0], dt=1e-2, horizon=0.1, path_count=2))
    with pytest.raises(ValueError, match="noise"):
        path_integral(r, "girsanov")
    strided = simulate_radial(SimConfig(a1, "dunkl", start=[1.0], dt=1e-2, horizon=0.1, path_count=2, stride=2))
    with pytest.raises(ValueError, match="stride"):
        path_integral(strided, "coth_alpha")


def test_constant_integrand_is_brownian_projection(a1):
    r = simulate_radial(SimConfig(a1, "dunkl", start=[1.0], dt=1e-2, horizon=0.5, path_count=3, record_noise=True))
    gi = path_integral(r, "constant", integrand=[2.0])
    assert np.allclose(gi.L[:, -1], 2.0 * r.noise[..., 0].sum(axis=1))
    assert np.allclose(gi.qv[:, -1], 4.0 * 0.5)


def test_girsanov_weight_positive(a1):
    r = simulate_radial(SimConfig(a1, "dunkl", start=[0.7], dt=1e-3, horizon=1.0, path_count=50, record_noise=True))
    gi = path_integral(r, "girsanov")
    assert np.all(gi.weight > 0) and np.all(np.isfinite(gi.log_weight))


def test_bessel_reference_mean_and_validation():
    z = simulate_bessel_sq(BesselRef(8.0), 1e-3, 2.0, seed=4, path_count=2000)
    t = np.array([0.5, 1.0, 2.0])
    means = z[:, (t / 1e-3).astype(int)].mean(axis=0)
    assert np.allclose(means, 8.0 * t, rtol=0.05)
    assert np.all(z >= 0)
    with pytest.raises(ValueError):
        BesselRef(0.0)
    with pytest.raises(ValueError):
        BesselRef(2.0, -1.0)


def test_flags_for_small_multiplicity_on_wall():
    m = build_standard("A", 1, 0.3)
    with pytest.warns(UserWarning):
        r = simulate_radial(SimConfig(m, "ho", dt=1e-2, horizon=0.05, path_count=2))
    assert r.flags


def test_csv_schema(a1):
    r = simulate_radial(SimConfig(a1, "ho", dt=1e-2, horizon=0.1, path_count=2, stride=5))
    buf = io.StringIO()
    write_paths_csv(r, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "path_id,t,x_1"
    assert len(lines) == 1 + 2 * len(r.times)
    assert lines[1].startswith("0,0.0,")
