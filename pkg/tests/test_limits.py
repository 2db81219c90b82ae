import math

import numpy as np
import pytest
from scipy import integrate
from scipy import stats as sps

from hoproc import limits
from hoproc.jumps import simulate_skew_product
from hoproc.roots import build_standard
from hoproc.sde import SimConfig, simulate_radial


@pytest.fixture(scope="module")
def a1():
    return build_standard("A", 1)


@pytest.fixture(scope="module")
def a2():
    return build_standard("A", 2)


@pytest.mark.parametrize("family,rank", [("A", 2), ("B", 2), ("BC", 2)])
def test_w_rho_table_is_weyl_action_on_rho(family, rank):
    m = build_standard(family, rank)
    table = limits.w_rho_table(m)
    for w in m.weyl_group:
        assert np.allclose(table[w.index], w.matrix @ m.rho, atol=1e-12)
    assert np.allclose(table[0], m.rho)


def test_config_hash_tracks_parameters(a2):
    c1 = SimConfig(a2, "ho", dt=1e-3, horizon=1.0, path_count=5, master_seed=1)
    c2 = SimConfig(a2, "ho", dt=1e-3, horizon=1.0, path_count=5, master_seed=2)
    assert limits.config_hash(c1) == limits.config_hash(c1)
    assert limits.config_hash(c1) != limits.config_hash(c2)
    assert limits.config_hash(c1) != limits.config_hash(c1, {"kind": "clt"})


def test_lln_and_clt_normalizations(a2):
    paths = simulate_radial(SimConfig(a2, "ho", dt=1e-2, horizon=20.0, path_count=60, master_seed=3, stride=100))
    est = limits.lln_estimate(paths)
    T = paths.times[-1]
    assert np.allclose(est.estimate, paths.terminal.mean(axis=0) / T)
    assert est.relative_error < 0.25
    s = limits.clt_sample(paths)
    assert np.allclose(s.values, (paths.terminal - a2.rho * T) / math.sqrt(T))
    s10 = limits.clt_sample(paths, T=10.0)
    assert s10.T == 10.0
    with pytest.raises(ValueError, match="grid"):
        limits.clt_sample(paths, T=10.5)
    with pytest.raises(ValueError):
        limits.lln_estimate(simulate_radial(SimConfig(a2, "ho", dt=1e-2, horizon=0.1, path_count=3)))


def test_gaussianity_on_exact_gaussian():
    vals = np.random.default_rng(0).standard_normal((2000, 2))
    g = limits.gaussianity(limits.NormalizedSample(1.0, vals, "test"))
    assert g["cov_opnorm_dev"] < 0.1 and min(g["ks_p"]) > 0.001
    with pytest.raises(ValueError):
        limits.NormalizedSample(1.0, np.array([[np.nan, 0.0]]), "test")


def test_nonradial_clt_identity_chamber_reduces_to_radial(a1):
    p = simulate_skew_product(SimConfig(a1, "ho", dt=1e-2, horizon=4.0, path_count=40, master_seed=6, stride=100))
    s = limits.nonradial_clt_sample(p)
    stay = p.chamber[:, -1] == 0
    radial = (p.radial[:, -1] - a1.rho * 4.0) / 2.0
    assert np.allclose(s.values[stay], radial[stay])
    # the reflected chamber is centered at -ρT, and |X| equals |X^W|
    assert np.allclose(s.values[~stay], -radial[~stay])
    assert 0.0 <= s.extra["late_jump_fraction"] <= 1.0


def test_nonradial_clt_refuses_small_multiplicity():
    m = build_standard("A", 1, 0.3)
    with pytest.warns(UserWarning):
        p = simulate_skew_product(SimConfig(m, "ho", dt=1e-2, horizon=0.2, path_count=12, master_seed=1))
    with pytest.raises(ValueError, match="1/2"):
        limits.nonradial_clt_sample(p)


def test_istar_density_invariance_and_walls(a2):
    y = np.array([0.8, -0.3])
    base = limits.istar1_log_density(a2, y)
    for g in a2.weyl_matrices:
        assert np.isclose(limits.istar1_log_density(a2, g @ y), base, rtol=1e-12)
    wall = np.array([0.0, 1.0]) if np.any(np.abs(a2.positive_roots @ [0.0, 1.0]) < 1e-12) else \
        a2.positive_roots[0] @ np.array([[0, -1], [1, 0]])
    assert limits.istar1_log_density(a2, wall) == -np.inf


def test_istar_density_gradient_matches_finite_differences(a2):
    y = np.array([0.9, 0.35])
    h = 1e-6
    fd = np.array([(limits.istar1_log_density(a2, y + h * e) - limits.istar1_log_density(a2, y - h * e)) / (2 * h)
                   for e in np.eye(2)])
    assert np.allclose(limits.istar1_log_density_grad(a2, y), fd, rtol=1e-4)


def test_istar_normalizer_rank_one_exact(a1):
    # density 2 y² exp(-y²/2) on the line, total mass 2 √(2π)
    exact = integrate.quad(lambda y: math.exp(limits.istar1_log_density(a1, [y])), -np.inf, np.inf)[0]
    assert exact == pytest.approx(2 * math.sqrt(2 * math.pi), rel=1e-8)
    est = limits.istar1_normalizer(a1, samples=100_000)
    assert est.estimated and abs(est.value - exact) < 4 * est.se


def test_istar_normalizer_a2_matches_selberg_integral(a2):
    # E Π_{i<j}(G_i - G_j)² for a standard Gaussian on the sum-zero plane of R³ equals 1!·2!·3! = 12
    est = limits.istar1_normalizer(a2, samples=200_000)
    assert abs(est.value - 24 * math.pi) < 4 * est.se


def test_istar_rank_one_norm_is_chi3(a1):
    vals, radial, w = limits.istar_sample(a1, 1.0, 800, seed=5, dt=1e-3)
    r = np.abs(vals[:, 0])
    assert np.allclose(r, radial[:, 0])
    assert sps.kstest(r, sps.chi(3).cdf).pvalue > 0.01
    assert set(np.unique(w)) <= {0, 1}


def test_istar_chambers_uniform_and_mean_zero(a2):
    vals, _, w = limits.istar_sample(a2, 1.0, 1200, seed=9, dt=1e-2)
    counts = np.bincount(w, minlength=6)
    from hoproc.stats import chi_square_uniform

    assert chi_square_uniform(counts).p_value > 0.001
    se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals))
    assert np.all(np.abs(vals.mean(axis=0)) < 3.5 * se)


def test_istar_refuses_nonreduced():
    with pytest.raises(ValueError, match="reduced"):
        limits.istar_sample(build_standard("BC", 1), 1.0, 10, seed=0)


def test_f0_and_besq_refuse_noncomplex_case():
    b2 = build_standard("B", 2, {"short": 0.5, "long": 1.0})
    with pytest.raises(ValueError, match="complex case"):
        limits.f0_limit_check(b2, T=1.0, path_count=10)
    with pytest.raises(ValueError, match="complex case"):
        limits.besq_slope(b2, horizon=1.0, path_count=10)


def test_small_girsanov_run_is_consistent(a1):
    rep = limits.girsanov_check(a1, t=0.5, dt=2e-3, path_count=600, seed=3)
    names = [r.name for r in rep.rows]
    assert names[:3] == ["one", "norm2", "gauss"] and "x1" in names
    one = rep.rows[0]
    assert one.direct == 1.0 and one.direct_se == 0.0
    assert abs(rep.mean_weight - 1.0) < 4 * rep.weight_se
    assert rep.min_weight > 0
    for r in rep.rows[1:]:
        assert abs(r.z) < 4


def test_scaled_ho_sample_shape_and_scale(a1):
    x = limits.scaled_ho_sample(a1, 100.0, 1e-2, 100, seed=1)
    assert x.shape == (100, 1) and np.all(np.isfinite(x))
    # second moment of the rank-1 Dunkl process at time 1 from 0: E|Z_1|² = 1 + 2k' = 3
    assert abs(np.mean(x ** 2) - 3.0) < 0.8


def test_dunkl_convergence_rows_and_model_check(a1):
    rows = limits.dunkl_convergence_test(a1, (1.0, 100.0), dt=1e-2, path_count=60, seed=2, permutations=50)
    assert [r.T for r in rows] == [1.0, 100.0]
    assert rows[1].coupled_energy < rows[0].coupled_energy
    with pytest.raises(ValueError, match="rescaling"):
        limits.dunkl_convergence_test(a1, (1.0,), dt=1e-2, path_count=60, seed=2, permutations=10,
                                      dunkl_model=build_standard("A", 1, 2.0))


def test_small_besq_slope(a2):
    f = limits.besq_slope(a2, horizon=4.0, dt=1e-2, path_count=600, seed=1)
    assert f.expected == 8.0
    assert abs(f.slope - f.expected) < 4 * f.slope_se + 0.05 * f.expected


def test_coupling_and_amplitude(a1):
    rep = limits.coupling_check(a1, [0.1], [1.0], dt=1e-3, horizon=0.3, path_count=10, seed=0)
    assert np.all(rep.contracted) and np.all(rep.nonincreasing_fraction >= 0.99)
    r = limits.amplitude_ratio(a1, t=0.5, dt=4e-3, path_count=200, seed=0)
    assert 0.7 < r["ratio"] < 1.4


def test_lln_rank_one_closed_form(a1):
    assert np.allclose(a1.rho, a1.positive_roots[0] / 2)
    paths = simulate_radial(SimConfig(a1, "ho", dt=1e-2, horizon=100.0, path_count=100, master_seed=4, stride=10000))
    est = limits.lln_estimate(paths)
    assert np.all(np.abs(est.estimate - a1.rho) < 4 * est.se + 0.05 * np.linalg.norm(a1.rho))


def test_lln_error_shrinks_with_horizon(a2):
    # the centered drift integrates to a finite offset, so the bias of X_T/T decays like 1/T
    paths = simulate_radial(SimConfig(a2, "ho", dt=1e-2, horizon=200.0, path_count=300, master_seed=8, stride=5000))
    errs = [limits.lln_estimate(paths, T).relative_error for T in (50.0, 100.0, 200.0)]
    assert errs[0] > errs[1] > errs[2]


def test_normalizations_are_linear_in_the_path(a2):
    from dataclasses import replace

    paths = simulate_radial(SimConfig(a2, "ho", dt=1e-2, horizon=4.0, path_count=20, master_seed=2, stride=100))
    shifted = replace(paths, states=2.0 * paths.states)
    T = paths.times[-1]
    assert np.allclose(limits.lln_estimate(shifted).estimate, 2.0 * limits.lln_estimate(paths).estimate)
    c1, c2 = limits.clt_sample(paths).values, limits.clt_sample(shifted).values
    # (2x - ρT)/√T = 2 (x - ρT)/√T + ρ√T
    assert np.allclose(c2, 2.0 * c1 + a2.rho * math.sqrt(T))


def test_scaled_full_process_clusters_at_w_rho(a1):
    # X_T / T approaches w_∞ ρ; mean distance to the nearest w ρ below 5% of |ρ|
    T = 800.0
    p = simulate_skew_product(SimConfig(a1, "ho", dt=5e-2, horizon=T, path_count=100, master_seed=1,
                                        stride=int(T / 5e-2)))
    x = p.full[:, -1] / T
    table = limits.w_rho_table(a1)
    d = np.min(np.linalg.norm(x[:, None, :] - table[None], axis=-1), axis=1)
    assert d.mean() < 0.05 * np.linalg.norm(a1.rho)


def test_two_dunkl_samples_are_not_distinguished(a1):
    from hoproc import rng
    from hoproc.stats import energy_distance_perm

    passes = 0
    for r in range(20):
        a = limits.dunkl_sample(a1, 1.0, 1e-2, 60, seed=r, channel=rng.CHANNELS["dunkl"])
        b = limits.dunkl_sample(a1, 1.0, 1e-2, 60, seed=r, channel=rng.CHANNELS["reference"])
        passes += energy_distance_perm(a, b, permutations=100, seed=r).p_value > 0.05
    assert passes >= 18


def test_istar_radial_part_is_intrinsic_radial_process(a2):
    from hoproc import rng
    from hoproc.roots import fold

    vals, radial, _ = limits.istar_sample(a2, 0.5, 30, seed=3, dt=1e-2)
    ref = simulate_radial(SimConfig(a2, "intrinsic", dt=1e-2, horizon=0.5, path_count=30, master_seed=3,
                                    stride=50, channel=rng.CHANNELS["istar"])).terminal
    assert np.array_equal(radial, ref)
    assert np.allclose(fold(a2, vals), ref, atol=1e-12)
