import io

import numpy as np
import pytest

from hoproc.jumps import (JumpOptions, compute_malpha, jump_statistics, simulate_skew_product, write_events_csv,
                          write_full_csv)
from hoproc.roots import build_standard, pairings, reflect
from hoproc.sde import SimConfig


@pytest.fixture(scope="module")
def a2_paths():
    m = build_standard("A", 2)
    cfg = SimConfig(m, "ho", dt=1e-3, horizon=1.0, path_count=40, master_seed=5, stride=10)
    return simulate_skew_product(cfg)


def test_full_state_is_chamber_element_times_radial(a2_paths):
    p = a2_paths
    mats = p.geometry.weyl_matrices[p.chamber]
    assert np.allclose(np.einsum("pgij,pgj->pgi", mats, p.radial), p.full, atol=1e-12)
    assert np.all(pairings(p.radial, p.geometry.positive_roots) >= -1e-12)


def test_events_are_reflections_of_pre_jump_state(a2_paths):
    ev = a2_paths.events
    assert len(ev) > 0
    pos = a2_paths.geometry.positive_roots
    for i in range(len(ev)):
        assert np.array_equal(ev.post[i], reflect(pos[ev.root[i]], ev.pre[i]))
    assert np.all(np.diff(ev.for_path(int(ev.path_id[0])).t) >= 0)


def test_jump_count_matches_event_log(a2_paths):
    p = a2_paths
    per_path = np.bincount(np.searchsorted(p.path_ids, p.events.path_id), minlength=len(p))
    assert np.array_equal(per_path, p.counts[:, -1])
    assert np.array_equal(p.root_counts.sum(axis=1), per_path)
    assert np.all(np.diff(p.counts, axis=1) >= 0)


def test_chamber_parity_tracks_jump_count(a2_paths):
    p = a2_paths
    lengths = np.array([w.length for w in p.geometry.weyl_group])
    # each jump multiplies by one reflection, which flips the sign of det
    assert np.array_equal(lengths[p.chamber[:, -1]] % 2, p.counts[:, -1] % 2)


def test_determinism_across_batching_and_workers():
    m = build_standard("A", 2)
    cfg = SimConfig(m, "ho", dt=2e-3, horizon=0.4, path_count=6, master_seed=3)
    a = simulate_skew_product(cfg)
    b = simulate_skew_product(SimConfig(m, "ho", dt=2e-3, horizon=0.4, path_count=6, master_seed=3, workers=3))
    c = simulate_skew_product(cfg, path_ids=[2, 5])
    assert np.array_equal(a.full, b.full) and np.array_equal(a.events.t, b.events.t)
    assert np.array_equal(a.full[[2, 5]], c.full)


def test_radial_part_equals_radial_engine():
    from hoproc.sde import simulate_radial

    m = build_standard("B", 2, {"short": 0.6, "long": 1.2})
    cfg = SimConfig(m, "ho", dt=2e-3, horizon=0.3, path_count=5, master_seed=8)
    assert np.array_equal(simulate_skew_product(cfg).radial, simulate_radial(cfg).states)


def test_zero_jump_scale_never_jumps():
    m = build_standard("A", 1)
    cfg = SimConfig(m, "ho", dt=1e-3, horizon=0.5, path_count=20, master_seed=1)
    p = simulate_skew_product(cfg, options=JumpOptions(jump_scale=0.0))
    assert len(p.events) == 0 and np.all(p.chamber == 0)


def test_rate_cap_counts_capped_steps():
    m = build_standard("A", 1)
    cfg = SimConfig(m, "ho", dt=1e-3, horizon=0.2, path_count=20, master_seed=1)
    p = simulate_skew_product(cfg, options=JumpOptions(rate_cap=5.0))
    assert p.capped_steps.sum() > 0
    assert np.all(p.rate_integral[:, -1] <= 5.0 * 0.2 + 1e-9)


def test_option_validation():
    with pytest.raises(ValueError):
        JumpOptions(rate_cap=0.0)
    with pytest.raises(ValueError):
        JumpOptions(wall_start="random")
    m = build_standard("A", 1)
    with pytest.raises(ValueError):
        simulate_skew_product(SimConfig(m, "intrinsic", horizon=0.01, path_count=1))


def test_uniform_wall_start_draws_from_stabilizer():
    m = build_standard("A", 2)
    cfg = SimConfig(m, "ho", dt=1e-2, horizon=0.02, path_count=300, master_seed=2)
    p = simulate_skew_product(cfg, options=JumpOptions(wall_start="uniform"))
    assert len(np.unique(p.initial_chamber)) == 6
    wall = np.array([0.0, 1.0]) if m.in_chamber([0.0, 1.0]) else None
    if wall is not None:
        stab = [w.index for w in m.weyl_group if np.allclose(w.matrix @ wall, wall)]
        q = simulate_skew_product(SimConfig(m, "ho", start=wall, dt=1e-2, horizon=0.02, path_count=50),
                                  options=JumpOptions(wall_start="uniform"))
        assert set(q.initial_chamber.tolist()) <= set(stab)


def test_dunkl_and_f0_kinds_run():
    m = build_standard("BC", 1, {"short": 0.5, "double": 0.5})
    p = simulate_skew_product(SimConfig(m, "dunkl", dt=1e-3, horizon=0.3, path_count=20, master_seed=4))
    assert len(p.geometry.roots) == 2 and np.all(np.isfinite(p.full))
    a2 = build_standard("A", 2)
    q = simulate_skew_product(SimConfig(a2, "f0_complex", dt=1e-3, horizon=0.3, path_count=20, master_seed=4))
    assert np.all(np.isfinite(q.full))
    with pytest.raises(ValueError, match="complex case"):
        simulate_skew_product(SimConfig(build_standard("A", 2, 0.5), "f0_complex", horizon=0.01, path_count=1))


def test_martingale_decomposition_rank_one():
    m = build_standard("A", 1)
    cfg = SimConfig(m, "ho", start=[0.5 / np.sqrt(2)], dt=1e-3, horizon=1.0, path_count=600, master_seed=17,
                    stride=100)
    dec = compute_malpha(simulate_skew_product(cfg))
    M = dec.M[:, -1, 0]
    assert abs(M.mean()) <= 3 * M.std(ddof=1) / np.sqrt(len(M))
    assert dec.simultaneous_jumps == 0
    assert np.all(dec.bracket[:, -1] >= 0)
    # the discretization residual of X = X_0 + β + Σ M^α α + A stays small
    assert np.mean(np.abs(dec.residual[:, -1])) < 0.05


def test_jump_statistics_and_suppression():
    m = build_standard("A", 1)
    p = simulate_skew_product(SimConfig(m, "ho", dt=1e-3, horizon=2.0, path_count=50, master_seed=2, stride=100))
    js = jump_statistics(p)
    assert js.w_infinity is not None and js.suppressed_reason is None
    assert js.mean_amplitude > 0 and 0 <= js.late_jump_fraction <= 1
    small = build_standard("A", 1, 0.3)
    with pytest.warns(UserWarning):
        q = simulate_skew_product(SimConfig(small, "ho", dt=1e-3, horizon=0.2, path_count=5, master_seed=2))
    assert q.flags
    js = jump_statistics(q)
    assert js.w_infinity is None and "1/2" in js.suppressed_reason


def test_csv_writers_round_trip(a2_paths):
    buf = io.StringIO()
    write_events_csv(a2_paths, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "path_id,t,root_index,pre_1,pre_2,post_1,post_2"
    pos = a2_paths.geometry.positive_roots
    for line in lines[1:]:
        vals = line.split(",")
        pre = np.array([float(v) for v in vals[3:5]])
        post = np.array([float(v) for v in vals[5:7]])
        assert np.array_equal(post, reflect(pos[int(vals[2])], pre))
    buf = io.StringIO()
    write_full_csv(a2_paths, buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "path_id,t,x_1,x_2,chamber_word"
    assert len(rows) == 1 + len(a2_paths) * len(a2_paths.times)
