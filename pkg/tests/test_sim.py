import math

import numpy as np
import pytest
from scipy import stats

from vlasovkit.catalog import PRESETS, load_preset
from vlasovkit.config import Box, FiniteConfiguration
from vlasovkit.dsl import evaluate_rate, parse, scale
from vlasovkit.kinetic import DensityField, Grid
from vlasovkit.sim import (
    CosineProfile,
    SimPlan,
    Simulator,
    UnsupportedRate,
    compile_model,
    run_ensemble,
    run_replica,
    sample_poisson_initial,
)
from vlasovkit.sim.io import read_binary, read_jsonl, write_binary, write_jsonl

BOX = Box(1, 10.0)


def simulator(name, eps=1.0, spec=None):
    spec = spec or load_preset(name)
    return Simulator(compile_model(scale(spec, eps), eps), spec.box)


# -- initial states -------------------------------------------------------------------

def test_poisson_count_mean():
    rng = np.random.default_rng(0)
    counts = [len(sample_poisson_initial(1.0, 1.0, BOX, rng)) for _ in range(10_000)]
    assert abs(np.mean(counts) - 10.0) <= 3 * math.sqrt(10.0 / 10_000)


def test_poisson_count_scales_with_inverse_eps():
    rng = np.random.default_rng(1)
    counts = [len(sample_poisson_initial(1.0, 0.1, BOX, rng)) for _ in range(2000)]
    assert abs(np.mean(counts) - 100.0) <= 3 * math.sqrt(100.0 / 2000)


def test_cosine_positions_pass_ks():
    prof = CosineProfile(1.0, 1.0, 1, 10.0)
    pts = np.concatenate([sample_poisson_initial(prof, 0.05, BOX, s).as_array(1)[:, 0] for s in range(20)])

    def cdf(x):
        return (x + 10.0 / (2 * math.pi) * np.sin(2 * math.pi * x / 10.0)) / 10.0

    assert stats.kstest(pts, cdf).pvalue > 0.01
    assert np.allclose(prof.cdf_1d(np.array([0.0, 2.5, 10.0])), cdf(np.array([0.0, 2.5, 10.0])))


def test_density_field_initial_state_in_2d():
    grid = Grid(2, 10.0, 16)
    rho = DensityField.from_function(grid, lambda p: np.where(p[:, 0] < 5.0, 2.0, 0.0))
    pts = sample_poisson_initial(rho, 0.5, grid.box, 3).as_array(2)
    assert np.all(pts[:, 0] < 5.0) and np.all((pts >= 0) & (pts < 10.0))
    assert abs(len(pts) - 200) <= 4 * math.sqrt(200)


def test_initial_state_guards():
    with pytest.raises(ValueError):
        sample_poisson_initial(-1.0, 1.0, BOX, 0)
    with pytest.raises(ValueError, match="exceeds"):
        sample_poisson_initial(1.0, 1e-6, BOX, 0)
    with pytest.raises(ValueError):
        SimPlan(load_preset("surgailis"), 1e-6, BOX, 1.0, 1.0, [1.0], 1)
    with pytest.raises(ValueError):
        SimPlan(load_preset("surgailis"), 1.0, BOX, 1.0, 1.0, [2.0], 1)


# -- rates ----------------------------------------------------------------------------

def state(sim, pts, seed=0):
    return sim.init_state(np.asarray(pts, dtype=float).reshape(-1, 1), np.random.default_rng(seed))


def test_surgailis_totals():
    sim = simulator("surgailis")
    r = sim.total_rates(state(sim, [1.0, 4.0, 8.5]))
    assert r["death_total"] == 3.0 and r["birth_total"] == 20.0
    assert not any(r["bounds"].values())


def test_contact_birth_total():
    sim = simulator("contact")
    r = sim.total_rates(state(sim, [1.0, 4.0, 8.5, 9.0]))
    assert r["birth_total"] == pytest.approx(0.5 * 4 * math.erf(5 / math.sqrt(2)), rel=1e-14)


def test_glauber_birth_bound():
    sim = simulator("glauber_plus", eps=0.5)
    r = sim.total_rates(state(sim, [1.0, 4.0]))
    assert r["birth_total"] == pytest.approx(1.0 / 0.5 * 10.0)
    assert r["bounds"]["birth"]
    z = np.array([1.2])
    acc = sim.located_value(sim.model.by_part("birth")[0], state(sim, [1.0, 4.0]), z)
    want = math.exp(-0.5 * sum(math.exp(-r * r / 0.5) / math.sqrt(0.5 * math.pi) for r in (0.2, 2.8)))
    assert acc == pytest.approx(want, rel=1e-13)


def test_death_totals_match_rate_evaluation():
    for name in ("bdlp", "social", "glauber_minus", "dieckmann_law"):
        spec = load_preset(name)
        sim = simulator(name, 0.25)
        pts = np.random.default_rng(2).uniform(0, 10, (7, 1))
        want = sum(evaluate_rate(scale(spec, 0.25), "death", p, np.delete(pts, i, axis=0)) for i, p in enumerate(pts))
        assert sim.total_rates(state(sim, pts))["death_total"] == pytest.approx(want, rel=1e-12)


def test_signed_exp_birth_not_simulable():
    spec = parse("kernel phi gaussian(1) scale eps; const z = 1 scale inveps; death = 1;"
                 "birth = z * exp(sum[u in gamma] phi(x-u))", box=BOX)
    with pytest.raises(UnsupportedRate):
        compile_model(scale(spec, 1.0), 1.0)


# -- single steps ---------------------------------------------------------------------

def test_first_surgailis_event_is_a_birth():
    sim = simulator("surgailis")
    xs = []
    for seed in range(400):
        st = state(sim, [], seed)
        ev = sim.step(st)
        assert ev.kind == "birth" and st.n == 1
        xs.append(ev.locations[0][0])
    assert stats.kstest(np.array(xs) / 10.0, "uniform").pvalue > 0.01


def test_single_bdlp_particle_dies_at_rate_m():
    sim = simulator("bdlp")
    r = sim.total_rates(state(sim, [3.0]))
    assert r["death_total"] == 1.0


@pytest.mark.parametrize("name", ["free_kawasaki", "kawasaki_departure", "kawasaki_arrival", "gibbs_kawasaki"])
def test_hopping_conserves_particles(name):
    sim = simulator(name, 0.5)
    st = state(sim, np.random.default_rng(0).uniform(0, 10, 12))
    kinds = set()
    for _ in range(300):
        ev = sim.step(st)
        kinds.add(ev.kind)
        assert st.n == 12
    assert "hop" in kinds


def test_tracked_sums_stay_exact():
    sim = simulator("bdlp", 0.5)
    st = state(sim, np.random.default_rng(4).uniform(0, 10, 15))
    for _ in range(200):
        sim.step(st)
    k = sim.kernels["aminus"]
    for i, p in enumerate(st.points):
        v = k.evaluate(st.points - p, sim.box)
        v[i] = 0.0
        assert st.sums["aminus"][i] == pytest.approx(math.fsum(v), abs=1e-12)


def test_time_stops_at_horizon():
    sim = simulator("surgailis")
    st = state(sim, [])
    while sim.step(st, t_max=0.5) is not None:
        assert st.time <= 0.5
    assert st.time == 0.5


# -- ensembles ------------------------------------------------------------------------

def plan(name, eps=1.0, rho0=1.0, t_end=1.0, replicas=20, seed=0, **kw):
    return SimPlan(load_preset(name), eps, BOX, rho0, t_end, kw.pop("times", [t_end]), replicas, seed, **kw)


def test_ensemble_is_deterministic_and_thread_independent():
    p = plan("bdlp", eps=0.5, rho0=CosineProfile(1.0, 0.5, 1, 10.0), replicas=6, times=[0.5, 1.0])
    a = list(run_ensemble(p).records())
    b = list(run_ensemble(p).records())
    c = list(run_ensemble(p, threads=2).records())
    for x, y, z in zip(a, b, c):
        assert x[:2] == y[:2] == z[:2]
        assert np.array_equal(x[2], y[2]) and np.array_equal(x[2], z[2])
    assert len(a) == 12


def test_replica_seed_is_base_plus_index():
    p = plan("surgailis", replicas=3, seed=10)
    q = plan("surgailis", replicas=1, seed=12)
    assert np.array_equal(run_ensemble(p).replicas[2].configs[0], run_replica(q, 0).configs[0])


def test_surgailis_mean_density():
    res = run_ensemble(plan("surgailis", rho0=0.0, t_end=3.0, replicas=100))
    dens = res.counts_at(3.0) / 10.0
    se = dens.std(ddof=1) / math.sqrt(len(dens))
    assert abs(dens.mean() - 2 * (1 - math.exp(-3))) <= 3 * se


def test_glauber_without_interaction_is_surgailis():
    g = load_preset("glauber_plus").with_values(amplitudes={"phi": 0.0})
    s = load_preset("surgailis").with_values(consts={"sigma": 1.0})
    common = dict(eps=1.0, box=BOX, rho0=1.0, t_end=2.0, snapshot_times=[2.0], replicas=300)
    gl = run_ensemble(SimPlan(g, base_seed=0, **common))
    su = run_ensemble(SimPlan(s, base_seed=10_000, **common))
    assert sum(r.rejected for r in gl.replicas) == 0
    assert stats.ks_2samp(gl.counts_at(2.0), su.counts_at(2.0)).pvalue > 0.01


def test_surgailis_renormalised_mean_is_eps_invariant():
    means, ses = [], []
    for eps in (1.0, 0.5, 0.25):
        res = run_ensemble(plan("surgailis", eps=eps, rho0=0.5, t_end=1.0, replicas=60))
        dens = eps * res.counts_at(1.0) / 10.0
        means.append(dens.mean())
        ses.append(dens.std(ddof=1) / math.sqrt(len(dens)))
    for i in range(3):
        for j in range(i + 1, 3):
            assert abs(means[i] - means[j]) <= 3 * math.hypot(ses[i], ses[j])


def test_dieckmann_law_without_competition_explodes():
    spec = load_preset("dieckmann_law").with_values(amplitudes={"aminus": 0.0})
    res = run_ensemble(SimPlan(spec, 1.0, BOX, 1.0, 5.0, [5.0], 2, max_particles=5000))
    assert len(res.truncated) == 2
    assert all(t <= 5.0 for _, t in res.truncated)
    assert res.configs_at(5.0) == []


def test_every_preset_simulates():
    for name in PRESETS:
        res = run_ensemble(plan(name, eps=0.5, replicas=2, t_end=0.2))
        assert len(res.configs_at(0.2)) == 2


# -- snapshot files -------------------------------------------------------------------

def test_snapshot_files_round_trip(tmp_path):
    res = run_ensemble(plan("contact", replicas=3, times=[0.5, 1.0]))
    recs = list(res.records())
    write_jsonl(tmp_path / "s.jsonl", recs)
    write_binary(tmp_path / "s.bin", recs, 1, 10.0)
    j = read_jsonl(tmp_path / "s.jsonl")
    b = read_binary(tmp_path / "s.bin")
    assert len(j) == len(b) == 6
    for (r, t, p), (rj, tj, pj), (tb, Lb, pb) in zip(recs, j, b):
        assert (r, t) == (rj, tj) and t == tb and Lb == 10.0
        assert np.array_equal(p, pj) and np.array_equal(p, pb)
    raw = (tmp_path / "s.bin").read_bytes()
    assert raw[:2] == b"VS" and len(raw) == 6 * 24 + 8 * sum(len(p) for _, _, p in recs)


def test_configs_are_canonically_ordered():
    res = run_ensemble(plan("contact", replicas=2))
    for _, _, pts in res.records():
        assert FiniteConfiguration.from_array(pts).as_array(1).tolist() == pts.tolist()
