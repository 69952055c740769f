import json
import math

import numpy as np
import pytest
from scipy import stats

from glauber.dynamics import ChainState, cftp_sample, run, sample_chains, sample_equilibrium, step_event
from glauber.errors import CoalescenceError, ModelError, ParameterError
from glauber.geometry import Box, Lattice, ModelParams
from glauber import oracle
from glauber.potentials import HardCore, Strauss, Zero

from oracles import immigration_death_law, poisson_chisquare_pvalue


def test_first_event_from_empty_is_birth_at_rate_z():
    params = ModelParams(2.0, Zero(), Box((1.0, 1.0)))
    times, locs = [], []
    for seed in range(2000):
        state = ChainState.start(params, seed)
        state, ev = step_event(state, params)
        assert ev.kind == "birth"
        times.append(ev.at_time)
        locs.append(ev.location)
    assert stats.kstest(times, "expon", args=(0, 0.5)).pvalue > 0.001
    locs = np.asarray(locs)
    assert stats.kstest(locs[:, 0], "uniform").pvalue > 0.001
    assert stats.kstest(locs[:, 1], "uniform").pvalue > 0.001


def test_zero_activity_gives_death_at_rate_one():
    params = ModelParams(0.0 + 1e-300, Zero(), Box((1.0,)))
    params = ModelParams(1e-300, Zero(), Box((1.0,)))
    times = []
    for seed in range(1500):
        state = ChainState(params.configuration([[0.3]]), ChainState.start(params, seed).rng)
        state, ev = step_event(state, params)
        assert ev.kind == "death"
        np.testing.assert_array_equal(ev.location, [0.3])
        times.append(ev.at_time)
    assert stats.kstest(times, "expon").pvalue > 0.001


def test_absorbed_chain_returns_no_event():
    params = ModelParams(0.0, Zero(), Box((1.0,)))
    state = ChainState.start(params, 0)
    state, ev = step_event(state, params)
    assert ev is None


def test_hardcore_rejects_overlapping_proposals():
    params = ModelParams(30.0, HardCore(0.1), Box((1.0, 1.0)))
    state = ChainState.start(params, 2)
    traj = run(state, params, events=20000)
    pts = [p.copy() for p in traj.initial]
    n_rejected = 0
    for ev in traj.events():
        near = any(np.linalg.norm(params.box.displacement(ev.location, p)) < 0.1 for p in pts)
        if ev.kind == "birth":
            assert not near
            pts.append(ev.location)
        elif ev.kind == "death":
            i = ev.index
            pts[i] = pts[-1]
            pts.pop()
        else:
            n_rejected += 1
    assert n_rejected > 0


def test_zero_event_horizon_keeps_only_initial_snapshot(zero_params):
    state = ChainState.start(zero_params, 0)
    traj = run(state, zero_params, events=0)
    assert len(traj) == 0 and len(traj.snapshots) == 1 and traj.final_time == 0.0


def test_bad_horizons(zero_params):
    state = ChainState.start(zero_params, 0)
    with pytest.raises(ParameterError):
        run(state, zero_params)
    with pytest.raises(ParameterError):
        run(state, zero_params, events=-1)
    with pytest.raises(ParameterError):
        sample_equilibrium(zero_params, 1.0, 10, 0.0)
    with pytest.raises(ParameterError):
        sample_equilibrium(zero_params, 0.0, 10, 1.0)
    with pytest.raises(ParameterError):
        ChainState.start(zero_params, 0, initial="full")


def test_transient_law_of_free_process():
    # M/M/inf from empty: |gamma_t| ~ Poisson(z|box|(1 - e^{-t}))
    params = ModelParams(5.0, Zero(), Box((1.0, 1.0)))
    t = 0.7
    counts = []
    for seed in range(3000):
        state = ChainState.start(params, seed)
        traj = run(state, params, until=t, snapshots=[t], record=False)
        counts.append(len(traj.snapshots[-1]))
    law = immigration_death_law(5.0, t)
    assert poisson_chisquare_pvalue(counts, law.mean()) > 0.01


def test_equilibrium_counts_are_poisson():
    params = ModelParams(3.0, Zero(), Box((1.0, 1.0)))
    samples = sample_equilibrium(params, 10.0, 10_000, 5.0, seed=4)
    counts = [len(s) for s in samples]
    assert poisson_chisquare_pvalue(counts, 3.0) > 0.01
    assert samples[0].time == 10.0 and samples[-1].time == pytest.approx(10.0 + 5.0 * 9999)


def test_snapshots_are_cadlag_and_replayable(strauss_params):
    state = ChainState.start(strauss_params, 9)
    sched = np.linspace(0.5, 40.0, 30)
    traj = run(state, strauss_params, until=40.0, snapshots=sched)
    assert np.array_equal(traj.snapshot_times[1:], sched)
    for a, b in zip(traj.replay(), traj.snapshots):
        np.testing.assert_array_equal(a, b)
    # the value at t is the state after the last event at or before t
    ev_t = traj.times[5]
    (after,) = traj.replay([ev_t])
    (before,) = traj.replay([np.nextafter(ev_t, -np.inf)])
    assert len(after) != len(before) or traj.kinds[5] == 2


def test_trajectory_exports(tmp_path, zero_params):
    state = ChainState.start(zero_params, 1)
    traj = run(state, zero_params, until=5.0, snapshots=[1.0, 2.0])
    traj.write_jsonl(tmp_path / "e.jsonl")
    rows = [json.loads(line) for line in (tmp_path / "e.jsonl").read_text().splitlines()]
    assert len(rows) == len(traj)
    assert set(rows[0]) == {"t", "kind", "x"}
    traj.write_snapshots_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("snapshot,t,x0,x1")


def test_same_seed_same_trajectory(tmp_path, strauss_params):
    blobs = []
    for k in range(2):
        state = ChainState.start(strauss_params, 77, 3)
        traj = run(state, strauss_params, events=2000)
        traj.write_jsonl(tmp_path / f"{k}.jsonl")
        blobs.append((tmp_path / f"{k}.jsonl").read_bytes())
    assert blobs[0] == blobs[1]
    other = ChainState.start(strauss_params, 77, 4)
    run(other, strauss_params, events=2000)
    assert other.config != state.config


def test_clock_and_acceptance(strauss_params):
    # stationary death rate per unit time equals the mean particle number
    deaths, areas, acc = [], [], []
    for c in range(8):
        state = ChainState.start(strauss_params, 11, c)
        run(state, strauss_params, until=50.0, record=False)
        traj = run(state, strauss_params, until=2050.0)
        t = np.concatenate([[traj.start_time], traj.times, [traj.final_time]])
        n = len(traj.initial) + np.cumsum(np.r_[0, np.where(traj.kinds == 0, 1, np.where(traj.kinds == 1, -1, 0))])
        areas.append(np.sum(n * np.diff(t)) / 2000.0)
        deaths.append(traj.counts[1] / 2000.0)
        b, _, r = traj.counts
        acc.append(b / (b + r))
    diff = np.asarray(deaths) - np.asarray(areas)
    assert abs(diff.mean()) <= 3 * diff.std(ddof=1) / math.sqrt(len(diff)) + 1e-12
    assert max(acc) < 1.0
    zp = ModelParams(2.0, Zero(), Box((1.0, 1.0)))
    traj = run(ChainState.start(zp, 0), zp, events=5000)
    assert traj.counts[2] == 0


def test_time_reversibility_of_pair_statistics(strauss_params):
    # E[G(X_s) F(X_{s+t})] = E[F(X_s) G(X_{s+t})] for a reversible stationary chain
    from glauber.calculus import Window, linear, smoothed
    from glauber.estimators import AutocorrConfig, chain_series
    F = linear(Window((0.0, 0.0), (0.5, 1.0)))
    G = smoothed(Window((0.25, 0.25), (0.75, 0.75)))
    cfg = AutocorrConfig(chains=8, horizon=1000.0, dt=0.1, seed=5)
    lag = 5  # t = 0.5
    vals = []
    for c in range(8):
        s = chain_series([F, G], strauss_params, cfg, c)
        f, g = s[:, 0], s[:, 1]
        vals.append(np.mean(g[:-lag] * f[lag:] - f[:-lag] * g[lag:]))
    vals = np.asarray(vals)
    assert abs(vals.mean()) <= 3 * vals.std(ddof=1) / math.sqrt(len(vals))


def test_lattice_mode_matches_oracle_count_law():
    params = ModelParams(1.5, Strauss(1.0, 0.45), Box((1.0, 1.0)), Lattice((3, 3), 5))
    model = oracle.DiscreteModel(params)
    rm = oracle.build_rate_matrix(model)
    pi = oracle.stationary_distribution(rm)
    sizes = np.array([bin(int(s)).count("1") for s in rm.states])
    exact = np.bincount(sizes, weights=pi)
    chains = sample_chains(params, 20.0, 1250, 2.0, seed=8, chains=8)
    emp = np.bincount([len(s) for ch in chains for s in ch], minlength=len(exact)) / 10_000
    assert 0.5 * np.abs(emp - exact).sum() < 0.05


def test_cftp_zero_is_poisson():
    params = ModelParams(2.0, Zero(), Box((1.0, 1.0)))
    counts = [len(cftp_sample(params, 3, k)) for k in range(3000)]
    assert poisson_chisquare_pvalue(counts, 2.0) > 0.01


def test_cftp_hardcore_has_no_close_pairs():
    params = ModelParams(20.0, HardCore(0.1), Box((1.0, 1.0)))
    for k in range(200):
        c = cftp_sample(params, 1, k)
        pts = c.points
        if len(pts) > 1:
            d = np.linalg.norm(params.box.displacement(pts[:, None], pts[None, :]), axis=-1)
            assert np.min(d[np.triu_indices(len(pts), 1)]) >= 0.1


def test_cftp_errors():
    box = Box((1.0, 1.0))
    with pytest.raises(ModelError):
        cftp_sample(ModelParams(1.0, Strauss(1.0, 0.3), box, Lattice((2, 2), 2)))
    with pytest.raises(CoalescenceError):
        cftp_sample(ModelParams(200.0, HardCore(0.05), box), initial_window=0.01, max_window=0.02)
