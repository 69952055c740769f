import math

import numpy as np
import pytest

from glauber import oracle
from glauber.dynamics import sample_chains
from glauber.errors import CapacityError, ModelError
from glauber.geometry import Box, Lattice, ModelParams
from glauber.potentials import HardCore, SoftGaussian, Strauss, Zero

from oracles import random_instances


def model(pot, z=1.0, shape=(1, 1), cap=1, sides=(1.0, 1.0), boundary="periodic"):
    return oracle.DiscreteModel.build(z, pot, Box(sides, boundary), shape, cap)


@pytest.mark.parametrize("pot", [Zero(), Strauss(2.0, 0.3), HardCore(0.1)], ids=str)
def test_two_state_chain(pot):
    m = model(pot, z=0.7)
    rm = oracle.build_rate_matrix(m)
    za = 0.7
    np.testing.assert_allclose(rm.dense(), [[-za, za], [1.0, -1.0]], atol=1e-15)
    pi = oracle.stationary_distribution(rm)
    np.testing.assert_allclose(pi, [1 / (1 + za), za / (1 + za)], atol=1e-14)
    assert oracle.spectral_gap_eig(rm, pi) == pytest.approx(1 + za, abs=1e-12)


def test_free_product_bernoulli():
    z, shape = 3.0, (2, 3)
    m = model(Zero(), z=z, shape=shape, cap=6)
    rm = oracle.build_rate_matrix(m)
    pi = oracle.stationary_distribution(rm)
    p = z * m.a / (1 + z * m.a)
    k = np.array([bin(int(s)).count("1") for s in rm.states])
    np.testing.assert_allclose(pi, p**k * (1 - p) ** (6 - k), atol=1e-10)
    # independent two-state blocks: every nonzero eigenvalue is a sum of block rates 1 + z a
    assert oracle.spectral_gap_eig(rm, pi) == pytest.approx(1 + z * m.a, abs=1e-10)
    assert oracle.delta_discrete(m) == 0.0


def test_hardcore_blocks_adjacent_cells():
    m = model(HardCore(0.3), z=2.0, shape=(4, 1), cap=4, sides=(1.0, 1.0))
    rm = oracle.build_rate_matrix(m)
    Q = rm.dense()
    i = rm.index(0b0001)
    assert Q[i, rm.index(0b0011)] == 0.0          # neighbour at distance 0.25 < 0.3
    assert Q[i, rm.index(0b0101)] == pytest.approx(2.0 * 0.25)
    assert np.allclose(Q.sum(axis=1), 0.0)
    pi = oracle.stationary_distribution(rm)
    assert pi[rm.index(0b0011)] == 0.0
    reach = oracle.reachable_from_empty(rm)
    assert not reach[rm.index(0b0011)] and reach[rm.index(0b0101)]


def test_cap_limits_births():
    m = model(Zero(), shape=(3, 1), cap=2)
    rm = oracle.build_rate_matrix(m)
    assert rm.size == 1 + 3 + 3
    Q = rm.dense()
    full = rm.index(0b011)
    assert Q[full, full] == -2.0


def test_capacity_errors():
    with pytest.raises(CapacityError):
        oracle.enumerate_states(model(Zero(), shape=(40, 1), cap=40))
    with pytest.raises(CapacityError):
        model(Zero(), shape=(8, 8), cap=2)
    m = model(Zero(), shape=(4, 4), cap=4)      # 2517 states, dense is fine
    assert oracle.build_rate_matrix(m).dense().shape == (2517, 2517)
    m = model(Zero(), shape=(5, 4), cap=6)
    rm = oracle.build_rate_matrix(m)
    with pytest.raises(CapacityError):
        rm.dense()


def test_needs_lattice():
    with pytest.raises(ModelError):
        oracle.DiscreteModel(ModelParams(1.0, Zero(), Box((1.0,))))


@pytest.mark.parametrize("pot", [Strauss(1.0, 0.45), SoftGaussian(2.0, 0.2), HardCore(0.3)], ids=str)
def test_stationary_matches_gibbs_enumeration(pot):
    m = model(pot, z=2.0, shape=(3, 3), cap=5)
    rm = oracle.build_rate_matrix(m)
    pi = oracle.stationary_distribution(rm)
    w = oracle.gibbs_weights(m)
    ref = np.array([w[int(s)] for s in rm.states])
    assert np.max(np.abs(pi - ref)) < 1e-10
    assert oracle.detailed_balance_defect(rm, pi) < 1e-12


def test_irreversible_matrix_is_rejected():
    m = model(Strauss(1.0, 0.45), z=2.0, shape=(3, 1), cap=3)
    rm = oracle.build_rate_matrix(m)
    Q = rm.Q.tolil()
    Q[0, 1] += 0.5
    Q[0, 0] -= 0.5
    bad = oracle.RateMatrix(Q.tocsr(), rm.states, m)
    pi = oracle.stationary_distribution(bad)
    with pytest.raises(ModelError):
        oracle.spectral_gap_eig(bad, pi)


def test_discrete_gap_bound_random_instances():
    instances = random_instances(2024, 25)
    for m in instances:
        rm = oracle.build_rate_matrix(m)
        pi = oracle.stationary_distribution(rm)
        gap = oracle.spectral_gap_eig(rm, pi)
        assert gap >= 1.0 - oracle.delta_discrete(m) - 1e-10, (m, gap)


def test_delta_discrete_hand_value():
    # two cells of a periodic 1D box at distance 0.5, Strauss range 0.6 covers both
    m = model(Strauss(1.0, 0.6), z=0.4, shape=(2,), cap=2, sides=(1.0,))
    expected = 0.4 * 0.5 * 2 * (1 - math.exp(-1.0))
    assert oracle.delta_discrete(m) == pytest.approx(expected)


def test_lattice_simulation_matches_stationary_law():
    params = ModelParams(2.0, Strauss(1.0, 0.4), Box((1.0, 1.0)), Lattice((3, 2), 4))
    m = oracle.DiscreteModel(params)
    rm = oracle.build_rate_matrix(m)
    pi = oracle.stationary_distribution(rm)
    samples = [c for ch in sample_chains(params, 20.0, 1250, 2.0, seed=1, chains=8) for c in ch]
    emp = oracle.empirical_law(rm, samples)
    assert oracle.tv_distance(emp, pi) < 0.05
    assert oracle.OracleReport(rm.size, 1.0, 0.1, 0.02).to_record()["state_count"] == rm.size
