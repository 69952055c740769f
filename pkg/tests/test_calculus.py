import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glauber import oracle
from glauber.calculus import (SampleTerms, Window, apply_generator, battery, coercivity_from_terms,
                              coercivity_terms, constant, d_minus, d_plus, dirichlet_form_mc, linear,
                              second_gradient, squared, symmetry_defect, symmetry_from_terms)
from glauber.dynamics import sample_chains
from glauber.errors import DomainError, ModelError
from glauber.geometry import Box, Lattice, ModelParams
from glauber.potentials import SoftGaussian, Strauss, Zero
from glauber.stats import batch_mean

BOX = Box((1.0, 1.0))
W = Window((0.0, 0.0), (0.5, 1.0))
BATTERY = battery(BOX)

coords = st.floats(0.0, 0.999, allow_nan=False)
configs = st.lists(st.tuples(coords, coords), min_size=0, max_size=8, unique=True)


def test_gradient_examples():
    F = linear(W)
    assert d_minus(F, [[0.2, 0.5], [0.7, 0.5]], [0.2, 0.5]) == -1.0
    assert d_plus(F, [[0.7, 0.5]], [0.2, 0.5]) == -1.0
    assert d_minus(constant(3.0), [[0.2, 0.5]], [0.2, 0.5]) == 0.0
    assert d_plus(constant(3.0), [], [0.2, 0.5]) == 0.0
    bump = Window((0.0, 0.0), (1.0, 1.0), "bump")
    a = bump([[0.3, 0.6]])[0]
    assert d_minus(squared(bump), [[0.3, 0.6]], [0.3, 0.6]) == pytest.approx(-a * a)


def test_gradient_domain_errors():
    F = linear(W)
    with pytest.raises(DomainError):
        d_minus(F, [[0.2, 0.5]], [0.3, 0.5])
    with pytest.raises(DomainError):
        d_plus(F, [[0.2, 0.5]], [0.2, 0.5])
    with pytest.raises(DomainError):
        second_gradient(F, [[0.2, 0.5]], [0.2, 0.5], [0.9, 0.9])


@given(configs, st.tuples(coords, coords), st.integers(0, len(BATTERY) - 1))
def test_plus_minus_round_trip(pts, x, j):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(pts) and np.any(np.all(pts == np.asarray(x), axis=1)):
        return
    F = BATTERY[j]
    with_x = np.vstack([pts, [x]])
    # both sides equal F(gamma) - F(gamma + x)
    assert d_plus(F, pts, x) - d_minus(F, with_x, x) == 0.0


@given(configs.filter(lambda p: len(p) >= 2), st.data(), st.integers(0, len(BATTERY) - 1))
def test_second_gradient_symmetric(pts, data, j):
    pts = np.asarray(pts, dtype=float)
    i = data.draw(st.integers(0, len(pts) - 1))
    k = data.draw(st.integers(0, len(pts) - 1))
    F = BATTERY[j]
    assert second_gradient(F, pts, pts[i], pts[k]) == second_gradient(F, pts, pts[k], pts[i])
    if i == k:
        assert second_gradient(F, pts, pts[i], pts[i]) == -d_minus(F, pts, pts[i])


@given(configs, st.integers(0, len(BATTERY) - 1))
def test_vectorized_gradients_match_definitions(pts, j):
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    F = BATTERY[j]
    f0 = F.values(pts)
    for i, x in enumerate(pts):
        assert F.removed(pts)[i] - f0 == pytest.approx(d_minus(F, pts, x), abs=1e-12)
    X = np.array([[0.11, 0.42], [0.77, 0.05]])
    for r, x in enumerate(X):
        assert f0 - F.added(pts, X)[r] == pytest.approx(d_plus(F, pts, x), abs=1e-12)


def test_generator_number_operator():
    z = 1.7
    params = ModelParams(z, Zero(), BOX)
    pts = [[0.1, 0.1], [0.3, 0.9], [0.6, 0.5]]
    hf, err = apply_generator(linear(W), pts, params)
    assert hf == pytest.approx(2 - z * 0.5, abs=1e-9)
    hf, _ = apply_generator(constant(2.0), pts, ModelParams(0.5, Strauss(1.0, 0.5), BOX))
    assert hf == 0.0


def test_generator_strauss_hand_computed():
    # one point in the middle of W, F = count in W, all of W covered by no other disk
    R, beta, z = 0.1, 0.8, 2.0
    params = ModelParams(z, Strauss(beta, R), BOX)
    hf, _ = apply_generator(linear(W), [[0.25, 0.5]], params)
    births = z * (0.5 - (1 - math.exp(-beta)) * math.pi * R * R)
    assert hf == pytest.approx(1.0 - births, abs=1e-6)


def _cut_cells(centers, h, pts, R, box):
    """Cells whose square is crossed by some circle of radius R around the points."""
    offs = np.array([[sx, sy] for sx in (-h, h) for sy in (-h, h)])
    cut = np.zeros(len(centers), dtype=bool)
    for p in pts:
        dc = box.displacement(centers, p)
        near = np.linalg.norm(np.clip(0.0, dc - h, dc + h), axis=1)  # nearest point of the square
        far = np.max(np.linalg.norm(dc[:, None, :] + offs[None], axis=2), axis=1)
        cut |= (near < R) & (far > R)
    return cut


def test_generator_row_matches_oracle():
    # discrete generator on the cell-center configuration vs continuum HF; the only
    # discontinuities inside cells are the disk boundaries, so the error is at most
    # z a sum over cut cells of the jump size
    n, R, beta, z = 6, 0.25, 1.0, 1.5
    params = ModelParams(z, Strauss(beta, R), BOX, Lattice((n, n), 4))
    model = oracle.DiscreteModel(params)
    rm = oracle.build_rate_matrix(model)
    F = linear(Window((0.0, 0.0), (0.5, 1.0)))
    fvec = oracle.observable_vector(rm, F)
    hq = oracle.discrete_generator(rm, fvec)
    centers = model.centers
    for cells in ([0, 14, 27], [3, 4, 20], [7, 22, 35]):
        mask = sum(1 << c for c in cells)
        pts = centers[cells]
        hf, _ = apply_generator(F, pts, params)
        cut = _cut_cells(centers, 0.5 / n, pts, R, BOX)
        bound = z * model.a * cut.sum() * (1 - math.exp(-3 * beta)) + 1e-6
        assert abs(hq[rm.index(mask)] - hf) <= bound


@pytest.fixture(scope="module")
def poisson_samples():
    params = ModelParams(1.0, Zero(), BOX)
    return params, sample_chains(params, 10.0, 500, 1.0, seed=2, chains=8)


@pytest.fixture(scope="module")
def strauss_samples():
    params = ModelParams(0.5, Strauss(1.0, 0.5), BOX)
    return params, sample_chains(params, 10.0, 400, 0.5, seed=3, chains=8)


def test_dirichlet_constant_is_zero(strauss_samples):
    params, samples = strauss_samples
    est = dirichlet_form_mc(constant(), constant(), samples, params)
    assert est.pointwise.estimate == 0.0 and est.birth_side.estimate == 0.0


def test_dirichlet_poisson_count(poisson_samples):
    params, samples = poisson_samples
    F = linear(W)
    est = dirichlet_form_mc(F, F, samples, params)
    assert est.pointwise.consistent_with(0.5, 3.0)
    assert est.birth_side.estimate == pytest.approx(0.5, abs=1e-9)
    assert est.difference.consistent_with(0.0, 3.0)


@pytest.fixture(scope="module")
def strauss_terms(strauss_samples):
    params, samples = strauss_samples
    return SampleTerms(BATTERY, samples, params)


def test_dirichlet_representations_agree_on_strauss(strauss_samples, strauss_terms):
    params, samples = strauss_samples
    est = dirichlet_form_mc(BATTERY[0], BATTERY[2], samples, params)
    assert est.difference.consistent_with(0.0, 3.0)
    t = strauss_terms
    for i in range(len(BATTERY)):
        for j in range(i, len(BATTERY)):
            diff = batch_mean(t.dir_a[:, i, j] - t.dir_b[:, i, j], t.chain)
            assert diff.consistent_with(0.0, 3.0)


def test_coercivity_poisson(poisson_samples):
    params, samples = poisson_samples
    terms = SampleTerms(BATTERY, samples, params, need_b=False)
    for j in range(len(BATTERY)):
        est = coercivity_from_terms(terms, j)
        assert est.cross.estimate == 0.0 and est.cross.stderr == 0.0
        assert est.defect.consistent_with(0.0, 3.0)
    est = coercivity_terms(constant(), samples, params)
    assert est.lhs.estimate == est.trace.estimate == est.cross.estimate == 0.0


def test_coercivity_strauss(strauss_samples, strauss_terms):
    params, samples = strauss_samples
    est = coercivity_terms(BATTERY[0], samples, params)
    assert est.cross.estimate > 0.0
    assert est.defect.consistent_with(0.0, 3.0)
    for j in range(len(BATTERY)):
        assert coercivity_from_terms(strauss_terms, j).defect.consistent_with(0.0, 3.0)


def test_coercivity_needs_positive_potential():
    class Attractive(SoftGaussian):
        positive = False
    params = ModelParams(0.5, Attractive(1.0, 0.1), BOX)
    with pytest.raises(ModelError):
        coercivity_terms(linear(W), [params.empty()], params)


def test_symmetry(poisson_samples, strauss_samples):
    params, samples = poisson_samples
    F = linear(W)
    assert symmetry_defect(F, F, samples, params).consistent_with(0.0, 3.0)
    assert symmetry_defect(F, constant(), samples, params).consistent_with(0.0, 3.0)
    assert symmetry_defect(constant(), F, samples, params).estimate == 0.0
    params, samples = strauss_samples
    assert symmetry_defect(BATTERY[0], BATTERY[2], samples, params).consistent_with(0.0, 3.0)


def test_symmetry_strauss_battery(strauss_terms):
    k = len(BATTERY)
    for i in range(k):
        for j in range(k):
            assert symmetry_from_terms(strauss_terms, i, j).consistent_with(0.0, 3.0)


def test_sample_terms_match_single_evaluations(strauss_samples):
    params, samples = strauss_samples
    few = [samples[0][k] for k in range(0, 400, 80)]
    terms = SampleTerms(BATTERY, few, params)
    for s, g in enumerate(few):
        for j, F in enumerate(BATTERY):
            hf, _ = apply_generator(F, g, params)
            assert terms.HF[s, j] == pytest.approx(hf, abs=1e-5)
            assert terms.F[s, j] == F(g)
