import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glauber.errors import ModelError
from glauber.geometry import delta_integral
from glauber.potentials import HardCore, SoftGaussian, Strauss, Zero, ball_volume, from_record

from conftest import SHIPPED
from oracles import DELTA_STRAUSS, delta_by_cartesian_quadrature

vectors = st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=3)


def test_evaluate_examples():
    assert Strauss(2.0, 1.0).evaluate(np.array([1.0, 0.0])) == 0.0
    assert Strauss(2.0, 1.0).evaluate(np.array([0.999, 0.0])) == 2.0
    assert SoftGaussian(1.0, 1.0).evaluate(np.zeros(2)) == 1.0
    assert HardCore(0.3).evaluate(np.array([0.31])) == 0.0
    assert HardCore(0.3).evaluate(np.array([0.29])) == math.inf
    assert Zero().evaluate(np.array([0.0, 0.1])) == 0.0


@pytest.mark.parametrize("pot", SHIPPED, ids=str)
@given(v=vectors)
def test_symmetry_and_positivity(pot, v):
    x = np.asarray(v)
    a, b = pot.evaluate(x), pot.evaluate(-x)
    assert a == b
    assert a >= 0.0
    assert pot.positive


def test_softgaussian_cutoff():
    pot = SoftGaussian(2.0, 0.3)
    rc = pot.cutoff
    assert 2.0 * math.exp(-rc**2 / (2 * 0.09)) == pytest.approx(1e-12, rel=1e-9)
    assert pot.evaluate(np.array([rc * 1.0001])) == 0.0
    assert pot.evaluate(np.array([rc * 0.999])) > 0.0


def test_invalid_parameters():
    with pytest.raises(ModelError):
        Strauss(-1.0, 0.5)
    with pytest.raises(ModelError):
        HardCore(0.0)
    with pytest.raises(ModelError):
        SoftGaussian(1.0, -0.1)


def test_record_round_trip():
    for pot in SHIPPED:
        assert from_record(pot.to_record()) == pot


def test_record_errors_name_the_field():
    with pytest.raises(ModelError, match="range"):
        from_record({"type": "strauss", "beta": 1.0})
    with pytest.raises(ModelError, match="type"):
        from_record({"beta": 1.0})
    with pytest.raises(ModelError, match="unknown"):
        from_record({"type": "lennard-jones"})


def test_delta_examples():
    assert delta_integral(Zero(), 1.0, 2) == 0.0
    assert delta_integral(Strauss(1.0, 0.5), 0.5, 2) == pytest.approx(0.248232, abs=2e-6)
    assert delta_integral(Strauss(1.0, 0.5), 0.5, 2) == pytest.approx(DELTA_STRAUSS, rel=1e-12)
    assert delta_integral(HardCore(0.5), 0.4, 1) == pytest.approx(0.4, rel=1e-12)


@pytest.mark.parametrize("pot,z,d,reach,jumps", [
    (Strauss(1.0, 0.5), 0.5, 2, 0.6, [0.5]),
    (Strauss(0.7, 0.3), 1.3, 1, 0.5, [0.3]),
    (HardCore(0.25), 0.8, 2, 0.3, [0.25]),
    (SoftGaussian(1.0, 0.1), 1.0, 2, 0.75, []),
    (SoftGaussian(2.5, 0.2), 0.6, 1, 1.5, []),
])
def test_delta_matches_cartesian_quadrature(pot, z, d, reach, jumps):
    ref = delta_by_cartesian_quadrature(pot.radial, z, d, reach, jumps)
    assert delta_integral(pot, z, d) == pytest.approx(ref, abs=1e-8)


def test_ball_volume():
    assert ball_volume(1, 0.5) == pytest.approx(1.0)
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 1.0) == pytest.approx(4 * math.pi / 3)
