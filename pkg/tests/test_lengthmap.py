import math

import numpy as np
import pytest

from lenmap import (
    DIVERGED,
    FINITE,
    HEAVISIDE,
    IDENTITY,
    RECIPROCAL,
    RELU,
    TANH,
    DivergedError,
    compute_length_map,
    exp_square,
    gaussian_second_moment,
    length_map_fixed_point,
)


def test_relu_critical_plateau():
    lm = compute_length_map(RELU, math.sqrt(2.0), 0.0, 10)
    assert lm.first_diverged_layer() is None
    assert lm.status == (FINITE,) * 11
    assert lm.layers() == range(11)
    for layer in range(1, 11):
        assert lm.qtilde[layer] == pytest.approx(2.0, abs=1e-9)


def test_identity_affine_closed_form():
    # q_l = 0.5 * q_{l-1} + 0.25 from q_0 = 1, so q_l = 1/2 + (1/2)^{l+1}
    lm = compute_length_map(IDENTITY, math.sqrt(0.5), 0.5, 10)
    for layer in range(11):
        expect = 0.5 + 0.5 ** (layer + 1)
        assert lm.qtilde[layer] == pytest.approx(expect, abs=1e-10)
        assert lm.trtilde[layer] == pytest.approx(expect, abs=1e-10)


def test_heaviside_settles_at_half():
    lm = compute_length_map(HEAVISIDE, 1.0, 0.0, 6)
    assert lm.qtilde[1] == 1.0
    for layer in range(1, 7):
        assert lm.trtilde[layer] == pytest.approx(0.5, abs=1e-10)
    for layer in range(2, 7):
        assert lm.qtilde[layer] == pytest.approx(0.5, abs=1e-10)


def test_tanh_layer_two_feeds_from_layer_one():
    lm = compute_length_map(TANH, 1.0, 0.0, 2)
    assert lm.qtilde[1] == 1.0
    assert lm.trtilde[1] == pytest.approx(0.39429449039784176, abs=5e-9)
    # sigma_w = 1 makes the next length exactly the previous moment
    assert lm.qtilde[2] == lm.trtilde[1]


def test_zero_variance_short_circuits_quadrature():
    lm = compute_length_map(RELU, 0.0, 0.0, 4)
    assert lm.status == (FINITE,) * 5
    assert np.array_equal(lm.qtilde[1:], np.zeros(4))
    assert np.array_equal(lm.trtilde[1:], np.zeros(4))
    lm2 = compute_length_map(exp_square(1.0), 0.0, 0.0, 2)
    assert np.array_equal(lm2.trtilde[1:], np.ones(2))  # phi(0)^2 = 1


def test_boundary_divergence_poisons_downstream():
    lm = compute_length_map(exp_square(1.0), 0.5, 0.0, 4)
    assert lm.qtilde[1] == 0.25
    assert lm.q_finite[1] and not lm.tr_finite[1]
    assert math.isnan(lm.trtilde[1])
    assert lm.status == (FINITE, DIVERGED, DIVERGED, DIVERGED, DIVERGED)
    assert lm.first_diverged_layer() == 1
    assert not lm.q_finite[2] and math.isnan(lm.qtilde[2])


def test_unit_start_norm_divergence():
    lm = compute_length_map(exp_square(0.5), 0.6, 0.8, 3)
    assert lm.qtilde[1] == pytest.approx(1.0, abs=1e-15)
    assert lm.status[1] == DIVERGED


def test_finite_layer_then_divergence():
    # q1 = 0.16 is subcritical (4 alpha q < 1); q2 = 0.16/0.6 crosses over
    lm = compute_length_map(exp_square(1.0), 0.4, 0.0, 4)
    assert lm.status[:3] == (FINITE, FINITE, DIVERGED)
    assert lm.trtilde[1] == pytest.approx(5.0 / 3.0, rel=1e-9)
    assert lm.first_diverged_layer() == 2


def test_reciprocal_moment_reported_as_diverged():
    lm = compute_length_map(RECIPROCAL, 1.0, 0.0, 3)
    assert lm.qtilde[1] == 1.0
    assert lm.status[1] == DIVERGED
    assert lm.first_diverged_layer() == 1


def test_length_overflow_cap_halts_recursion():
    # identity with sw2 = 1e20 => q_l = 1e20^l crosses 1e150 at layer 8
    lm = compute_length_map(IDENTITY, 1e10, 0.0, 10)
    assert lm.status[7] == FINITE
    assert lm.status[8] == DIVERGED
    assert lm.first_diverged_layer() == 8
    assert not lm.q_finite[8]


@pytest.mark.parametrize("sw,sb,depth", [(-1.0, 0.0, 3), (1.0, -0.5, 3), (1.0, 0.0, 0)])
def test_length_map_validation(sw, sb, depth):
    with pytest.raises(ValueError):
        compute_length_map(RELU, sw, sb, depth)


def test_fixed_point_identity_map_returns_seed_image():
    # relu at sw^2 = 2 maps every q to itself; the unit-norm image is the answer
    q = length_map_fixed_point(RELU, math.sqrt(2.0), 0.0)
    assert q == pytest.approx(2.0, abs=1e-6)


def test_fixed_point_affine_contraction():
    # q -> 0.5 q + 0.25 contracts to 0.5
    q = length_map_fixed_point(IDENTITY, math.sqrt(0.5), 0.5)
    assert q == pytest.approx(0.5, abs=1e-9)


def test_fixed_point_residual_certified():
    q = length_map_fixed_point(TANH, 1.5, 0.1)
    assert q is not None
    image = 1.5**2 * gaussian_second_moment(TANH, q).value + 0.1**2
    assert abs(image - q) <= 1e-10


def test_fixed_point_divergent_moment_raises():
    with pytest.raises(DivergedError):
        length_map_fixed_point(exp_square(1.0), 0.5, 0.0)


def test_fixed_point_escaping_iterates_raise():
    with pytest.raises(DivergedError):
        length_map_fixed_point(IDENTITY, 2.0, 1.0)


def test_fixed_point_drift_returns_none():
    # q -> q + 0.01 never settles and never blows past the cap in 200 steps
    assert length_map_fixed_point(IDENTITY, 1.0, 0.1) is None


@pytest.mark.parametrize(
    "kwargs",
    [
        {"sigma_w": 0.0, "sigma_b": 0.0},
        {"sigma_w": 1.0, "sigma_b": -1.0},
        {"sigma_w": 1.0, "sigma_b": 0.0, "tol": 0.0},
        {"sigma_w": 1.0, "sigma_b": 0.0, "max_iter": 0},
    ],
)
def test_fixed_point_validation(kwargs):
    with pytest.raises(ValueError):
        length_map_fixed_point(RELU, **kwargs)
