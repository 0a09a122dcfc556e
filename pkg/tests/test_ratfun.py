import numpy as np
import pytest
from numpy.testing import assert_allclose

from twomatrix.errors import AnchorError
from twomatrix.ratfun import (
    Poly,
    PoleSum,
    PoleTensor,
    large_x_moments,
    laurent_coeffs,
    make_anchors,
    residue_pairing,
    shifted_power,
    tensor_jet,
)

ANCHORS = make_anchors([1.0, 2.0])
POINTS = [3.3, -0.7 + 0.4j, 1.5 - 2j]


# --- Polynomials ---

def test_poly_from_roots_and_degree():
    p = Poly.from_roots([1, 2])
    assert_allclose(p.coeffs, [2, -3, 1])
    assert p.degree == 2
    assert Poly().degree == -1
    assert Poly([0, 0, 0]).is_zero()


def test_poly_arithmetic_and_calculus():
    p = Poly([1, 2, 3])
    q = Poly([0, 1])
    assert (p * q).allclose(Poly([0, 1, 2, 3]))
    assert (p - p).is_zero()
    assert p.deriv().allclose(Poly([2, 6]))
    assert p.antideriv().allclose(Poly([0, 1, 1, 1]))
    assert_allclose(p.taylor(1.0, 3), [6, 8, 3, 0])


def test_poly_at_matrix():
    M = np.array([[1.0, 2.0], [0.0, 3.0]])
    p = Poly([1, 0, 1])
    assert_allclose(p.at_matrix(M), M @ M + np.eye(2))


# --- Anchors and single-variable rational functions ---

def test_colliding_anchors_are_rejected():
    with pytest.raises(AnchorError):
        make_anchors([1.0, 1.0 + 1e-12])


def test_mismatched_anchors_cannot_be_added():
    a = PoleSum(make_anchors([1.0]), {(0, 1): 1})
    b = PoleSum(make_anchors([2.0]), {(0, 1): 1})
    with pytest.raises(AnchorError):
        a + b


def test_product_of_simple_poles_is_partial_fraction():
    a = PoleSum(ANCHORS, {(0, 1): 1})
    b = PoleSum(ANCHORS, {(1, 1): 1})
    prod = a * b
    assert prod.allclose(PoleSum(ANCHORS, {(0, 1): -1, (1, 1): 1}))
    for x in POINTS:
        assert abs(prod(x) - a(x) * b(x)) < 1e-12


def test_product_with_polynomial_keeps_polynomial_part():
    f = PoleSum(ANCHORS, {(0, 1): 1})
    prod = f * Poly([0, 1])
    assert prod.poly.allclose(Poly([1]))
    assert abs(prod.terms[(0, 1)] - 1) < 1e-12


def test_product_of_higher_poles_matches_pointwise():
    a = PoleSum(ANCHORS, {(0, 2): 1.5, (1, 1): -2j}, Poly([1, 1]))
    b = PoleSum(ANCHORS, {(0, 1): 0.5, (1, 3): 1})
    prod = a * b
    for x in POINTS:
        assert abs(prod(x) - a(x) * b(x)) < 1e-10


def test_derivative_matches_finite_difference():
    f = PoleSum(ANCHORS, {(0, 2): 1.0, (1, 1): 3.0}, Poly([0, 0, 1]))
    h = 1e-6
    for x in POINTS:
        fd = (f(x + h) - f(x - h)) / (2 * h)
        assert abs(f.derivative()(x) - fd) < 1e-6


def test_laurent_coefficients_at_other_anchor():
    f = PoleSum(ANCHORS, {(0, 1): 2.0, (1, 1): 1.0})
    lau = laurent_coeffs(f, 0, 3)
    assert_allclose(lau.principal, [2.0])
    # 1/(x - 2) = -sum h**m around x = 1
    assert_allclose(lau.regular, [-1, -1, -1, -1])
    assert shifted_power(1, 2, -1.0) == pytest.approx(-1.0)


def test_large_x_moments():
    f = PoleSum(ANCHORS, {(1, 1): 1.0, (0, 2): 1.0})
    # 1/(x-2) -> 2**k ; 1/(x-1)**2 -> k
    assert_allclose(large_x_moments(f, 4), [1, 2 + 1, 4 + 2, 8 + 3, 16 + 4])
    with pytest.raises(ValueError):
        large_x_moments(PoleSum(ANCHORS, {}, Poly([1])), 2)


# --- Tensors, jets and residues ---

def test_tensor_evaluation_and_permutation():
    t = PoleTensor(ANCHORS, 2, {((0, 2), (1, 1)): 1.0})
    x, y = 3.0, -1.0
    assert abs(t(x, y) - 1 / ((x - 1) ** 2 * (y - 2))) < 1e-14
    swapped = t.permuted((1, 0))
    assert abs(swapped(y, x) - t(x, y)) < 1e-14
    assert t.symmetry_defect() == pytest.approx(1.0)
    sym = t + swapped
    assert sym.symmetry_defect() == 0.0


def test_tensor_moments_in_one_slot():
    t = PoleTensor(ANCHORS, 2, {((0, 1), (1, 2)): 1.0})
    moments = t.moments(1, 3)
    assert moments[0].terms == {}
    assert_allclose([m(3.0) for m in moments[1:]], [0.5 * k * 2 ** (k - 1) for k in (1, 2, 3)])


def test_tensor_jet_with_two_slots_at_the_anchor():
    # 1/((x - 1)**2 (x - 2)) = -h**-2 - h**-1 - ... at x = 1
    t = PoleTensor(ANCHORS, 2, {((0, 2), (1, 1)): 1.0})
    jet = tensor_jet(t, 0, -1, x_slots=(0, 1), labels=())
    terms = jet.principal_terms()
    assert terms == pytest.approx({((0, 2),): -1.0, ((0, 1),): -1.0})


def test_jet_product_principal_part():
    f = PoleSum(ANCHORS, {(0, 1): 1.0, (1, 1): 1.0})
    jet = tensor_jet(f.as_tensor(), 0, 1, labels=())
    assert jet.series[-1][()] == pytest.approx(1.0)
    assert jet.series[0][()] == pytest.approx(-1.0)
    half = tensor_jet(f.as_tensor(), 0, 0, labels=())
    sq = half * half
    # (1/h - 1 - h)**2 has 1/h**2 - 2/h as principal part
    assert sq.principal_terms() == pytest.approx({((0, 2),): 1.0, ((0, 1),): -2.0})


def test_residue_pairing_with_constant_kernel():
    one = PoleSum(ANCHORS, {(1, 1): 1.0})
    zero = PoleSum(ANCHORS)
    kderivs = [[[one, zero], [zero, one]], [[zero, zero], [zero, zero]]]
    v = [PoleSum(ANCHORS, {(0, 1): 3.0, (1, 1): 7.0}), PoleSum(ANCHORS, {(0, 2): 5.0})]
    out = residue_pairing(kderivs, v, 0)
    assert out[0].allclose(one * 3.0)
    assert out[1].allclose(zero)


def test_coincident_anchors_are_rejected():
    with pytest.raises(AnchorError):
        PoleSum([1.0, 1.0 + 1e-12], {})
    with pytest.raises(AnchorError):
        PoleTensor([0.0, 0.0], 1)


def test_raw_anchor_lists_are_frozen():
    f = PoleSum([1.0, 2.0], {(0, 1): 1.0, (1, 2): 1.0})
    assert not f.anchors.flags.writeable
    assert f(3.0) == pytest.approx(0.5 + 1.0)
    g = PoleSum(f.anchors, {(1, 1): 2.0})
    assert (f + g)(3.0) == pytest.approx(0.5 + 1.0 + 2.0)
