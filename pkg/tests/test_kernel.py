import numpy as np
import pytest
from numpy.testing import assert_allclose

from twomatrix.bethe import BetheSolution, b_matrix, compute_u
from twomatrix.errors import VerificationError
from twomatrix.kernel import K_derivatives, build_blocks, compat_check, solve_K, verify_G


def _terms(matrix):
    return [[f.terms for f in row] for row in matrix]


def test_single_root_linear_system(quadratic_one):
    s = quadratic_one
    blocks, M = build_blocks(s.sol, s.model)
    assert_allclose(M, [[-1, 1], [0, -1]])
    assert_allclose(s.table.Minv, [[-1, -1], [0, -1]], atol=1e-12)
    assert len(blocks) == 2


def test_single_root_kernel_jets(quadratic_one):
    table = quadratic_one.table
    K0 = _terms(table.matrix(0, 0))
    assert K0[0][0] == pytest.approx({(0, 1): -1.0, (0, 2): -1.0})
    assert K0[0][1] == pytest.approx({(0, 2): -1.0})
    assert K0[1][0] == pytest.approx({(0, 2): -1.0})
    assert K0[1][1] == pytest.approx({(0, 2): -1.0})
    K1 = _terms(table.matrix(0, 1))
    assert K1[0] == [{}, {}]
    assert K1[1][0] == pytest.approx({(0, 1): 1.0})
    assert K1[1][1] == pytest.approx({(0, 1): 1.0})
    K2 = _terms(table.matrix(0, 2))
    assert K2[0][0] == pytest.approx({(0, 1): 4.0})
    assert K2[0][1] == pytest.approx({(0, 1): 2.0, (0, 2): 2.0})
    assert K2[1] == [{}, {}]


def test_inverse_matches_system(any_model):
    _, M = build_blocks(any_model.sol, any_model.model)
    assert_allclose(any_model.table.Minv @ M, np.eye(M.shape[0]), atol=1e-9)


def test_laurent_relations_hold(any_model):
    assert verify_G(any_model.table) < 1e-8


def test_compatibility_identity(any_model):
    assert compat_check(any_model.sol, any_model.model) < 1e-9 * any_model.sol.scale**any_model.model.d2


def test_compatibility_fails_off_shell(cubic_half):
    model = cubic_half.model
    s = cubic_half.sol.s + 0.05
    sol = BetheSolution(s=s, B=b_matrix(s, model.V1p, model.g), u=cubic_half.sol.u, residual=np.nan)
    sol.u = compute_u(sol, model, check=False)
    with pytest.raises(VerificationError):
        compat_check(sol, model)


def test_jets_grow_on_demand(cubic_one):
    table = solve_K(cubic_one.sol, cubic_one.model)
    assert table.depth == 0
    K_derivatives(cubic_one.sol, cubic_one.model, table, M=4)
    assert table.depth == 4
    assert len(table.kderivs(1, 3)) == 4
    with pytest.raises(ValueError):
        K_derivatives(cubic_one.sol, cubic_one.model, table, M=0)


def test_kernel_record_shapes(quadratic_two):
    rec = quadratic_two.table.to_record()
    assert rec["depth"] == quadratic_two.table.depth
    assert len(rec["roots"]) == 2


def test_derivatives_need_the_table_of_the_same_solution(cubic_half, cubic_one):
    with pytest.raises(ValueError, match="another solution"):
        K_derivatives(cubic_one.sol, cubic_one.model, cubic_half.table)
