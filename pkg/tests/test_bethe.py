import numpy as np
import pytest
from numpy.testing import assert_allclose

from twomatrix import bethe
from twomatrix.bethe import (
    bethe_residual,
    b_matrix,
    componentwise_residual,
    decoupled_roots,
    newton,
    solve_bethe,
)
from twomatrix.errors import ConfigError, SolverError
from twomatrix.model import load_model

from conftest import QUADRATIC_ONE, QUADRATIC_TWO


def test_decoupled_roots_sorted():
    model = load_model({"V1_prime": "x", "V2_prime": "y**2 + 1", "T": 1, "N": 1})
    r = np.sqrt(3) / 2
    assert_allclose(decoupled_roots(model), [0.5 - 1j * r, 0.5 + 1j * r], atol=1e-12)


def test_single_root_model(quadratic_one):
    sol = quadratic_one.sol
    assert_allclose(sol.s, [1.0], atol=1e-12)
    assert_allclose(sol.B, [[1.0]], atol=1e-12)
    assert_allclose(sol.u, [[1.0], [1.0], [0.0]], atol=1e-12)
    assert sol.model_hash == quadratic_one.model.digest()


@pytest.mark.parametrize("fixture, a", [("cubic_half", (1 + np.sqrt(3)) / 2), ("cubic_one", (1 + np.sqrt(5)) / 2)])
def test_symmetric_cubic_roots(request, fixture, a):
    sol = request.getfixturevalue(fixture).sol
    assert_allclose(sol.s, [-a, a], atol=1e-9)


def test_residuals_vanish(any_model):
    sol, model = any_model.sol, any_model.model
    assert np.max(np.abs(bethe_residual(sol.s, model))) < 1e-10
    assert componentwise_residual(sol, model) < 1e-8
    assert_allclose(b_matrix(sol.s, model.V1p, model.g), sol.B)


def test_homotopy_trace_reaches_target(quadratic_two):
    trace = quadratic_two.sol.trace
    assert trace[-1]["T"] == pytest.approx(0.1)
    assert all(step["residual"] < 1e-10 for step in trace)


def test_direct_mode_failure_is_solver_error():
    model = load_model(
        {**QUADRATIC_TWO, "T": 1, "bethe": {"mode": "direct", "initial_guesses": [0.3, 0.7], "max_iter": 1}}
    )
    with pytest.raises(SolverError):
        solve_bethe(model)


def test_degenerate_decoupled_equation():
    model = load_model({"V1_prime": "x", "V2_prime": "y", "T": 1, "N": 1, "bethe": {"root_selection": [0]}})
    with pytest.raises(ConfigError):
        solve_bethe(model)


def test_branch_choice_is_never_automatic():
    model = load_model({"V1_prime": "x", "V2_prime": "y**2", "T": 1, "N": 1})
    with pytest.raises(ConfigError):
        solve_bethe(model)


def test_direct_mode_from_converged_roots(cubic_half):
    sol = cubic_half.sol
    model = cubic_half.model.with_bethe(mode="direct", initial_guesses=tuple(sol.s + 1e-3))
    again = solve_bethe(model)
    assert_allclose(again.s, sol.s, atol=1e-10)


def test_leading_data_single_root(quadratic_one):
    leading = quadratic_one.leading
    assert_allclose(leading.P0, [[1.0, 1.0]])
    assert leading.W1.terms == pytest.approx({(0, 1): 1.0})
    assert_allclose(leading.psi.coeffs, [-1.0, 1.0])
    assert leading.U0_at(5).terms == {}


def test_three_roots_from_the_full_decoupled_set(cubic_three):
    s = cubic_three
    assert_allclose(decoupled_roots(s.model), [-1.0, 0.0, 1.0], atol=1e-12)
    sol = s.sol
    assert sol.trace[-1]["T"] == pytest.approx(0.3)
    assert sol.residual < 1e-10
    assert componentwise_residual(sol, s.model) < 1e-9
    roots = np.sort_complex(sol.s)
    # V1' and V2' are odd, so the branch through 0 stays symmetric
    assert abs(roots[1]) < 1e-8
    assert abs(roots[0] + roots[2]) < 1e-8


def test_failed_steps_only_count_against_their_own_step(monkeypatch):
    calls = []

    def flaky(s, model, T, *args):
        calls.append(T)
        if len(calls) % 2 == 1:
            raise SolverError("forced failure")
        return newton(s, model, T, *args)

    monkeypatch.setattr(bethe, "newton", flaky)
    model = load_model({**QUADRATIC_ONE, "bethe": {"root_selection": [1], "steps": 4, "max_halvings": 1}})
    sol = solve_bethe(model)
    assert_allclose(sol.s, [1.0], atol=1e-10)
    assert len(calls) > 4


def test_homotopy_gives_up_below_the_smallest_step(monkeypatch):
    def stuck(s, model, T, *args):
        raise SolverError("forced failure")

    monkeypatch.setattr(bethe, "newton", stuck)
    model = load_model({**QUADRATIC_ONE, "bethe": {"root_selection": [1], "max_halvings": 3}})
    with pytest.raises(SolverError, match="stalled"):
        solve_bethe(model)
