import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from twomatrix.errors import ConfigError
from twomatrix.model import eval_V_derivs, load_model, perturb_model

from conftest import QUADRATIC_ONE


def test_potentials_from_sympy_strings():
    model = load_model({"V1_prime": "x", "V2_prime": "y**2 - 2*y", "T": 0.5, "N": 3})
    assert_allclose(model.t, [0, 1])
    assert_allclose(model.ttilde, [0, -2, 1])
    assert (model.d1, model.d2) == (1, 2)
    assert model.g == pytest.approx(0.5 / 3)


def test_complex_coefficients_as_pairs():
    model = load_model({"V1_prime": [[0, 0], [1, 0.5]], "V2_prime": [0, 0, 1], "T": 1, "N": 1})
    assert model.t[1] == 1 + 0.5j


def test_load_from_file_and_text(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(QUADRATIC_ONE))
    assert load_model(str(path)).digest() == load_model(json.dumps(QUADRATIC_ONE)).digest()


@pytest.mark.parametrize(
    "changes",
    [
        {"N": 0},
        {"N": 1.5},
        {"T": -1},
        {"V2_prime": [0, 0, 0]},
        {"V2_prime": [3]},
        {"V1_prime": "x + z"},
        {"colour": "blue"},
        {"bethe": {"root_selection": [0, 1]}},
        {"bethe": {"mode": "shooting"}},
        {"bethe": {"tol": -1}},
    ],
)
def test_invalid_models_are_config_errors(changes):
    with pytest.raises(ConfigError):
        load_model({**QUADRATIC_ONE, **changes})


def test_unreadable_sources(tmp_path):
    with pytest.raises(ConfigError):
        load_model(str(tmp_path / "missing.json"))
    with pytest.raises(ConfigError):
        load_model("{not json")


def test_digest_tracks_every_field():
    base = load_model(QUADRATIC_ONE)
    assert base.digest() == load_model(dict(QUADRATIC_ONE)).digest()
    assert base.digest() != load_model({**QUADRATIC_ONE, "T": 2}).digest()
    assert base.digest() != base.with_bethe(steps=7).digest()


def test_potential_derivatives():
    model = load_model(QUADRATIC_ONE)
    assert_allclose(eval_V_derivs(model, 1, 2.0, 2), [2, 2, 1])
    assert_allclose(eval_V_derivs(model, 2, 3.0, 3), [9, 9, 6, 2])


def test_perturb_model_shifts_one_coefficient():
    model = load_model(QUADRATIC_ONE)
    shifted = perturb_model(model, 2, 4, 0.25)
    assert_allclose(shifted.ttilde, [0, 0, 1, 0, 0.25])
    assert np.array_equal(shifted.t, model.t)
