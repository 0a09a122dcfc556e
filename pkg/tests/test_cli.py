import json
import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from twomatrix import cli
from twomatrix.cli import Session, main
from twomatrix.model import load_model

from conftest import QUADRATIC_ONE, QUADRATIC_TWO


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(QUADRATIC_ONE))
    return str(path)


def _run(tmp_path, *argv):
    out = tmp_path / "out.json"
    code = main([*argv, "--out", str(out)])
    payload = json.loads(out.read_text()) if out.exists() else None
    return code, payload


def test_solve_writes_solution_and_manifest(tmp_path, model_file):
    code, payload = _run(tmp_path, "solve", "--model", model_file)
    assert code == 0
    assert payload["solution"]["roots"] == [[1.0, 0.0]]
    assert payload["manifest"]["command"] == "solve"
    assert payload["manifest"]["model_hash"] == payload["solution"]["model_hash"]


def test_reruns_are_byte_identical(tmp_path, model_file):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["curve", "--model", model_file, "--out", str(first)]) == 0
    assert main(["curve", "--model", model_file, "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_verify_all_checks_pass(tmp_path, model_file):
    code, payload = _run(tmp_path, "verify", "--model", model_file)
    assert code == 0
    assert payload["passed"]
    assert {c["name"] for c in payload["checks"]} >= {"bethe", "compat", "kernel", "w2_routes"}


def test_perturbed_roots_fail_verification(tmp_path, model_file):
    code, payload = _run(tmp_path, "verify", "--model", model_file, "--checks", "compat,ode", "--perturb", "0.05")
    assert code == 3
    assert not payload["passed"]


def test_unknown_check_is_a_config_error(tmp_path, model_file):
    code, _ = _run(tmp_path, "verify", "--model", model_file, "--checks", "nonsense")
    assert code == 1


def test_free_energy(tmp_path, model_file):
    code, payload = _run(tmp_path, "free-energy", "--model", model_file)
    assert code == 0
    assert payload["f0"] == pytest.approx([1 / 6, 0.0])
    assert payload["det_H"] == pytest.approx([-1.0, 0.0], abs=1e-12)


def test_correlator_evaluation(tmp_path, model_file):
    code, payload = _run(tmp_path, "correlators", "--model", model_file, "--n", "2", "--g", "0", "--eval", "x=2,xp=3")
    assert code == 0
    assert payload["evaluations"][0]["value"] == pytest.approx([0.5, 0.0])


def test_cached_solution_for_another_model_is_resolved(tmp_path, model_file, caplog):
    cache = tmp_path / "sol.json"
    assert main(["solve", "--model", model_file, "--out", str(cache)]) == 0
    other = tmp_path / "other.json"
    other.write_text(json.dumps({**QUADRATIC_ONE, "T": 2}))
    with caplog.at_level(logging.WARNING):
        code, payload = _run(tmp_path, "solve", "--model", str(other), "--solution", str(cache))
    assert code == 0
    assert "re-solving" in caplog.text
    assert payload["solution"]["model_hash"] != json.loads(cache.read_text())["solution"]["model_hash"]


def test_exit_codes_for_bad_input(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**QUADRATIC_ONE, "N": 0}))
    assert main(["solve", "--model", str(bad)]) == 1
    assert main(["solve"]) == 1
    stuck = tmp_path / "stuck.json"
    stuck.write_text(
        json.dumps({**QUADRATIC_TWO, "bethe": {"mode": "direct", "initial_guesses": [0.3, 0.7], "max_iter": 1}})
    )
    assert main(["solve", "--model", str(stuck)]) == 2


def test_numerical_failure_in_one_check_is_recorded(tmp_path, model_file, monkeypatch):
    def singular(*args, **kwargs):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setattr(cli, "verify_G", singular)
    code, payload = _run(tmp_path, "verify", "--model", model_file, "--checks", "kernel,bethe")
    assert code == 3
    records = {c["name"]: c for c in payload["checks"]}
    assert "Singular matrix" in records["kernel"]["error"]
    assert not records["kernel"]["pass"]
    assert records["bethe"]["pass"]


def test_sample_points_depend_only_on_the_check():
    first = Session(load_model(QUADRATIC_ONE))
    second = Session(load_model(QUADRATIC_ONE))
    second.point_pairs(20, "companion")
    assert_allclose(first.points(5, "loop_g0"), second.points(5, "loop_g0"))
    assert not np.allclose(first.points(5, "loop_g0"), first.points(5, "ode"))


def test_check_residuals_do_not_depend_on_the_selection(tmp_path, model_file):
    _, alone = _run(tmp_path, "verify", "--model", model_file, "--checks", "loop_g0")
    _, together = _run(tmp_path, "verify", "--model", model_file, "--checks", "companion,loop_g0")
    residual = {c["name"]: c["residual"] for c in together["checks"]}["loop_g0"]
    assert alone["checks"][0]["residual"] == residual
