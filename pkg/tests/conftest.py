import pytest

from twomatrix.cli import Session
from twomatrix.model import load_model

# V1'(x) = x, V2'(y) = y**2 with one root: s = 1, B = 1, every quantity known in closed form.
QUADRATIC_ONE = {"V1_prime": [0, 1], "V2_prime": [0, 0, 1], "T": 1, "N": 1, "bethe": {"root_selection": [1]}}
QUADRATIC_TWO = {"V1_prime": [0, 1], "V2_prime": [0, 0, 1], "T": 0.1, "N": 2, "bethe": {"root_selection": [0, 1]}}
CUBIC = {"V1_prime": [0, 1], "V2_prime": [0, 0, 0, 1], "N": 2, "bethe": {"root_selection": [0, 2]}}
# V2'(y) = y**3 with all three decoupled roots -1, 0, 1 selected.
CUBIC_THREE = {"V1_prime": [0, 1], "V2_prime": [0, 0, 0, 1], "T": 0.3, "N": 3, "bethe": {"root_selection": [0, 1, 2]}}
# V2'(y) = y**2 + y**3, one root at the golden-ratio conjugate.
MIXED_ONE = {"V1_prime": "x", "V2_prime": "y**2 + y**3", "T": 1, "N": 1, "bethe": {"root_selection": [2]}}


def session_for(raw):
    return Session(load_model(raw))


@pytest.fixture(scope="session")
def quadratic_one():
    return session_for(QUADRATIC_ONE)


@pytest.fixture(scope="session")
def quadratic_two():
    return session_for(QUADRATIC_TWO)


@pytest.fixture(scope="session")
def cubic_half():
    """T/N = 1/2, roots -+(1 + sqrt 3)/2."""
    return session_for({**CUBIC, "T": 1})


@pytest.fixture(scope="session")
def cubic_one():
    """T/N = 1, roots -+(1 + sqrt 5)/2."""
    return session_for({**CUBIC, "T": 2})


@pytest.fixture(scope="session")
def cubic_three():
    return session_for(CUBIC_THREE)


@pytest.fixture(scope="session")
def mixed_one():
    return session_for(MIXED_ONE)


@pytest.fixture(params=["quadratic_one", "quadratic_two", "cubic_half", "cubic_one"])
def any_model(request):
    return request.getfixturevalue(request.param)


@pytest.fixture(params=["quadratic_one", "cubic_one"])
def unit_ratio(request):
    """Models with T/N = 1."""
    return request.getfixturevalue(request.param)
