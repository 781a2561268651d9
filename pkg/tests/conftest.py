import pathlib

import pytest

from mfsoc import ProblemSpec
from mfsoc.riccati import solve_are, solve_finite_limit

PROBLEMS = pathlib.Path(__file__).resolve().parent.parent / "problems"


def load_problem(name):
    return ProblemSpec.load(PROBLEMS / f"{name}.json")


@pytest.fixture(scope="session")
def spec_example1():
    return load_problem("example1")


@pytest.fixture(scope="session")
def spec_wellposed():
    return load_problem("wellposed")


@pytest.fixture(scope="session")
def spec_sec6():
    return load_problem("sec6")


@pytest.fixture(scope="session")
def spec_sec6_finite():
    return load_problem("sec6_finite")


@pytest.fixture(scope="session")
def sol_wellposed(spec_wellposed):
    # shared across tests: the full infinite-horizon solve is the expensive part
    return solve_are(spec_wellposed, t_sim=15.0)


@pytest.fixture(scope="session")
def sol_sec6_finite(spec_sec6_finite):
    return solve_finite_limit(spec_sec6_finite)
