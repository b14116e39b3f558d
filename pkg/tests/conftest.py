import numpy as np
import pytest

from v2gsiting.formulation import check_solution_feasibility
from v2gsiting.scenarios import assign_renewables, sample_scenario_set
from v2gsiting.toys import TOY_NAMES, toy_instance


def toy_case(name, level=0.5, n=5, seed=0):
    inst = toy_instance(name)
    ss = sample_scenario_set(inst, assign_renewables(inst.generators, level, seed), n, seed)
    return inst, ss


def assert_feasible(instance, scenario_set, solution, config=None, tol=1e-6):
    """Every solver output in the suite goes through this check."""
    violations = check_solution_feasibility(instance, scenario_set, solution, tol=tol, config=config)
    assert violations == [], [str(v) for v in violations[:5]]


@pytest.fixture(params=TOY_NAMES)
def toy(request):
    return toy_case(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
