import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dl0cs.network import WeightMatrices, averaging_weights, metropolis_weights, path_graph
from dl0cs.signal import make_instance, partition_uniform

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_problem():
    inst = make_instance(40, 20, 3, 1e-3, 11)
    return inst, partition_uniform(inst, 3)


@pytest.fixture
def path3():
    topo = path_graph(3)
    return topo, metropolis_weights(topo), averaging_weights(topo)


def atc_weights(s, a):
    return WeightMatrices.for_variant("ATC", s, a)


def scalar_weights():
    one = np.ones((1, 1))
    return WeightMatrices(one, one, one)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
