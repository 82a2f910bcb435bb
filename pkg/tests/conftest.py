import numpy as np
import pytest

from robustpath import synthetic
from robustpath.model import DemandMatrix
from robustpath.simulator import compile_network
from robustpath.uncertainty import fit, generate_synthetic_samples


@pytest.fixture(scope="session")
def disruption():
    """(scenario, incident, duration scenarios, demand file) of the bundled case."""
    return synthetic.load_disruption()


@pytest.fixture(scope="session")
def disruption_net(disruption):
    scenario, incident, _, _ = disruption
    return compile_network(scenario, incident)


@pytest.fixture(scope="session")
def fitted_model(disruption):
    _, _, _, dem = disruption
    return fit(generate_synthetic_samples(dem.baseline_days, 0.1, 0.3, seed=11), rho=0.0, Gamma=1.1)


@pytest.fixture(scope="session")
def nominal_demand(disruption, fitted_model):
    return DemandMatrix.from_vector(fitted_model.d_bar, disruption[0].index)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
