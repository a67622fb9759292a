import numpy as np
import pytest

from qmarginal.catalog import make_ghz, make_prop2, make_rho_q, make_sigma


@pytest.fixture(scope="session")
def ghz():
    return make_ghz()


@pytest.fixture(scope="session")
def sigma():
    return make_sigma()


@pytest.fixture(scope="session")
def omega():
    return make_rho_q(1 / np.sqrt(3))


@pytest.fixture(scope="session")
def prop2():
    return make_prop2(0.5)


@pytest.fixture(scope="session")
def sigma_gme(sigma):
    from qmarginal.gme import solve_pptmix_marginals

    return solve_pptmix_marginals(sigma.triple, known_state=sigma.state)


@pytest.fixture(scope="session")
def sigma_scan(sigma):
    from qmarginal.gme import robustness_scan

    return robustness_scan(sigma.state)


def pytest_collection_modifyitems(config, items):
    items.sort(key=lambda item: item.get_closest_marker("last") is not None)


def pytest_terminal_summary(terminalreporter):
    from _support import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
