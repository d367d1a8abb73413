import numpy as np
import pytest
from hypothesis import settings

from ddgame import market

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def ev_params():
    """Six-provider EV market: standardized synthetic demand, perturbed response matrix."""
    return market.default_market(n=6, rng=np.random.default_rng(0))


@pytest.fixture(scope="session")
def ev_constants(ev_params):
    mc = market.monotonicity_constants(ev_params, ev_params.B)
    return mc.alpha_conservative, mc.grad_lipschitz


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[key])
