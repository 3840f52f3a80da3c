import numpy as np
import pytest

from pdmp_moments import distributions as dists
from pdmp_moments.model import GeneralResetFamily, LinearDynamics, PDMPModel, PoissonResetFamily

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def two_state_model(dist=None, noise=True):
    """Two coupled species with a Poisson burst family and a noisy renewal split."""
    dist = dist or dists.Gamma(4.0, 0.25)
    general = GeneralResetFamily(
        dist=dist,
        J=[[0.5, 0.1], [0.0, 0.6]],
        R=[0.2, 0.0],
        Q=[[0.1, 0.0], [0.05, 0.1]] if noise else None,
        B=[[0.1, 0.0], [0.0, 0.2]] if noise else None,
        C=[0.5, 0.3] if noise else None,
        D=[[0.3, 0.05], [0.05, 0.2]] if noise else None,
    )
    return PDMPModel(
        dynamics=LinearDynamics(a_hat=[1.0, 0.5], A=[[-0.3, 0.0], [0.4, -0.2]]),
        poisson=[PoissonResetFamily(rate=2.0, J=np.eye(2), R_mean=[1.0, 0.0], R_second=[[2.0, 0.0], [0.0, 0.0]])],
        general=general,
    )


@pytest.fixture
def two_state():
    return two_state_model()
