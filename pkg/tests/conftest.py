import numpy as np
import pytest
from hypothesis import settings

from smoothretrack import EchoSequence, HyperConfig, InstrumentConfig, ParamTrack
from smoothretrack.models import WaveformModel

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def cfg():
    return InstrumentConfig()


@pytest.fixture(scope="session")
def cfg32():
    return InstrumentConfig(gates=32)


def random_instance(rng, M=6, K=32, r=2, noise=0.05):
    """Small noisy Brown problem: (seq, model, theta, mu, lam, hyper)."""
    cfg = InstrumentConfig(gates=K)
    model = WaveformModel("brown", cfg)
    theta = ParamTrack(rng.uniform(0.5, 4.0, M), rng.uniform(0.3 * K, 0.6 * K, M), rng.uniform(0.5, 2.0, M))
    mu = rng.uniform(0.0, 0.1, M)
    s = model(theta.swh, theta.tau, theta.pu)
    y = s + mu[:, None] + noise * rng.standard_normal((M, K))
    seq = EchoSequence(y, block_size=r)
    lam = rng.uniform(0.5, 2.0, (K, M // r)) * noise ** 2
    # start away from the truth so that the residual terms are not trivial
    theta_eval = ParamTrack(theta.swh * rng.uniform(0.8, 1.2, M), theta.tau + rng.normal(0, 0.5, M),
                            theta.pu * rng.uniform(0.9, 1.1, M))
    hyper = HyperConfig(a=rng.uniform(0.5, 2.0, 3), b=rng.uniform(0.1, 2.0, 3), psi2=rng.uniform(0.5, 10.0))
    return seq, model, theta_eval, mu, lam, hyper


# ------------------------------------------------------ acceptance report --

ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
