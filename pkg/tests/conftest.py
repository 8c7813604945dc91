import os

import pytest
from hypothesis import HealthCheck, settings

from cbdc import blindsig
from cbdc.drbg import HashDrbg
from cbdc.harness import World
from support import small_scenario

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def issuer_keys():
    """Three 512-bit issuer keys (denominations 1, 5, 25) of vintage 2025."""
    denoms = (1, 5, 25)
    return {d: blindsig.keygen(d, 2025, 512, 1234, denominations=denoms) for d in denoms}


@pytest.fixture
def world():
    w = World(small_scenario())
    for node in w.nodes.values():
        node.msb.submit = None  # unit tests drive the ledger by hand
    return w


@pytest.fixture
def rng():
    return HashDrbg(7, "tests")
