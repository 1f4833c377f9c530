import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from execguard.ots import MerkleKeys, OtsParams  # noqa: E402
from execguard.sim import FIXTURES_ROOT  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def fixtures_root() -> Path:
    return FIXTURES_ROOT


@pytest.fixture(scope="session")
def small_keys() -> MerkleKeys:
    """K=16, N=8: fast enough to sign thousands of commands."""
    keys = MerkleKeys(b"test-seed-16", 8, OtsParams(16))
    keys.root
    return keys


@pytest.fixture(scope="session")
def keys_k64() -> MerkleKeys:
    keys = MerkleKeys(b"test-seed-64", 1024, OtsParams(64))
    keys.root
    return keys


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance")
        for line in RESULTS:
            terminalreporter.write_line(line)
