import numpy as np
import pytest
from hypothesis import settings

from cellspan.config import demo_config_path, parse_config

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def demo_cfg():
    return parse_config(demo_config_path())


@pytest.fixture(scope="session")
def demo_traj(demo_cfg):
    from cellspan.parabolic import simulate

    return simulate(demo_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one pass/fail line per acceptance criterion for the final summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
