import json

import numpy as np
import pytest

from modresp.capricep import CapricepSet
from modresp.pipeline import RunConfig, build_test_system, load_or_make_set

SMALL_CANDIDATES = 16


def _cached_system(pytestconfig, config: RunConfig):
    cache = pytestconfig.cache.mkdir("modresp-sets")
    cset = load_or_make_set(config, cache_dir=cache)
    return build_test_system(config, cset=cset)


@pytest.fixture(scope="session")
def small_config():
    return RunConfig(num_candidates=SMALL_CANDIDATES)


@pytest.fixture(scope="session")
def small_system(pytestconfig, small_config):
    """Full-length test system from a 16-candidate set (fast, cached)."""
    return _cached_system(pytestconfig, small_config)


@pytest.fixture(scope="session")
def default_system(pytestconfig):
    """Test system with every default, including 1000 candidates (cached)."""
    return _cached_system(pytestconfig, RunConfig())


@pytest.fixture(scope="session")
def small_set_path(tmp_path_factory, small_system):
    path = tmp_path_factory.mktemp("set") / "capricep_set.json"
    path.write_text(small_system.cset.to_json())
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict[int, str] = {}


def report_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
