import os

import numpy as np
import pytest
from hypothesis import settings

from horseshoes import dynamics, cocycle
from horseshoes.pipeline import load_config, run_extract, run_nest

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")

# pass/fail lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def config_path(name):
    return os.path.join(CONFIGS, name)


@pytest.fixture(scope="session")
def cat():
    return dynamics.cat_map()


@pytest.fixture(scope="session")
def cat_orbit(cat):
    return dynamics.sample_orbit(cat, 11, 200_000)


@pytest.fixture(scope="session")
def cat_cocycle(cat_orbit):
    return cocycle.orbit_cocycle(cat_orbit)


@pytest.fixture(scope="session")
def pert_orbit():
    return dynamics.sample_orbit(dynamics.perturbed_cat_map(0.02), 5, 50_000)


@pytest.fixture(scope="session")
def extract_report():
    """The cat-map extraction at e = 0.5, r = 0.1, delta = 0.15."""
    return run_extract(load_config(config_path("cat_extract.yaml")))


@pytest.fixture(scope="session")
def nest_report():
    return run_nest(load_config(config_path("cat_nest.yaml")))


@pytest.fixture(scope="session")
def small_report():
    return run_nest(load_config(config_path("cat_small.yaml")))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
