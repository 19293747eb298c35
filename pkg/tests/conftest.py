import dataclasses

import numpy as np
import pytest

from esnmpc import esn
from esnmpc.experiment import ExperimentConfig, collect_phase, run_pipeline
from esnmpc.plant import ResidualSpec

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def benchmark_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def nominal_plant_config():
    return ExperimentConfig(residual=ResidualSpec(kind="none"))


@pytest.fixture(scope="session")
def small_config():
    """Benchmark loop with a 60-node reservoir for fast pipeline tests."""
    base = ExperimentConfig()
    return dataclasses.replace(base, esn=dataclasses.replace(base.esn, reservoir_size=60))


@pytest.fixture(scope="session")
def benchmark_phase1(benchmark_config):
    return collect_phase(benchmark_config)


@pytest.fixture(scope="session")
def benchmark_base_weights(benchmark_config):
    return esn.init(benchmark_config.esn_config)


@pytest.fixture(scope="session")
def benchmark_pipeline(benchmark_config):
    return run_pipeline(benchmark_config)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
