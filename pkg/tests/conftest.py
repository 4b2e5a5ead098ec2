import time
from pathlib import Path

import numpy as np
import pytest

from quartershot.assets import make_bust_field
from quartershot.body import generate_standin_template

DATA_DIR = Path(__file__).parent / "data"

_session_start = time.perf_counter()
_acceptance_results: list[tuple[str, str]] = []


@pytest.fixture(scope="session")
def template():
    """Low-detail stand-in template shared across tests."""
    return generate_standin_template(seed=0, detail_level=1)


@pytest.fixture(scope="session")
def bust_field():
    return make_bust_field()


@pytest.fixture()
def rng():
    return np.random.default_rng(42)


def one_bone_template(template):
    """Template clone with every vertex rigidly skinned to the neck joint."""
    from quartershot.body import RiggedTemplate

    weights = np.zeros_like(template.weights)
    weights[:, template.joint_index("neck")] = 1.0
    return RiggedTemplate(template.mesh, template.joint_names, template.joint_positions,
                          template.joint_parents, weights)


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance_results.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    elapsed = time.perf_counter() - _session_start
    if _acceptance_results:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, outcome in _acceptance_results:
            terminalreporter.write_line(f"{outcome.upper():>6}  {name}")
        terminalreporter.write_line(f"suite wall time: {elapsed:.1f} s")
