"""Shared fixtures and the acceptance summary hook.

Meshes and assembled systems are session-scoped: they are immutable and
every consumer treats them read-only, so sharing them keeps the suite
fast without coupling tests.
"""

import numpy as np
import pytest

from steklov_certify import assemble_system, uniform_lshape_mesh, uniform_square_mesh

# Populated by tests/test_acceptance.py: criterion number -> dict with
# "title", "passed", "checks" (list of (name, ok, detail)).
ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def square4():
    return uniform_square_mesh(4)


@pytest.fixture(scope="session")
def square2():
    return uniform_square_mesh(2)


@pytest.fixture(scope="session")
def lshape2():
    return uniform_lshape_mesh(2)


@pytest.fixture(scope="session")
def system_square2(square2):
    return assemble_system(square2)


@pytest.fixture(scope="session")
def system_square4(square4):
    return assemble_system(square4)


@pytest.fixture(scope="session")
def system_lshape2(lshape2):
    return assemble_system(lshape2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        entry = ACCEPTANCE_RESULTS[number]
        checks = entry["checks"]
        failed = [c for c in checks if not c[1]]
        status = "PASS" if not failed else "FAIL"
        line = (
            f"criterion {number} ({entry['title']}): {status} "
            f"[{len(checks) - len(failed)}/{len(checks)} checks]"
        )
        if failed:
            line += " failing: " + "; ".join(f"{name}: {detail}" for name, _, detail in failed)
        terminalreporter.write_line(line)
