import json

import pytest

from equivar.potential import landau_lifshitz, zero_potential

LL_G = "(omega + lambda*cos(x))*sin(x)"

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def ll_spec(lam=1.0, omega=0.25):
    return {"g": LL_G, "params": {"lambda": lam, "omega": omega}}


@pytest.fixture(scope="session")
def ll025():
    return landau_lifshitz(1.0, 0.25)


@pytest.fixture(scope="session")
def zero():
    return zero_potential()


@pytest.fixture
def spec_file(tmp_path):
    def make(obj, name="spec.json"):
        path = tmp_path / name
        path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
        return str(path)
    return make


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
