import json
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

ROOT = HERE.parent
CONFIGS = ROOT / "configs"

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def frozen():
    return json.loads((HERE / "frozen_values.json").read_text())


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance criteria: ``acceptance(n, ok, detail)``."""

    def record(n, ok, detail=""):
        prev = _ACCEPTANCE.get(n)
        ok = bool(ok) and (prev is None or prev[0])
        _ACCEPTANCE[n] = (ok, detail if prev is None else prev[1] + "; " + detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 12):
        ok, detail = _ACCEPTANCE.get(n, (False, "not run or errored before recording"))
        terminalreporter.write_line("criterion %2d: %s  %s" % (n, "PASS" if ok else "FAIL", detail))
