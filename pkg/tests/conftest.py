import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance verdict lines, printed once at the end of the session
VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(number: int, title: str, passed: bool, detail: str):
        line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        VERDICTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("FRONTLAB_OUTPUT_ROOT", str(tmp_path / "runs"))
    return tmp_path / "runs"
