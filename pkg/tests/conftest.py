import numpy as np
import pytest

# (criterion, passed, detail) collected by the acceptance module
VERDICTS = []


@pytest.fixture
def verdict():
    def record(name, passed, detail=""):
        VERDICTS.append((name, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        return passed
    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(VERDICTS, key=lambda v: int(v[0].split()[0][1:])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  ({detail})")
