import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def random_unit(rng, d):
    return unit(rng.standard_normal(d))


ACCEPTANCE = []


def record(n, ok, detail):
    """Remember one acceptance line; printed in the terminal summary."""
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[1].rstrip(":").split(".")[0]), s)):
            terminalreporter.write_line(line)
