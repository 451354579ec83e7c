import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from setclass.setdata import ObservationSet, SetCollection

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_collection(rng, p=5, sizes=(8, 9, 10, 11), labels=(1, 1, 2, 2)):
    sets = [ObservationSet(rng.standard_normal((p, n)), k, f"s{i}") for i, (n, k) in enumerate(zip(sizes, labels))]
    return SetCollection(tuple(sets), max(labels))


def random_basis(rng, p, r):
    Q, _ = np.linalg.qr(rng.standard_normal((p, r)))
    return Q


ACCEPTANCE = []


@pytest.fixture
def report(capsys):
    """Record and print one PASS/FAIL line per acceptance criterion."""
    def _report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
