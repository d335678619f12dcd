from pathlib import Path

import pytest

from consensus_density import ClusterEnsemble

ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = ROOT / "data"
CONFIG_DIR = ROOT / "configs"

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def E0():
    return ClusterEnsemble.from_labels([[0, 0, 1, 1], [0, 0, 1, 1]])


@pytest.fixture
def E1():
    return ClusterEnsemble.from_labels([[0, 0, 1], [0, 1, 0]])


def random_ensemble(rng, n, p, kmax=None):
    kmax = kmax or max(2, n // 2)
    out = []
    for _ in range(p):
        k = int(rng.integers(1, min(kmax, n) + 1))
        out.append(rng.integers(0, k, size=n))
    return ClusterEnsemble.from_labels(out)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
