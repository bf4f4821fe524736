import pytest

from causalnet.config import DESK_SCALE
from causalnet.synth import synth_dataset

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def small_synth():
    """3 subjects x 3 clips: cheap fixture for plumbing tests."""
    return synth_dataset(3, 3, seed=11)


@pytest.fixture(scope="session")
def synth60():
    """The 5-subject x 12-clip synthetic dataset used for desk-scale checks."""
    return synth_dataset(5, 12, seed=7)


@pytest.fixture
def tiny_config():
    return DESK_SCALE.replace(dim=8, enc_width=4, epochs=2, batch_size=4)


@pytest.fixture
def acceptance():
    def record(number, title, passed, detail=""):
        ACCEPTANCE[number] = (title, passed, detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}  {detail}")
