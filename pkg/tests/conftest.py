import shutil

import pytest

from helpers import EXAMPLE_DIR


@pytest.fixture
def example_dir(tmp_path):
    """A writable copy of the six-loan worked example."""
    dest = tmp_path / "example"
    shutil.copytree(EXAMPLE_DIR, dest)
    return dest


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
