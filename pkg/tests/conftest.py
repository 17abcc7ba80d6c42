import pytest

from fogsim.config import preset


@pytest.fixture
def tiny():
    """Three EFNs, two CFNs, short horizon, no warm-up."""
    return preset("desk", n_efn=3, n_cfn=2, n_access=2, horizon=120, warmup_fraction=0.0, W=3)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
