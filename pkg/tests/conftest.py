import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "proftest",
    deadline=None,
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("proftest")

ACCEPTANCE_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption(
        "--full-scale",
        action="store_true",
        default=False,
        help="run the Monte Carlo acceptance criteria with N=10000 and the tight tolerance",
    )


@pytest.fixture(scope="session")
def full_scale(request) -> bool:
    return bool(request.config.getoption("--full-scale"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
