import pytest

from formsynth import scenarios
from formsynth.core import Mode
from formsynth.pipeline import run_problem

CRITERIA: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, tolerance): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title, tolerance = mark.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        CRITERIA[number] = f"[{status}] #{number:<2} {title} (tolerance: {tolerance})"


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])


def run_world(world, mode=Mode.AGENTIC, budgets=None):
    """Run every problem of `world` on one shared workflow; trajectories keyed by problem id."""
    workflow = world.workflow(budgets)
    return {p.id: run_problem(workflow, p, mode) for p in world.problems}


@pytest.fixture
def golden_runs():
    return run_world(scenarios.golden())


@pytest.fixture
def delta_run():
    return run_world(scenarios.delta())["delta"]
