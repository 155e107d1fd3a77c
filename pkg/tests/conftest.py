import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def section3_run():
    """Full run at eps = 0.02 from the default preset until Phase IV has been tracked."""
    import time

    from bimono.bdsim import initial_state, run_full

    eps = 0.02
    params, state = initial_state("section3", epsilon=eps)
    t0 = time.perf_counter()
    run = run_full(params, state, phase4_duration=2.0 / eps ** 3)
    run.wall_time = time.perf_counter() - t0
    return run


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
