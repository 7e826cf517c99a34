import pytest

from countingstars.scenario import from_dict


def small_raw(**over):
    raw = {
        "name": "small",
        "constellation": {"preset": "iridium"},
        "traffic": {"offerload": 0.5, "isl_bandwidth": 8, "n_ter": 30},
        "epoch_s": 1,
        "horizon_s": 5,
        "memory_bytes": 2048,
        "rng_seed": 3,
    }
    raw.update(over)
    return raw


@pytest.fixture
def small_scenario():
    return from_dict(small_raw())


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record(num: int, status: str, detail: str) -> None:
    ACCEPTANCE[num] = f"criterion {num:>2}: {status:<8} {detail}"
    print(ACCEPTANCE[num])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
