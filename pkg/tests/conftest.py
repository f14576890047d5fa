import pytest

from sdsforge import orbit_table, subgroup_closure, sym_class_table


@pytest.fixture(scope="session")
def group213():
    H = subgroup_closure(213, [37])
    return H, orbit_table(H), sym_class_table(H)


@pytest.fixture(scope="session")
def group251():
    H = subgroup_closure(251, [20])
    return H, orbit_table(H), sym_class_table(H)


@pytest.fixture(scope="session")
def group631():
    H = subgroup_closure(631, [8])
    return H, orbit_table(H), sym_class_table(H)


# criterion number -> list of (status, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[str, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        for status, detail in ACCEPTANCE[number]:
            terminalreporter.write_line(f"criterion {number}: {status} - {detail}")
