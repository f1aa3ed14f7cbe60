import numpy as np
import pytest

from hybridheat.geometry import UnitCellSpec, build_pack_layout, build_unit_cell
from hybridheat.physics import ReferenceValues, ScenarioConfig, dimensionless_groups, pi_coefficients


@pytest.fixture(scope="session")
def geom():
    return build_unit_cell(UnitCellSpec())


@pytest.fixture(scope="session")
def layout(geom):
    return build_pack_layout(geom, 20, 1)


@pytest.fixture(scope="session")
def params():
    return pi_coefficients(ReferenceValues())


@pytest.fixture(scope="session")
def scenario():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def groups(layout, scenario):
    return dimensionless_groups(ReferenceValues(), layout, scenario)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one verdict line per acceptance criterion for the terminal summary."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"[{number}] {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s[1:s.index("]")])):
            terminalreporter.write_line(line)
