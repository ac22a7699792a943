import numpy as np
import pytest

from sclockdown.netgen import FirmTable, Network, generate_synthetic

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record and print one pass/fail line per acceptance criterion."""

    def emit(criterion: int, passed: bool, detail: str) -> None:
        line = f"AC{criterion:02d} {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def make_network(n_firms, links, final, sectors=None, regions=None):
    """Network from ``links = [(supplier, customer, flow), ...]`` over dense indices."""
    sectors = [1] * n_firms if sectors is None else sectors
    regions = [1] * n_firms if regions is None else regions
    firms = FirmTable(np.arange(n_firms), sectors, regions, np.ones(n_firms))
    sup = [s for s, _, _ in links]
    cust = [c for _, c, _ in links]
    flow = [v for _, _, v in links]
    return Network(firms, sup, cust, flow, np.asarray(final, dtype=float))


@pytest.fixture(scope="session")
def small_net():
    return generate_synthetic(n_firms=400, n_regions=5, seed=3)


@pytest.fixture(scope="session")
def medium_net():
    return generate_synthetic(n_firms=2000, n_regions=8, seed=1)
