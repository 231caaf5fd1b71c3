import numpy as np
import pytest

from bhts.plate import Campaign, Plate, Well, WellType


def make_plate(pid, grid, controls=(), n_rows=None, n_cols=None):
    """Plate from a 2-D array of compound values plus ``(row, col, type, value)`` controls."""
    grid = np.asarray(grid, dtype=float)
    wells = [Well(r, c, WellType.COMPOUND, float(grid[r, c]))
             for r in range(grid.shape[0]) for c in range(grid.shape[1])]
    wells += [Well(r, c, t, float(v)) for r, c, t, v in controls]
    n_rows = n_rows or max(w.row for w in wells) + 1
    n_cols = n_cols or max(w.col for w in wells) + 1
    return Plate(pid, n_rows, n_cols, tuple(wells))


@pytest.fixture
def tiny_campaign():
    rng = np.random.default_rng(3)
    plates = [make_plate(f"T{m}", rng.normal(size=(2, 3))) for m in range(3)]
    return Campaign(tuple(plates), {"origin": "fixture"})


@pytest.fixture(scope="session")
def small_synthetic():
    from bhts.synth import build_campaign, benchmark_campaign_spec
    return build_campaign(benchmark_campaign_spec(0.1, n_plates=20, seed=11))


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record one acceptance verdict; printed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
