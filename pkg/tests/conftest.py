import os
import time

import pytest

from bottleneck_coop import sweep

_REPORT: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    _REPORT.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_record():
    return record


@pytest.fixture(scope="session")
def full_sweep(tmp_path_factory):
    """The default dual-variant grid, run once per session on all cores."""
    out = tmp_path_factory.mktemp("sweep") / "full.csv"
    workers = os.cpu_count() or 1
    start = time.perf_counter()
    report = sweep.run_sweep(sweep.GridSpec(), workers, out)
    elapsed = time.perf_counter() - start
    rows = sweep.read_sweep(out)
    return {"path": out, "report": report, "elapsed": elapsed, "rows": rows, "workers": workers}


@pytest.fixture(scope="session")
def sweep_lookup(full_sweep):
    """phi by (variant, dmaxmax, p_f, p_b, kappa)."""
    return {(r["variant"], r["dmaxmax"], r["p_f"], r["p_b"], r["kappa"]): r for r in full_sweep["rows"]}
