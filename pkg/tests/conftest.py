import os

# enough numba threads for the 1/2/8-worker determinism checks, even on a 1-CPU box
os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np  # noqa: E402
import pytest  # noqa: E402
from hypothesis import settings  # noqa: E402

from carmine import tabular  # noqa: E402
from carmine.pipeline import bundled  # noqa: E402

settings.register_profile("ci", deadline=None, max_examples=60)
settings.load_profile("ci")


def make_table(columns: dict, row_ids=None) -> tabular.NumericTable:
    names = list(columns)
    values = np.column_stack([np.asarray(columns[n], dtype=float) for n in names]) if names else np.empty((0, 0))
    n = values.shape[0]
    row_ids = tuple(row_ids or (f"r{i}" for i in range(n)))
    metas = tuple(tabular.AttributeMeta(nm, "", "covid-outcome" if nm in tabular.COVID_OUTCOMES else "demographic")
                  for nm in names)
    return tabular.NumericTable(row_ids, metas, values.reshape(len(row_ids), len(names)))


@pytest.fixture(scope="session")
def schema():
    return tabular.load_schema(bundled("schema.json"))


@pytest.fixture(scope="session")
def snapshot_table(schema):
    table, _ = tabular.load_csv(bundled("demo_snapshot.csv"), schema)
    return table


def pytest_terminal_summary(terminalreporter):
    import sys

    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.VERDICTS:
            terminalreporter.write_line(line)
