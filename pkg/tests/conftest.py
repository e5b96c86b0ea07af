import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from retroplan.molgraph import LabeledGraph  # noqa: E402
from retroplan.rewrite import load_rules  # noqa: E402


def path_graph(*labels: str, bond: str = "1") -> LabeledGraph:
    return LabeledGraph.build(labels, [(i, i + 1, bond) for i in range(len(labels) - 1)])


# B-C disconnection from the rewrite examples, and an identity rule on "C".
SPLIT_BC = "split_bc|2;B,C;0-1:1|1;B;;1;C;|0->0.0,1->1.0"
IDENTITY_C = "ident_c|1;C;|1;C;|0->0.0"


@pytest.fixture
def split_rule():
    return load_rules(SPLIT_BC)[0]


@pytest.fixture
def identity_rule():
    return load_rules(IDENTITY_C)[0]


# One line per acceptance criterion, printed after the run.
VERDICTS: list[str] = []


def record_verdict(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
