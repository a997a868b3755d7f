import random

import pytest
from hypothesis import settings

from cnml.aiger import parse_aag

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# Two inputs, one latch storing i1, output o1 = i0 & !latch.  The symbol table
# names the single output o1 so the property below can refer to it.
REF_AAG = "aag 4 2 1 1 1\n2\n4\n6 4\n8\n8 2 7\ni0 i0\ni1 i1\no0 o1\n"
REF_PHI = "(G i0) -> (G ((! i1) -> (X o1)))"


@pytest.fixture
def ref_circuit():
    return parse_aag(REF_AAG)


@pytest.fixture
def rng():
    return random.Random(1234)


# criterion number -> (passed, title, detail); filled by test_acceptance
RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, title, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
