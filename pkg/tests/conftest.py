"""Shared test fixtures and the acceptance-summary reporter."""

import sys

import pytest

from surgnet.records import CaseRecord


def make_case(case_id="c1", day=0, end=3, providers=("a", "b"), age=50,
              gender="male", surgery_type=1, dx=()):
    """CaseRecord factory with sensible defaults for unit tests."""
    return CaseRecord(
        case_id=case_id,
        day_offset=day,
        end_day_offset=end,
        providers=frozenset(providers),
        age=age,
        gender=gender,
        surgery_type=surgery_type,
        dx_codes=tuple(dx),
    )


@pytest.fixture
def case_factory():
    return make_case


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo one line per acceptance criterion after the run."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for line in results:
        terminalreporter.write_line(line)
