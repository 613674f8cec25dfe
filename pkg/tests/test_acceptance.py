"""The twelve acceptance criteria, evaluated on a fresh reproduction run.

Each criterion is its own test so a failure names the criterion; the
pass/fail table is also printed in the terminal summary.
"""

import pytest

from femrac.acceptance import CRITERIA, check_acceptance, report_lines


@pytest.fixture(scope="module")
def report(reproduced, request):
    rep = check_acceptance(reproduced)
    request.config.acceptance_lines = report_lines(rep)
    return rep


def test_nothing_missing(report):
    assert report["missing"] == []


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(report, number):
    (result,) = [r for r in report["criteria"] if r["criterion"] == number]
    assert result["status"] == "pass", result["detail"]
