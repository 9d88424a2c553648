"""All acceptance criteria at their stated tolerances, one printed line each.

The multi-seed desk runs are shared through a module-scoped suite, so the
whole file costs roughly one pass over the desk sweep.
"""

import pytest

from skoffar.harness.acceptance import CRITERIA, Suite, run_criterion


@pytest.fixture(scope="module")
def suite():
    return Suite(seeds=10)


@pytest.mark.slow
@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"c{c[0]:02d}" for c in CRITERIA])
def test_criterion(number, suite, capsys):
    result = run_criterion(number, suite)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
