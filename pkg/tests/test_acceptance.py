"""Acceptance criteria 1-10 at the quick level; one printed line per criterion."""

import pytest

from fracfp.acceptance import acceptance_suite, format_line


@pytest.fixture(scope="module")
def suite():
    return acceptance_suite("quick", seed=0)


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(suite, number, capsys):
    res = next(r for r in suite["criteria"] if r["id"] == number)
    line = format_line(number, res)
    with capsys.disabled():
        print("\n" + line)
    assert res["passed"], line
