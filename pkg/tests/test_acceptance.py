"""One test per acceptance criterion; each prints a single PASS/FAIL line with its tolerance."""
import pytest

from compound_increments import acceptance


@pytest.mark.parametrize("number", acceptance.FULL)
def test_criterion(number, capsys):
    outcome = acceptance.run_suite("full", only=(number,), echo=None)[0]
    with capsys.disabled():
        print("\n" + outcome.line())
    assert outcome.ok, outcome.line()
