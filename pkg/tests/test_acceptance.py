"""Acceptance gate: every criterion runs at its stated tolerance and prints
one pass/fail line.  Run with `pytest tests/test_acceptance.py -v -s` or via
`youngbsde acceptance`."""

import pytest

from youngbsde.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("name", [c[0] for c in CRITERIA])
def test_acceptance_criterion(name, tmp_path):
    result = run_criterion(name, out_dir=tmp_path)
    print(result.line())
    assert result.passed, result.detail
