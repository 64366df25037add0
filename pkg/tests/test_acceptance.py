"""The seven acceptance criteria at their stated tolerances.

Criteria 1 to 3 run their oracle suites directly.  Criteria 4 to 7 read the
verdicts of one full ``solve`` + ``verify`` run of the default configuration,
shared across the session.  Set ARTIFACT_ACCEPTANCE_OUT to reuse an output
directory (its content-keyed ray caches are reused when the configuration
matches).
"""

import os
import time

import pytest

from artifact import acceptance
from artifact.pipeline import default_config, solve, verify

from conftest import ACCEPTANCE_LINES


def _record(result):
    line = acceptance.format_line(result)
    ACCEPTANCE_LINES[result.number] = line
    print(line)
    return result


@pytest.fixture(scope="session")
def pipeline_results(tmp_path_factory):
    out = os.environ.get("ARTIFACT_ACCEPTANCE_OUT") or tmp_path_factory.mktemp("acceptance")
    cfg = default_config()
    cfg.threads = max(1, min(4, os.cpu_count() or 1))
    t0 = time.perf_counter()
    solve(cfg, out)
    run = verify(cfg, out)
    results = acceptance.pipeline_criteria(run, time.perf_counter() - t0)
    return {r.number: r for r in results}


def test_criterion_1_operator_identities():
    assert _record(acceptance.operator_identities()).ok


def test_criterion_2_special_functions():
    assert _record(acceptance.special_functions()).ok


def test_criterion_3_laplace_fourier():
    assert _record(acceptance.laplace_fourier()).ok


@pytest.mark.slow
@pytest.mark.parametrize("number", [4, 5, 6, 7])
def test_pipeline_criterion(pipeline_results, number):
    r = _record(pipeline_results[number])
    assert r.ok, r.detail
