import re

import numpy as np
import pytest

from pcspline.basis import evaluate_design, make_basis, uniform_grid
from pcspline.dofmap import build_mapping
from pcspline.gmrf import structure_matrix

_CRITERIA = {}


def design(n, K, degree=3, lo=0.0, hi=1.0):
    return evaluate_design(make_basis(lo, hi, K, degree), uniform_grid(lo, hi, n))


def mapping(n, K, r=2, degree=3):
    return build_mapping(design(n, K, degree), structure_matrix(K, r))


@pytest.fixture(scope="session")
def map50():
    return mapping(50, 20)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[int(m.group(1))] = (report.outcome == "passed", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, detail = _CRITERIA[k]
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}"
        terminalreporter.write_line(f"{line}  {detail}" if detail else line)
