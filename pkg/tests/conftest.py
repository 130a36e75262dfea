import json
from pathlib import Path

import numpy as np
import pytest

from auxsel.candidates import Candidate
from auxsel.core import Scenario, TaskSet
from auxsel.environment import SyntheticModel

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def m6_model() -> SyntheticModel:
    return SyntheticModel.from_json(json.loads((FIXTURES / "m6_model.json").read_text()))


def all_subset_candidates(M: int) -> list[Candidate]:
    return [Candidate(TaskSet(mask), (), (Scenario.STL,)) for mask in range(1, 1 << M)]


def plain_candidates(*sets) -> list[Candidate]:
    # candidates with a placeholder family; provenance does not matter to the bandit
    return [Candidate(TaskSet.parse(s) if isinstance(s, str) else s, (), (Scenario.STL,)) for s in sets]


def one_effect_model(M: int, p: int, q: int, gamma: float, *, kappa: float = 1e9, rho: float = 1.0, base: float = 0.5):
    transfer = np.zeros((M, M))
    transfer[p, q] = gamma
    return SyntheticModel(
        base=np.full(M, base),
        transfer=transfer,
        saturation=1.0,
        noise_concentration=kappa,
        split_correlation=rho,
    )


# ---------------------------------------------------------------- acceptance report

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    n, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[n] = ("PASS" if report.passed else "FAIL", title, detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m is not None:
        outcome.get_result().criterion = m.args


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {title}" + (f" ({detail})" if detail else ""))
