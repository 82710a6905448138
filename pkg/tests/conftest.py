"""Shared fixtures and the acceptance-criterion reporting hook.

Tests marked ``@pytest.mark.acceptance(n, "title")`` get one summary line
each — ``criterion <n> [PASS|FAIL] <title>`` — printed after the normal
pytest output so the release checklist can be read off directly.
"""

from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from livertumorseg.cascade import predict_case

settings.register_profile(
    "package",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("package")

_ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}

# Every cascade prediction made anywhere in the suite is recorded here as
# (case_id, n_violating_voxels) so the containment criterion can audit all
# of them, not just its own.
CASCADE_CONTAINMENT_LOG: list[tuple[str, int]] = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, title): release acceptance criterion;"
        " reported pass/fail in the terminal summary",
    )


def pytest_collection_modifyitems(items):
    def order(item):
        mark = item.get_closest_marker("acceptance")
        return mark.args[0] if mark else -1

    items.sort(key=order)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark and report.when == "call":
        num, title = mark.args
        _ACCEPTANCE_RESULTS[num] = (title, report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_ACCEPTANCE_RESULTS):
        title, passed = _ACCEPTANCE_RESULTS[num]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {num} [{verdict}] {title}")


def checked_predict_case(volume, liver_model, tumor_model, **kwargs):
    """predict_case wrapper that audits tumor-inside-liver containment and
    records the result for the suite-wide check."""
    pred = predict_case(volume, liver_model, tumor_model, **kwargs)
    violations = int(np.count_nonzero(pred.tumor_mask_final & ~pred.liver_mask_post))
    CASCADE_CONTAINMENT_LOG.append((volume.id, violations))
    assert violations == 0
    return pred


@pytest.fixture()
def predict_and_check():
    return checked_predict_case


@pytest.fixture(scope="session")
def torch_single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_models():
    """Untrained tiny liver/tumor model pair for plumbing tests."""
    from livertumorseg.network import build_model, tiny_spec

    liver = build_model(tiny_spec(in_channels=1, final_sbu=True), seed=7)
    tumor = build_model(tiny_spec(in_channels=3, final_sbu=False), seed=8)
    liver.eval()
    tumor.eval()
    return liver, tumor


@pytest.fixture(scope="session")
def phantom_volume():
    from livertumorseg.volumes import generate_phantom

    return generate_phantom(seed=3, shape=(24, 64, 64), n_tumors=2)
