"""Shared fixtures.

The training grid and deployment study are expensive (tens of minutes on one
core), so they run once per session and every consumer shares the result.
Criterion lines recorded through the `criterion` fixture are replayed in a
terminal section after the run, where output capturing cannot swallow them.
"""

import time

import pytest

_CRITERION_LINES: list = []


@pytest.fixture(scope="session")
def criterion():
    def _record(line: str) -> None:
        _CRITERION_LINES.append(line)
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def study_datasets():
    from tsm_dither.experiments import build_datasets
    return build_datasets(seed=7)


@pytest.fixture(scope="session")
def ablation_run(study_datasets):
    """(report, models, elapsed_s) for the full tier x condition x seed grid."""
    from tsm_dither.experiments import ablate
    ds_no_vib, ds_vib = study_datasets
    t0 = time.monotonic()
    report, models = ablate(ds_no_vib, ds_vib)
    return report, models, time.monotonic() - t0


@pytest.fixture(scope="session")
def deployment_run(ablation_run):
    """(report, elapsed_s) for the calibrated deployment study."""
    from tsm_dither.experiments import deploy_study
    _, models, _ = ablation_run
    t0 = time.monotonic()
    report = deploy_study(models)
    return report, time.monotonic() - t0
