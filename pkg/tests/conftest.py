"""Shared cases.  Trained twins are cached per session because training takes tens of seconds."""

import numpy as np
import pytest

from twinforge import twin as tw
from twinforge import train as tr
from twinforge.basis import Dictionary
from twinforge.field import build_grid
from twinforge.graybox import GrayBoxCase, InitialCondition, graybox_run

WIDE_AMP = 0.45
NARROW_AMP = 0.1


def bl_case(amplitude, M=21, N=32):
    return GrayBoxCase("buckley_leverett", InitialCondition("sine", {"amplitude": amplitude}), build_grid(M, N, 1.0))


@pytest.fixture(scope="session")
def wide_run():
    return graybox_run(bl_case(WIDE_AMP))


@pytest.fixture(scope="session")
def narrow_run():
    return graybox_run(bl_case(NARROW_AMP))


def empty_twin(run, **kw):
    return tw.TwinModel.from_gray(Dictionary(), run.field, run.substeps, **kw)


@pytest.fixture(scope="session")
def wide_trained(wide_run):
    """``(dictionary, report)`` of pre-training + fine-tuning on the wide case."""
    obj = tr.Objective(empty_twin(wide_run), wide_run.field, "mismatch")
    return tr.pretrain_finetune(obj)


@pytest.fixture(scope="session")
def narrow_trained(narrow_run):
    obj = tr.Objective(empty_twin(narrow_run), narrow_run.field, "mismatch")
    return tr.pretrain_finetune(obj)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_acceptance(number, title, passed, detail):
    """Store and print one acceptance line; the lines are repeated in the terminal summary."""
    line = f"ACCEPTANCE {number} {'PASS' if passed else 'FAIL'} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
