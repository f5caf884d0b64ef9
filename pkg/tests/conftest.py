import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from mlaco.instance import Instance, euclidean_costs, generate_random

DATA = Path(__file__).parent / "data"

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def small_inst():
    return generate_random(8, seed=3, budget_range=(120, 200))


def line_instance(xs, scores, t_max, start=0, end=None):
    """Points on the x axis; handy for hand-computed costs."""
    coords = np.column_stack([np.asarray(xs, float), np.zeros(len(xs))])
    end = len(xs) - 1 if end is None else end
    return Instance(name="line", cost=euclidean_costs(coords), score=scores, t_max=t_max,
                    start=start, end=end, coords=coords)


def quick_mode() -> bool:
    return os.environ.get("MLACO_ACCEPTANCE_QUICK", "") not in ("", "0")
