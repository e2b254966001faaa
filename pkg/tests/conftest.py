from pathlib import Path

import numpy as np
import pytest

from nlpcanon.problem import NLPInstance

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

WORKED = """vars z w1 w2
radius 1
objective w1^2 + w2^2 - 2*z
ineq g1: z
ineq g2: z + w1*w2
"""


def problem(name):
    return NLPInstance.from_file(PROBLEMS / name)


@pytest.fixture
def worked():
    return NLPInstance.from_text(WORKED)


@pytest.fixture
def saddle():
    return NLPInstance.from_text(WORKED.replace("w1^2 + w2^2", "w1^2 - w2^2"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
