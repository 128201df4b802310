from pathlib import Path

import pytest

from beliefshield.model import load_model
from beliefshield.synthesis import synthesize

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def t1():
    return load_model(FIXTURES / "t1.pomdp")


@pytest.fixture(scope="session")
def t2():
    return load_model(FIXTURES / "t2.pomdp")


@pytest.fixture(scope="session")
def t1_shield(t1):
    return synthesize(t1)
