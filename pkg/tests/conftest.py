import os
import sys
from pathlib import Path

import pytest

from attnring import ProblemSpec

TESTS_DIR = Path(__file__).resolve().parent

# The SAT tests talk to an external DIMACS solver through the SAT_SOLVER
# command.  Default to the bundled python-sat wrapper so the suite works
# out of the box; an environment override wins.
os.environ.setdefault(
    "SAT_SOLVER", f"{sys.executable} {TESTS_DIR / 'dimacs_solver.py'}"
)


def spec(n, m, scheme, d=None):
    return ProblemSpec(n=n, d=d if d is not None else n, m=m, scheme=scheme)


@pytest.fixture
def mkspec():
    return spec
