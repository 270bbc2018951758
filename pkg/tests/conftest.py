import numpy as np
import pytest

from neca.dataset import make_cad

# Six-person talent table: 3 attributes, domains of size 2/3/5, 10 CAV nodes.
TOY_ROWS = [
    ("John", "M", "Engineering", "Programmer"),
    ("Tony", "M", "Science", "Analyst"),
    ("Alisa", "F", "Liberal Arts", "Lawyer"),
    ("Ben", "M", "Engineering", "Programmer"),
    ("Abby", "F", "Liberal Arts", "Marketing"),
    ("James", "M", "Engineering", "Technician"),
]
TOY_HEADER = ("Name", "Gender", "Specialty", "Position")


@pytest.fixture
def toy_cad():
    return make_cad([r[1:] for r in TOY_ROWS], TOY_HEADER[1:])


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy_talent.csv"
    lines = [",".join(TOY_HEADER)] + [",".join(r) for r in TOY_ROWS]
    path.write_text("\n".join(lines) + "\n")
    return path


def assert_allclose(actual, expected, tol=1e-9):
    np.testing.assert_allclose(actual, expected, rtol=0, atol=tol)
