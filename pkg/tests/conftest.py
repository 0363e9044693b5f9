import numpy as np
import pytest

from htcpipe.domain import CaseGrid, LoadCase, enumerate_cases, gen_rect_face
from htcpipe.surrogate import SurrogateParams, synth_htc


@pytest.fixture
def square_face():
    """3x3 lattice on the unit square, face plane z=0."""
    return gen_rect_face(1, 3, 3, 1.0, 1.0)


@pytest.fixture
def corner_face():
    """2x2 lattice: the four unit-square corners."""
    return gen_rect_face(2, 2, 2, 1.0, 1.0)


@pytest.fixture
def base_case():
    return LoadCase(case_id=0, t_air=25.0, v=5.0, az=0.0, el=0.0)


@pytest.fixture
def study_grid():
    """The 7 temperatures x 5 speeds grid of the reference study."""
    return CaseGrid(
        t_values=(10, 15, 20, 25, 30, 35, 40),
        v_values=(1, 3, 5, 7, 9),
    )


def make_fields(face, cases, phase=0, **params):
    sp = SurrogateParams(face_phase=phase, **params)
    return [synth_htc(face, c, sp) for c in cases]


def small_cases(n=3):
    grid = CaseGrid(t_values=(10.0, 25.0, 40.0)[:n], v_values=(5.0,))
    return enumerate_cases(grid)
