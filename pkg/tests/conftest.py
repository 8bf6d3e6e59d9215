"""Session fixtures for the reference conic runs shared across modules."""

import math

import pytest

from conelab import geometry as geo
from conelab import ma_solver as ma

# Reference configuration: unit-volume-scaled flat background far from
# the spectral fold, one theta-profile divisor at the half-cell point.
STANDARD = {"resolution": 64, "scale": 0.1, "beta": 0.6, "mu": 0.5,
            "epsilon": 1e-2}
EPS_LADDER = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5]


def make_standard_torus():
    res = STANDARD["resolution"]
    h = 2.0 * math.pi / res
    g = geo.make_torus(1, res, scale=STANDARD["scale"])
    # locus half a cell off the lattice: the regularized weight is then
    # never evaluated at its zero, so grid values stay bounded in the
    # small-epsilon limit
    geo.make_weight(g, [(math.pi + h / 2.0) * (1.0 + 1.0j)])
    return g


@pytest.fixture(scope="session")
def standard_torus():
    return make_standard_torus()


@pytest.fixture(scope="session")
def standard_path(standard_torus):
    rhs = ma.make_rhs(standard_torus, STANDARD["mu"], STANDARD["epsilon"],
                      (STANDARD["beta"],))
    return ma.continuity_path(standard_torus, rhs)


@pytest.fixture(scope="session")
def standard_sweep(standard_torus):
    return ma.epsilon_sweep(standard_torus, STANDARD["mu"],
                            (STANDARD["beta"],), list(EPS_LADDER))


@pytest.fixture(scope="session")
def spindle_run():
    """Equal-angle spindle driven to its constant-curvature endpoint.

    The regularization parameter sits below the weight floor e^(-2L),
    so the grid sees the genuine conic equation and the closed form is
    the exact target.
    """
    sp = geo.make_spindle(0.5, 1024)
    rhs = ma.make_rhs(sp, 0.5, 1e-16, (0.5, 0.5))
    states = ma.continuity_path(sp, rhs)
    return sp, states
