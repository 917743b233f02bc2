"""Shared fixtures: reference vehicles, parameter sets, and a central
finite-difference gradient checker used across the test suite."""

import numpy as np
import pytest

from racedyn.physics import (
    DrivetrainCoeffs,
    ModelParams,
    PacejkaCoeffs,
    VehicleGeometry,
)


def make_scale_geometry() -> VehicleGeometry:
    """Tabletop-scale test car (about 1:43 of a sedan).

    Static axle loads are around 0.2 N, so the load clamp is scaled down
    with the vehicle.
    """
    return VehicleGeometry(m=0.041, lf=0.029, lr=0.033, hcg=0.02,
                           load_floor=0.002)


def make_fullsize_geometry() -> VehicleGeometry:
    """Full-size reference car used by the frozen-value checks."""
    return VehicleGeometry(m=1200.0, lf=1.6, lr=1.4, hcg=0.3)


def make_scale_params() -> ModelParams:
    """Ground-truth parameter set for the tabletop car.

    Tire stiffness is kept near the soft end of the admissible box so the
    explicit-Euler plant stays stable at 50 Hz above about 0.8 m/s.
    """
    return ModelParams(
        front=PacejkaCoeffs(b=6.0, c=0.8, d=0.16, e=-0.6, sh=0.0035, sv=0.0008),
        rear=PacejkaCoeffs(b=7.0, c=0.75, d=0.18, e=-0.9, sh=-0.0028, sv=-0.0006),
        drivetrain=DrivetrainCoeffs(cm1=0.287, cm2=0.0545, cr0=0.0518, cr2=0.00035),
        iz=2.78e-5,
    )


@pytest.fixture
def scale_geom():
    return make_scale_geometry()


@pytest.fixture
def fullsize_geom():
    return make_fullsize_geometry()


@pytest.fixture
def scale_params():
    return make_scale_params()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_difference(f, x, eps_base=1e-6):
    """Central finite-difference gradient of scalar f at vector x.

    The step is scaled per component so quantities of very different
    magnitude (tire stiffness vs yaw inertia) all difference cleanly.
    """
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        eps = eps_base * max(1.0, abs(flat[i]))
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += eps
        xm[i] -= eps
        gflat[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2.0 * eps)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-4):
    """Relative comparison with an absolute floor tied to the gradient scale."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(1.0, float(np.max(np.abs(numeric))))
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=1e-7 * scale)
