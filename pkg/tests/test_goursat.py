import numpy as np
import pytest
from numpy.testing import assert_allclose

from models.exceptions import ModelError
from models.toda import GridField
from services.goursat_service import goursat_service
from services.toda_service import toda_service

DOMAIN = (0.0, 0.5, 0.0, 0.5)


def _max_error(model, exact, h: float, domain=DOMAIN) -> float:
    report = goursat_service.solve_from_field(model, exact, domain, h)
    field = report.field
    Z, W = np.meshgrid(field.z, field.zbar, indexing="ij")
    phi = exact.evaluate_many(Z.ravel(), W.ravel())[0].reshape(field.phi.shape)
    return float(np.max(np.abs(field.phi - phi)))


def test_matches_exact_solution(sl2_model, cosh_field):
    report = goursat_service.solve_from_field(sl2_model, cosh_field, DOMAIN, 1e-2)
    assert isinstance(report.field, GridField)
    assert report.field.phi.shape == (51, 51, 1)
    assert report.corrector_passes == 2
    assert _max_error(sl2_model, cosh_field, 1e-2) < 1e-4
    assert report.max_residual < 1e-3


def test_unit_square_accuracy(sl2_model, cosh_field):
    unit = (0.0, 1.0, 0.0, 1.0)
    report = goursat_service.solve_from_field(sl2_model, cosh_field, unit, 1e-2)
    assert report.field.phi.shape == (101, 101, 1)
    assert report.max_residual < 1e-4
    assert _max_error(sl2_model, cosh_field, 1e-2, unit) < 1e-4


def test_second_order_convergence(sl2_model, cosh_field):
    coarse = _max_error(sl2_model, cosh_field, 0.05)
    fine = _max_error(sl2_model, cosh_field, 0.025)
    assert 3.0 < coarse / fine < 5.0


def test_sl3_symmetric_solution(sl3_model, sl3_field):
    report = goursat_service.solve_from_field(sl3_model, sl3_field, (0.0, 0.3, 0.0, 0.3), 1e-2)
    Z, W = np.meshgrid(report.field.z, report.field.zbar, indexing="ij")
    exact = sl3_field.evaluate_many(Z.ravel(), W.ravel())[0].reshape(report.field.phi.shape)
    assert np.max(np.abs(report.field.phi - exact)) < 1e-4


def test_zero_data_free_limit_stays_zero():
    free = toda_service.build_model(2, mu_plus=0.0, mu_minus=0.0, allow_free_limit=True)
    z, zbar = goursat_service.grid(DOMAIN, 0.05)
    report = goursat_service.solve(free, (np.zeros(z.shape[0]), np.zeros(zbar.shape[0])), DOMAIN, 0.05)
    assert_allclose(report.field.phi, 0.0, atol=0.0)
    assert report.max_residual == 0.0


def test_characteristic_data(cosh_field):
    z, zbar = goursat_service.grid(DOMAIN, 0.1)
    along_z, along_zbar = goursat_service.characteristic_data(cosh_field, z, zbar)
    assert_allclose(along_z[:, 0], np.log(np.cosh(z)), atol=1e-14)
    assert_allclose(along_zbar[:, 0], np.log(np.cosh(zbar)), atol=1e-14)


def test_corner_mismatch(sl2_model):
    z, zbar = goursat_service.grid(DOMAIN, 0.1)
    with pytest.raises(ModelError):
        goursat_service.solve(sl2_model, (np.zeros(z.shape[0]), np.ones(zbar.shape[0])), DOMAIN, 0.1)


@pytest.mark.parametrize("h", [0.0, -0.1, 0.3])
def test_bad_step(sl2_model, cosh_field, h):
    with pytest.raises(ModelError):
        goursat_service.solve_from_field(sl2_model, cosh_field, DOMAIN, h)
