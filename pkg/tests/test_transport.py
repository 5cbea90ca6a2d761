import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm

from models.exceptions import ConsistencyError, DegeneratePointError, ModelError
from models.toda import ClosedFormField
from models.transport import StaircasePath
from services.geometry_service import geometry_service
from services.toda_service import toda_service
from services.transport_service import IMMERSION_RANK_TOL, transport_service

TARGET = (0.6, 0.7)


def _r(model, fields, point, h=1e-3):
    state = transport_service.transport(model, fields, point, h=h, variation=True)
    return transport_service.position_vector(state, model, fields, method="variation").coeffs


class TestTransport:
    def test_path_independence(self, sl2_model, cosh_field):
        a = transport_service.transport(sl2_model, cosh_field, TARGET, h=1e-3, order="z_first")
        b = transport_service.transport(sl2_model, cosh_field, TARGET, h=1e-3, order="zbar_first")
        assert np.max(np.abs(a.U - b.U)) < 1e-6
        assert a.warning is None

    def test_path_independence_sl3(self, sl3_model, sl3_field):
        a = transport_service.transport(sl3_model, sl3_field, (0.4, 0.5), h=1e-3, order="z_first")
        b = transport_service.transport(sl3_model, sl3_field, (0.4, 0.5), h=1e-3, order="zbar_first")
        assert np.max(np.abs(a.U - b.U)) < 1e-6

    def test_killing_drift(self, sl2_model, cosh_field):
        state = transport_service.transport(sl2_model, cosh_field, TARGET, h=1e-3)
        drift = transport_service.killing_drift(state, sl2_model.algebra)
        assert drift < 1e-8 * state.path.length

    def test_off_shell_warns(self, sl2_model):
        constant = ClosedFormField.constant([0.3], domain=(0.0, 1.0, 0.0, 1.0))
        state = transport_service.transport(sl2_model, constant, (0.2, 0.2), h=1e-2)
        assert state.warning is not None

    def test_vanishing_potential_gives_identity(self):
        free = toda_service.build_model(2, mu_plus=0.0, mu_minus=0.0, allow_free_limit=True)
        zero = ClosedFormField.constant([0.0], domain=(0.0, 1.0, 0.0, 1.0))
        state = transport_service.transport(free, zero, (0.5, 0.5), h=1e-2, variation=True)
        assert_allclose(state.U, np.eye(3), atol=0.0)
        assert_allclose(state.U_l, np.zeros((3, 3)), atol=0.0)

    def test_custom_base_value(self, sl2_model, cosh_field):
        base = transport_service.transport(sl2_model, cosh_field, (0.2, 0.1), h=1e-3).U
        state = transport_service.transport(
            sl2_model, cosh_field, TARGET, h=1e-3, base=(0.2, 0.1), base_value=base
        )
        direct = transport_service.transport(sl2_model, cosh_field, TARGET, h=1e-3, order="zbar_first")
        assert np.max(np.abs(state.U - direct.U)) < 1e-6

    def test_non_positive_step(self, sl2_model, cosh_field):
        with pytest.raises(ModelError):
            transport_service.transport(sl2_model, cosh_field, TARGET, h=0.0)


class TestPositionVector:
    def test_central_and_variation_agree(self, sl2_model, cosh_field):
        state = transport_service.transport(sl2_model, cosh_field, (0.4, 0.3), h=1e-3, variation=True)
        central = transport_service.position_vector(state, sl2_model, cosh_field, method="central")
        variation = transport_service.position_vector(state, sl2_model, cosh_field, method="variation")
        assert np.max(np.abs(central.coeffs - variation.coeffs)) < 1e-6

    @pytest.mark.parametrize("axis", [0, 1])
    def test_tangent_vectors_match_derivative(self, sl2_model, cosh_field, axis):
        point = (0.4, 0.3)
        step = 1e-3
        shift = np.array([step, 0.0]) if axis == 0 else np.array([0.0, step])
        up = _r(sl2_model, cosh_field, tuple(np.array(point) + shift))
        down = _r(sl2_model, cosh_field, tuple(np.array(point) - shift))
        numeric = (up - down) / (2 * step)
        state = transport_service.transport(sl2_model, cosh_field, point, h=1e-3)
        analytic = transport_service.tangent_vectors(state, sl2_model, cosh_field)[axis]
        assert np.max(np.abs(numeric - analytic)) < 1e-5

    def test_unknown_method(self, sl2_model, cosh_field):
        state = transport_service.transport(sl2_model, cosh_field, (0.1, 0.1), h=1e-2)
        with pytest.raises(ModelError):
            transport_service.position_vector(state, sl2_model, cosh_field, method="spline")

    def test_non_adjoint_matrix_rejected(self, sl2_model):
        with pytest.raises(ConsistencyError):
            transport_service.element_from_ad(sl2_model.algebra, np.eye(3))


class TestImmersionPatch:
    def test_patch_matches_pointwise_transport(self, sl2_model, cosh_field):
        z = np.array([0.1, 0.3, 0.5])
        zbar = np.array([0.2, 0.4])
        patch = transport_service.immersion_patch(sl2_model, cosh_field, z, zbar, h=1e-3)
        assert patch.r.shape == (3, 2, 3)
        assert patch.max_killing_drift < 1e-8
        assert_allclose(patch.r[0, 0], 0.0, atol=1e-14)
        state = transport_service.transport(
            sl2_model, cosh_field, (0.5, 0.4), h=1e-3, base=(0.1, 0.2), order="zbar_first", variation=True
        )
        r = transport_service.position_vector(state, sl2_model, cosh_field, method="variation")
        assert_allclose(patch.r[2, 1], r.coeffs, atol=1e-9)

    def test_orthonormal_coordinates_reconstruct_r(self, sl3_model, sl3_field):
        z = np.array([0.2, 0.3])
        zbar = np.array([0.2, 0.3])
        patch = transport_service.immersion_patch(sl3_model, sl3_field, z, zbar, h=1e-3)
        rebuilt = patch.y @ patch.basis.matrix().T
        assert_allclose(rebuilt, patch.r, atol=1e-12)


class TestStaircasePath:
    def test_segments(self):
        path = StaircasePath((0.0, 0.0), (1.0, 2.0), "zbar_first")
        assert path.segments() == [(1, 0.0, 2.0, 0.0), (0, 0.0, 1.0, 2.0)]
        assert path.length == 3.0

    def test_unknown_order(self):
        with pytest.raises(ModelError):
            StaircasePath((0.0, 0.0), (1.0, 1.0), "diagonal")

class TestImmersionRank:
    def test_patch_records_rank_margin(self, sl2_model, cosh_field):
        z = np.array([0.1, 0.3, 0.5])
        zbar = np.array([0.2, 0.4])
        patch = transport_service.immersion_patch(sl2_model, cosh_field, z, zbar, h=1e-3)
        assert patch.min_rank_margin > IMMERSION_RANK_TOL

    def test_degenerate_tangents_rejected(self):
        free = toda_service.build_model(2, mu_plus=0.0, mu_minus=0.0, allow_free_limit=True)
        zero = ClosedFormField.constant([0.0], domain=(0.0, 1.0, 0.0, 1.0))
        state = transport_service.transport(free, zero, (0.5, 0.5), h=1e-2)
        with pytest.raises(DegeneratePointError):
            transport_service.tangent_vectors(state, free, zero)

    @pytest.mark.parametrize("model_name", ["sl2", "sl3"])
    def test_tangent_pairing_is_metric(self, model_name, sl2_model, cosh_field, sl3_model, sl3_field):
        model, fields = (sl2_model, cosh_field) if model_name == "sl2" else (sl3_model, sl3_field)
        point = (0.3, 0.4)
        state = transport_service.transport(model, fields, point, h=1e-3)
        t = transport_service.tangent_vectors(state, model, fields)
        g = geometry_service.metric(model, fields, *point)
        assert model.c * model.algebra.killing(t[0], t[1]) == pytest.approx(g[0, 1], rel=1e-8)
        assert model.c * model.algebra.killing(t[0], t[0]) == pytest.approx(0.0, abs=1e-8 * abs(g[0, 1]))


def test_single_step_is_exponential(sl2_model):
    constant = ClosedFormField.constant([0.2])
    h = 1e-2
    state = transport_service.transport(sl2_model, constant, (h, 0.0), h=h, base=(0.0, 0.0), check_residual=False)
    a1 = toda_service.gauge_at(sl2_model, constant, 0.0, 0.0).a1
    assert_allclose(state.U, expm(-h * sl2_model.algebra.ad(a1)), atol=1e-9)
