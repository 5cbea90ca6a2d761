import numpy as np
import pytest
from numpy.testing import assert_allclose

from models.exceptions import (
    DegeneratePointError,
    DomainError,
    ModelError,
    OffShellError,
    UnsupportedAlgebraError,
)
from models.toda import ClosedFormField
from services.geometry_service import geometry_service
from services.goursat_service import goursat_service
from services.solution_service import solution_service
from services.toda_service import toda_service
from services.transport_service import transport_service

ALPHA_SQ = 2.0
POINTS = [(0.3, 0.4), (0.15, 0.8), (0.6, 0.55)]
SL3_POINTS = [(0.3, 0.4), (0.45, 0.35)]


def _phi(z, zbar):
    return float(np.log(np.cosh(z + zbar)))


def _closed_K(c, z, zbar):
    return -(4.0 * c / ALPHA_SQ) * np.exp(-4.0 * _phi(z, zbar))


@pytest.fixture(params=["sl2_model", "sl2_model_negative"], ids=["c+", "c-"])
def signed_model(request):
    return request.getfixturevalue(request.param)


class TestMetric:
    def test_closed_form_on_grid(self, sl2_model, cosh_field):
        for z in np.linspace(0.0, 1.0, 21):
            for zbar in np.linspace(0.0, 1.0, 21):
                g = geometry_service.metric(sl2_model, cosh_field, z, zbar)
                expected = (2.0 / ALPHA_SQ) * np.exp(-2.0 * _phi(z, zbar))
                assert g[0, 1] == pytest.approx(expected, abs=1e-10)
                assert g[1, 0] == g[0, 1]
                assert g[0, 0] == pytest.approx(0.0, abs=1e-12)
                assert g[1, 1] == pytest.approx(0.0, abs=1e-12)
                assert geometry_service.closed_form_metric(sl2_model, cosh_field, z, zbar) == pytest.approx(
                    g[0, 1], abs=1e-14
                )

    def test_degenerate_metric(self):
        free = toda_service.build_model(2, mu_plus=0.0, mu_minus=0.0, allow_free_limit=True)
        zero = ClosedFormField.constant([0.0], domain=(0.0, 1.0, 0.0, 1.0))
        with pytest.raises(DegeneratePointError):
            geometry_service.metric(free, zero, 0.5, 0.5)

    def test_tangent_pair_signature(self, signed_model, cosh_field):
        for z, zbar in POINTS:
            V = geometry_service.tangent_frame(signed_model, cosh_field, z, zbar)
            g = geometry_service.metric(signed_model, cosh_field, z, zbar)
            assert_allclose(V @ g @ V.T, np.diag([1.0, -1.0]), atol=1e-12)


class TestChristoffel:
    def test_sl2_closed_forms(self, sl2_model, cosh_field):
        for z, zbar in POINTS:
            gamma = geometry_service.christoffel_direct(sl2_model, cosh_field, z, zbar)
            d = cosh_field.evaluate(z, zbar)
            expected = np.zeros((2, 2, 2))
            expected[0, 0, 0] = -2.0 * d.d1[0]
            expected[1, 1, 1] = -2.0 * d.d2[0]
            assert_allclose(gamma, expected, atol=1e-10)

    def test_constant_field_is_flat(self, sl2_model):
        constant = ClosedFormField.constant([0.2])
        gamma = geometry_service.christoffel_direct(sl2_model, constant, 0.1, -0.3)
        assert_allclose(gamma, 0.0, atol=1e-14)
        by_metric = geometry_service.christoffel_metric(sl2_model, constant, 0.1, -0.3)
        assert_allclose(by_metric, 0.0, atol=1e-12)

    @pytest.mark.parametrize("model_name", ["sl2", "sl3"])
    def test_levi_civita_identity(self, model_name, sl2_model, cosh_field, sl3_model, sl3_field):
        model, fields = (sl2_model, cosh_field) if model_name == "sl2" else (sl3_model, sl3_field)
        z, zbar = 0.3, 0.4
        direct = geometry_service.christoffel_direct(model, fields, z, zbar)
        coarse = np.max(np.abs(geometry_service.christoffel_metric(model, fields, z, zbar, 2e-3) - direct))
        fine = np.max(np.abs(geometry_service.christoffel_metric(model, fields, z, zbar, 1e-3) - direct))
        assert fine < 1e-5
        assert 3.0 < coarse / fine < 5.0

    @pytest.mark.parametrize("model_name", ["sl2", "sl3"])
    def test_unsymmetrized_gamma_is_symmetric_on_shell(self, model_name, sl2_model, cosh_field, sl3_model, sl3_field):
        model, fields = (sl2_model, cosh_field) if model_name == "sl2" else (sl3_model, sl3_field)
        for z, zbar in SL3_POINTS:
            gauge = toda_service.gauge_at(model, fields, z, zbar)
            g_inv = np.linalg.inv(geometry_service.metric(model, fields, z, zbar))
            W = geometry_service._acceleration(model, gauge)
            raw = -np.einsum("mr,rp,pq,abq->mab", g_inv, gauge.a_l, model.c * model.algebra.killing_matrix, W)
            assert_allclose(raw, raw.transpose(0, 2, 1), atol=1e-10)
            assert_allclose(geometry_service.christoffel_direct(model, fields, z, zbar), raw, atol=1e-10)

    def test_one_sided_stencil_at_boundary(self, sl2_model, cosh_field):
        direct = geometry_service.christoffel_direct(sl2_model, cosh_field, 0.0, 0.5)
        by_metric = geometry_service.christoffel_metric(sl2_model, cosh_field, 0.0, 0.5, 1e-3)
        assert np.max(np.abs(by_metric - direct)) < 1e-5

    def test_no_room_for_stencil(self, sl2_model):
        narrow = solution_service.liouville_cosh(1.0, domain=(0.0, 0.0015, 0.0, 1.0))
        with pytest.raises(DomainError):
            geometry_service.christoffel_metric(sl2_model, narrow, 0.00075, 0.5, 1e-3)


class TestCurvature:
    def test_three_routes_agree_with_closed_form(self, signed_model, cosh_field):
        c = signed_model.c
        for z, zbar in POINTS:
            expected = _closed_K(c, z, zbar)
            closed = geometry_service.closed_form_curvature(signed_model, cosh_field, z, zbar)
            onshell = geometry_service.gaussian_curvature(signed_model, cosh_field, z, zbar, mode="onshell")
            gauss = geometry_service.gaussian_curvature(signed_model, cosh_field, z, zbar, mode="gauss")
            fd = geometry_service.gaussian_curvature(signed_model, cosh_field, z, zbar, mode="finite_difference")
            assert closed == pytest.approx(expected, abs=1e-10)
            assert onshell == pytest.approx(expected, abs=1e-10)
            assert gauss == pytest.approx(expected, abs=1e-10)
            assert fd == pytest.approx(expected, abs=1e-4)
            assert np.sign(fd) == -np.sign(c)

    def test_two_dimensional_identities(self, signed_model, cosh_field):
        c = signed_model.c
        for z, zbar in POINTS:
            tensors = geometry_service.curvature_tensors(signed_model, cosh_field, z, zbar)
            g = geometry_service.metric(signed_model, cosh_field, z, zbar)
            assert tensors.sectional == pytest.approx(ALPHA_SQ / c, rel=1e-5)
            assert tensors.scalar == pytest.approx(2.0 * tensors.sectional)
            assert_allclose(tensors.ricci, tensors.sectional * g, atol=1e-5)
            assert tensors.K == pytest.approx(tensors.sectional * np.linalg.det(g), rel=1e-5)

    def test_sl3_routes_agree(self, sl3_model, sl3_field):
        for z, zbar in SL3_POINTS:
            onshell = geometry_service.gaussian_curvature(sl3_model, sl3_field, z, zbar, mode="onshell")
            gauss = geometry_service.gaussian_curvature(sl3_model, sl3_field, z, zbar, mode="gauss")
            fd = geometry_service.gaussian_curvature(sl3_model, sl3_field, z, zbar, mode="finite_difference")
            assert gauss == pytest.approx(onshell, abs=1e-8 * max(1.0, abs(onshell)))
            assert fd == pytest.approx(onshell, abs=1e-4 * max(1.0, abs(onshell)))

    def test_off_shell_refused(self, sl2_model):
        constant = ClosedFormField.constant([0.2])
        with pytest.raises(OffShellError):
            geometry_service.gaussian_curvature(sl2_model, constant, 0.1, 0.1, mode="onshell")
        with pytest.raises(OffShellError):
            geometry_service.closed_form_curvature(sl2_model, constant, 0.1, 0.1)

    def test_unknown_mode(self, sl2_model, cosh_field):
        with pytest.raises(ModelError):
            geometry_service.gaussian_curvature(sl2_model, cosh_field, 0.3, 0.3, mode="guess")


class TestSecondForm:
    def test_sl2_values(self, signed_model, cosh_field):
        c = signed_model.c
        alpha = np.sqrt(ALPHA_SQ)
        for z, zbar in [(0.0, 0.0)] + POINTS:
            frame = geometry_service.normal_frame(signed_model, cosh_field, z, zbar)
            b = geometry_service.second_form(signed_model, cosh_field, frame, z, zbar, cross_check=False)
            expected = -2.0 * c * np.exp(-2.0 * _phi(z, zbar)) / (alpha * np.sqrt(abs(c)))
            assert b.shape == (1, 2, 2)
            assert b[0, 0, 1] == pytest.approx(expected, abs=1e-10)
            assert b[0, 0, 0] == pytest.approx(0.0, abs=1e-10)
            assert b[0, 1, 1] == pytest.approx(0.0, abs=1e-10)

    def test_origin_value(self, sl2_model, cosh_field):
        frame = geometry_service.normal_frame(sl2_model, cosh_field, 0.0, 0.0)
        b = geometry_service.second_form(sl2_model, cosh_field, frame, 0.0, 0.0, cross_check=False)
        assert b[0, 0, 1] == pytest.approx(-np.sqrt(2.0), abs=1e-12)

    @pytest.mark.parametrize("model_name", ["sl2", "sl3"])
    def test_two_constructions_agree(self, model_name, sl2_model, cosh_field, sl3_model, sl3_field):
        model, fields = (sl2_model, cosh_field) if model_name == "sl2" else (sl3_model, sl3_field)
        frame = geometry_service.normal_frame(model, fields, 0.35, 0.45)
        direct, by_motion = geometry_service.second_form_pair(model, fields, frame, 0.35, 0.45)
        assert np.max(np.abs(direct - by_motion)) < 1e-6

    def test_sl2_normal_connection_vanishes(self, sl2_model, cosh_field):
        frame = geometry_service.normal_frame(sl2_model, cosh_field, 0.3, 0.4)
        assert_allclose(geometry_service.normal_connection(sl2_model, cosh_field, frame, 0.3, 0.4), np.zeros((1, 1, 2)))


class TestNormalFrame:
    def test_sl2_frame(self, signed_model, cosh_field):
        frame = geometry_service.normal_frame(signed_model, cosh_field, 0.3, 0.4)
        H = signed_model.handles.H[0].coeffs
        assert frame.rank == 1
        assert_allclose(frame.vectors[0], H / np.sqrt(abs(signed_model.c)), atol=1e-12)
        assert frame.eta.tolist() == [int(np.sign(signed_model.c))]

    @pytest.mark.parametrize("c,nu_perp", [(1.0, 2), (-1.0, 4)])
    def test_sl3_signature(self, sl3_field, c, nu_perp):
        model = toda_service.build_model(3, mu_plus=2.0, mu_minus=1.0, c=c)
        frame = geometry_service.normal_frame(model, sl3_field, 0.3, 0.4)
        assert frame.rank == 6
        assert frame.nu_perp == nu_perp

    def test_sl3_reference_frame(self, sl3_model, sl3_field):
        kappa = sl3_model.algebra.killing_matrix
        ambient = sl3_model.c * kappa
        for z in np.linspace(0.1, 0.9, 5):
            for zbar in np.linspace(0.1, 0.9, 5):
                frame = geometry_service.sl3_reference_frame(sl3_model, sl3_field, z, zbar)
                gauge = toda_service.gauge_at(sl3_model, sl3_field, z, zbar)
                assert frame.eta.tolist() == [1, 1, -1, 1, 1, -1]
                assert_allclose(frame.vectors @ ambient @ frame.vectors.T, frame.eta_matrix, atol=1e-12)
                assert_allclose(gauge.a_l @ kappa @ frame.vectors.T, 0.0, atol=1e-12)

    def test_reference_frame_with_unequal_fields(self, sl3_model):
        # φ₁ ≠ φ₂ 时 c₁ ≠ ½；正交归一与切向正交都是逐点代数条件，常数场即可
        constant = ClosedFormField.constant([0.4, -0.3])
        kappa = sl3_model.algebra.killing_matrix
        z, zbar = 0.2, 0.3
        frame = geometry_service.sl3_reference_frame(sl3_model, constant, z, zbar)
        gauge = toda_service.gauge_at(sl3_model, constant, z, zbar)
        assert_allclose(frame.vectors @ (sl3_model.c * kappa) @ frame.vectors.T, frame.eta_matrix, atol=1e-12)
        assert_allclose(gauge.a_l @ kappa @ frame.vectors.T, 0.0, atol=1e-12)
        solver = geometry_service.normal_frame(sl3_model, constant, z, zbar)
        P = geometry_service.normal_projector(sl3_model, solver)
        Q = geometry_service.normal_projector(sl3_model, frame)
        assert np.max(np.abs(P - Q)) < 1e-8

    @pytest.mark.parametrize("point", SL3_POINTS)
    def test_sl3_sign_of_c_flips_eta_only(self, sl3_field, point):
        positive = toda_service.build_model(3, mu_plus=2.0, mu_minus=1.0, c=1.0)
        negative = toda_service.build_model(3, mu_plus=2.0, mu_minus=1.0, c=-1.0)
        a = geometry_service.normal_frame(positive, sl3_field, *point)
        b = geometry_service.normal_frame(negative, sl3_field, *point)
        assert_allclose(a.vectors, b.vectors, atol=1e-12)
        assert b.eta.tolist() == (-a.eta).tolist()

    def test_solver_frame_spans_reference_space(self, sl3_model, sl3_field):
        for z, zbar in SL3_POINTS:
            solver = geometry_service.normal_frame(sl3_model, sl3_field, z, zbar)
            reference = geometry_service.sl3_reference_frame(sl3_model, sl3_field, z, zbar)
            P = geometry_service.normal_projector(sl3_model, solver)
            Q = geometry_service.normal_projector(sl3_model, reference)
            assert np.max(np.abs(P - Q)) < 1e-8
            assert_allclose(P @ P, P, atol=1e-10)

    def test_reference_frame_connection_blocks(self, sl3_model, sl3_field):
        z, zbar, s = 0.35, 0.4, 1e-5

        def ref(zz, ww):
            return geometry_service.sl3_reference_frame(sl3_model, sl3_field, zz, ww).vectors

        frame = geometry_service.sl3_reference_frame(sl3_model, sl3_field, z, zbar)
        d_vectors = np.stack([
            (ref(z + s, zbar) - ref(z - s, zbar)) / (2 * s),
            (ref(z, zbar + s) - ref(z, zbar - s)) / (2 * s),
        ])
        gauge = toda_service.gauge_at(sl3_model, sl3_field, z, zbar)
        motion = geometry_service._frame_motion(sl3_model, gauge, frame.vectors, d_vectors)
        mu = geometry_service._connection_from(sl3_model, frame.vectors, motion)
        # 行/列 4,5 属于 G₂⊕G₋₂，0,1 属于 G₀
        assert_allclose(mu[4:6, 0:2], 0.0, atol=1e-10)
        assert_allclose(mu[0:2, 4:6], 0.0, atol=1e-10)
        assert_allclose(mu, -mu.transpose(1, 0, 2), atol=1e-6)

    def test_reference_frame_needs_sl3(self, sl2_model, cosh_field):
        with pytest.raises(UnsupportedAlgebraError):
            geometry_service.sl3_reference_frame(sl2_model, cosh_field, 0.3, 0.3)


class TestMeanCurvature:
    def test_norm_is_constant(self, signed_model, cosh_field):
        for z in np.linspace(0.1, 0.9, 5):
            for zbar in np.linspace(0.1, 0.9, 5):
                frame = geometry_service.normal_frame(signed_model, cosh_field, z, zbar)
                value = geometry_service.mean_curvature_norm(signed_model, cosh_field, frame, z, zbar)
                assert value == pytest.approx(ALPHA_SQ / signed_model.c, abs=1e-8)

    def test_parallel_in_normal_bundle(self, sl2_model, cosh_field):
        for z, zbar in POINTS:
            frame = geometry_service.normal_frame(sl2_model, cosh_field, z, zbar)
            derivative = geometry_service.normal_derivative_of_mean_curvature(sl2_model, cosh_field, frame, z, zbar)
            assert derivative.shape == (1, 2)
            assert np.max(np.abs(derivative)) < 1e-8

    def test_conjugated_vector(self, sl2_model, cosh_field):
        z, zbar = 0.3, 0.4
        state = transport_service.transport(sl2_model, cosh_field, (z, zbar), h=1e-3)
        frame = geometry_service.normal_frame(sl2_model, cosh_field, z, zbar)
        H, norm = geometry_service.mean_curvature(sl2_model, cosh_field, frame, state, z, zbar)
        H0 = -np.sqrt(ALPHA_SQ) / sl2_model.c * sl2_model.handles.H[0].coeffs
        assert_allclose(H.coeffs, np.linalg.solve(state.U, H0), atol=1e-8)
        assert norm == pytest.approx(ALPHA_SQ / sl2_model.c, abs=1e-8)

    def test_state_at_other_point(self, sl2_model, cosh_field):
        state = transport_service.transport(sl2_model, cosh_field, (0.2, 0.2), h=1e-2)
        frame = geometry_service.normal_frame(sl2_model, cosh_field, 0.3, 0.4)
        with pytest.raises(ModelError):
            geometry_service.mean_curvature(sl2_model, cosh_field, frame, state, 0.3, 0.4)


class TestGaussCodazziRicci:
    def test_sl2_hypersurface(self, signed_model, cosh_field):
        for z, zbar in POINTS:
            frame = geometry_service.normal_frame(signed_model, cosh_field, z, zbar)
            residuals = geometry_service.gcr_residuals(signed_model, cosh_field, frame, z, zbar, h=1e-3)
            assert residuals.gauss < 1e-4
            assert residuals.codazzi < 1e-4
            assert residuals.ricci == 0.0

    def test_sl3(self, sl3_model, sl3_field):
        frame = geometry_service.normal_frame(sl3_model, sl3_field, 0.4, 0.4)
        residuals = geometry_service.gcr_residuals(sl3_model, sl3_field, frame, 0.4, 0.4, h=1e-3)
        assert residuals.max() < 1e-3


    def test_sl3_goursat_field_with_unequal_components(self, sl3_model):
        domain = (0.0, 0.5, 0.0, 0.5)
        z, zbar = goursat_service.grid(domain, 1e-2)
        along_z = np.stack([0.8 * z, -0.4 * z], axis=-1)
        along_zbar = np.stack([0.6 * zbar, -0.2 * zbar], axis=-1)
        field = goursat_service.solve(sl3_model, (along_z, along_zbar), domain, 1e-2).field
        point = (0.3, 0.3)
        frame = geometry_service.normal_frame(sl3_model, field, *point)
        residuals = geometry_service.gcr_residuals(sl3_model, field, frame, *point, h=1e-3)
        assert residuals.gauss < 1e-3
        assert residuals.codazzi < 1e-3
        assert residuals.ricci < 1e-3
        # Ricci 方程右边在 φ₁ ≠ φ₂ 时不为零
        b = geometry_service.second_form(sl3_model, field, frame, *point, cross_check=False)
        g_inv = np.linalg.inv(geometry_service.metric(sl3_model, field, *point))
        rhs = np.einsum("ag,bt,tg->ab", b[:, 0], b[:, 1], g_inv) - np.einsum("bg,at,tg->ab", b[:, 0], b[:, 1], g_inv)
        assert np.max(np.abs(rhs)) > 1e-2


class TestGaugeInvariance:
    def test_sl2(self, sl2_model, cosh_field):
        g = 0.3 * sl2_model.cartan_dirs[0]
        for z, zbar in POINTS:
            assert geometry_service.gauge_invariance_check(sl2_model, cosh_field, g, z, zbar) < 1e-9

    def test_sl3(self, sl3_model, sl3_field):
        g = 0.2 * sl3_model.cartan_dirs[0] - 0.1 * sl3_model.cartan_dirs[1]
        for z, zbar in SL3_POINTS:
            assert geometry_service.gauge_invariance_check(sl3_model, sl3_field, g, z, zbar) < 1e-9


class TestFundamentalForms:
    def test_sl2_record(self, sl2_model, cosh_field):
        forms = geometry_service.fundamental_forms(sl2_model, cosh_field, 0.3, 0.4)
        expected = _closed_K(1.0, 0.3, 0.4)
        assert forms.K_closed == pytest.approx(expected, abs=1e-10)
        assert forms.K == forms.K_closed
        assert forms.K_fd == pytest.approx(expected, abs=1e-4)
        assert forms.K_gauss == pytest.approx(expected, abs=1e-10)
        assert forms.H_norm_sq == pytest.approx(ALPHA_SQ, abs=1e-8)
        assert forms.nu_perp == 0
        assert forms.b_crosscheck < 1e-6
        assert forms.mu_conn.shape == (1, 1, 2)

    def test_sl3_record(self, sl3_model, sl3_field):
        forms = geometry_service.fundamental_forms(sl3_model, sl3_field, 0.35, 0.4)
        assert forms.nu_perp == 2
        assert forms.b.shape == (6, 2, 2)
        assert forms.mu_conn.shape == (6, 6, 2)
        assert forms.K_closed is not None
        assert forms.K_fd == pytest.approx(forms.K_closed, abs=1e-4 * max(1.0, abs(forms.K_closed)))


class TestProperties:
    def test_sl2_random_points(self, cosh_field, rng):
        models = {1.0: toda_service.build_model(2, c=1.0), -1.0: toda_service.build_model(2, c=-1.0)}
        for _ in range(100):
            z, zbar = rng.uniform(0.05, 0.95, size=2)
            model = models[float(rng.choice([1.0, -1.0]))]
            g = geometry_service.metric(model, cosh_field, z, zbar)
            assert int(np.sum(np.linalg.eigvalsh(g) < 0)) == 1
            V = geometry_service.tangent_frame(model, cosh_field, z, zbar)
            assert_allclose(V @ g @ V.T, np.diag([1.0, -1.0]), atol=1e-12)
            frame = geometry_service.normal_frame(model, cosh_field, z, zbar)
            b = geometry_service.second_form(model, cosh_field, frame, z, zbar, cross_check=False)
            assert_allclose(b, b.transpose(0, 2, 1), atol=1e-12)

    def test_sl3_random_points(self, sl3_model, sl3_field, rng):
        for _ in range(100):
            z, zbar = rng.uniform(0.1, 0.9, size=2)
            frame = geometry_service.normal_frame(sl3_model, sl3_field, z, zbar)
            b = geometry_service.second_form(sl3_model, sl3_field, frame, z, zbar, cross_check=False)
            assert_allclose(b, b.transpose(0, 2, 1), atol=1e-10)
            gauge = toda_service.gauge_at(sl3_model, sl3_field, z, zbar)
            d_vectors = geometry_service.frame_derivative(sl3_model, sl3_field, frame, z, zbar)
            motion = geometry_service._frame_motion(sl3_model, gauge, frame.vectors, d_vectors)
            raw = geometry_service._connection_from(sl3_model, frame.vectors, motion)
            assert_allclose(raw, -raw.transpose(1, 0, 2), atol=1e-6)
            assert frame.nu_perp + 1 == 3
