import math

import numpy as np
import pytest

from spheredeconv import harmonics, sphere, transforms
from spheredeconv.errors import DomainError, SingularBlockError, UnsupportedModelError

from conftest import random_rotation_so3


class TestErrorModels:
    def test_smoothness_assignment(self):
        assert transforms.error_free(2).smoothness.scenario == "S1"
        assert transforms.error_free(2).smoothness.beta == 0.0
        s = transforms.laplace(0.5).smoothness
        assert (s.scenario, s.beta) == ("S1", 2.0)
        s = transforms.rosenthal(math.pi / 2, 3.0).smoothness
        assert (s.scenario, s.beta) == ("S1", 3.0)
        s = transforms.gaussian(0.5).smoothness
        assert (s.scenario, s.beta, s.alpha, s.gamma) == ("S2", 2.0, 0.0, 0.125)
        s = transforms.vmf_error(2.0, np.eye(3)).smoothness
        assert (s.scenario, s.beta, s.alpha, s.gamma) == ("S3", 1.0, 4.0, 1.0)
        assert abs(s.xi1 - (1 + math.log(2.0))) < 1e-15
        assert abs(s.xi2 - (1 + math.log(6.0))) < 1e-15
        s1 = transforms.vmf_error(2.0, np.eye(2), d=1).smoothness
        assert (s1.scenario, s1.alpha) == ("S3", 0.0)
        assert abs(s1.xi2 - (1 + math.log(4.0))) < 1e-15

    def test_parameter_validation(self):
        with pytest.raises(DomainError):
            transforms.laplace(-1.0)
        with pytest.raises(DomainError):
            transforms.rosenthal(4.0, 1.0)
        with pytest.raises(UnsupportedModelError):
            transforms.rosenthal(1.0, 1.0, d=1)

    def test_angle_densities_normalized(self):
        phi = np.linspace(0.0, 2 * math.pi, 20001)
        for model in (transforms.laplace(0.4, d=1), transforms.gaussian(0.6, d=1),
                      transforms.vmf_error(1.5, np.eye(2), d=1)):
            mass = np.trapezoid(transforms.so2_density(model, phi), phi) / (2 * math.pi)
            assert abs(mass - 1.0) < 1e-6

    def test_angle_marginals_normalized(self):
        r = np.linspace(0.0, math.pi, 20001)
        for model in (transforms.laplace(0.5), transforms.gaussian(0.5),
                      transforms.vmf_error(2.0, np.eye(3))):
            mass = np.trapezoid(transforms.so3_angle_marginal(model, r), r)
            assert abs(mass - 1.0) < 1e-6
        cdf = transforms.rosenthal_angle_cdf(transforms.rosenthal(math.pi / 2, 2.0), r)
        assert abs(cdf[-1] - 1.0) < 1e-12
        assert np.all(np.diff(cdf) >= -1e-12)


class TestBigD:
    def test_so2_closed_form(self):
        u = sphere.rotation_from_angle(math.pi / 4)
        d2 = transforms.big_d_matrix(1, 2, u)
        assert np.abs(d2 - np.array([[0.0, -1.0], [1.0, 0.0]])).max() < 1e-15

    def test_identity(self):
        for l in (1, 3):
            d = transforms.big_d_matrix(2, l, sphere.rotation_identity(2))
            assert np.abs(d - np.eye(2 * l + 1)).max() < 1e-14

    def test_unitarity(self, rng):
        u = random_rotation_so3(rng)
        for l in (1, 2, 5):
            d = transforms.big_d_matrix(2, l, u)
            assert np.abs(d @ d.conj().T - np.eye(2 * l + 1)).max() < 1e-10

    def test_representation_property(self, rng):
        for d in (1, 2):
            if d == 1:
                u = sphere.rotation_from_angle(1.1)
                v = sphere.rotation_from_angle(2.7)
            else:
                u, v = random_rotation_so3(rng), random_rotation_so3(rng)
            for l in range(1, 9):
                du, dv = transforms.big_d_matrix(d, l, u), transforms.big_d_matrix(d, l, v)
                duv = transforms.big_d_matrix(d, l, sphere.compose(u, v))
                assert np.abs(duv - du @ dv).max() < 1e-9
                dinv = transforms.big_d_matrix(
                    d, l, sphere.rotation_from_matrix(u.matrix.T, validate=False))
                assert np.abs(dinv - du.conj().T).max() < 1e-9

    def test_matches_quadrature_definition(self, quad_s2, quad_s1, rng):
        # D_qr(u) = integral of conj(B_q(ux)) B_r(x)
        u2 = random_rotation_so3(rng)
        t = harmonics.BasisTable.for_grid(quad_s2, 6)
        rot = sphere.SphereGrid.from_coords(quad_s2.coords @ u2.matrix.T)
        tu = harmonics.BasisTable.for_grid(rot, 6)
        for l in (1, 4, 6):
            dq = (tu.block(l).conj() * quad_s2.weights[:, None]).T @ t.block(l)
            assert np.abs(transforms.big_d_matrix(2, l, u2) - dq).max() < 1e-8
        u1 = sphere.rotation_from_angle(0.9)
        t1 = harmonics.BasisTable.for_grid(quad_s1, 4)
        rot1 = sphere.SphereGrid.from_coords(quad_s1.coords @ u1.matrix.T)
        tu1 = harmonics.BasisTable.for_grid(rot1, 4)
        for l in (1, 3):
            dq = (tu1.block(l).conj() * quad_s1.weights[:, None]).T @ t1.block(l)
            assert np.abs(transforms.big_d_matrix(1, l, u1) - dq).max() < 1e-8


class TestOperatorNorm:
    def test_identity_and_scalar(self):
        assert abs(transforms.operator_norm(np.eye(3)) - 1.0) < 1e-10
        assert abs(transforms.operator_norm(np.eye(3) * (2.0 / 3.0)) - 2.0 / 3.0) < 1e-10

    def test_against_dense_eigensolver(self, rng):
        for _ in range(10):
            m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
            ours = transforms.operator_norm(m)
            oracle = math.sqrt(np.linalg.eigvalsh(m.conj().T @ m).max())
            assert abs(ours - oracle) < 1e-8 * max(1.0, oracle)


class TestTransformBlocks:
    def test_laplace_closed_form(self):
        b = transforms.transform_blocks(transforms.laplace(0.5), 2)
        assert np.allclose(b.block(1), (2.0 / 3.0) * np.eye(3))
        assert np.allclose(b.block(2), (1.0 / 2.5) * np.eye(5))
        b1 = transforms.transform_blocks(transforms.laplace(0.5, d=1), 2)
        assert np.allclose(b1.block(2), np.eye(2) / 2.0)

    def test_gaussian_closed_form(self):
        b = transforms.transform_blocks(transforms.gaussian(0.5), 1)
        assert np.allclose(b.block(1), math.exp(-0.25) * np.eye(3))

    def test_error_free_identity(self):
        b = transforms.transform_blocks(transforms.error_free(2), 4)
        for l in range(5):
            assert np.allclose(b.block(l), np.eye(harmonics.n_dl(2, l)))

    def test_degree_zero_is_one(self):
        for model in (transforms.laplace(1.0), transforms.gaussian(1.0),
                      transforms.rosenthal(0.9, 2.0), transforms.vmf_error(2.0, np.eye(3))):
            assert transforms.transform_blocks(model, 0).block(0)[0, 0] == 1.0

    def test_inverse_residual(self):
        b = transforms.transform_blocks(transforms.vmf_error(2.0, np.eye(3)), 4)
        for l in range(5):
            resid = b.block(l) @ b.inverse(l) - np.eye(harmonics.n_dl(2, l))
            assert np.abs(resid).max() < 1e-8

    def test_vmf_block_scalar_real(self):
        # with identity mean direction the law is a class function
        b = transforms.transform_blocks(transforms.vmf_error(2.0, np.eye(3)), 2)
        blk = b.block(1)
        assert np.abs(blk.imag).max() < 1e-10
        assert np.abs(blk - blk[0, 0] * np.eye(3)).max() < 1e-8

    def test_rosenthal_singular_degree_named(self):
        # theta = 2 pi/3 makes the degree-1 scalar vanish
        with pytest.raises(SingularBlockError) as err:
            transforms.transform_blocks(transforms.rosenthal(2 * math.pi / 3, 2.0), 2)
        assert err.value.degree == 1

    def test_laplace_inverse_norm_growth(self):
        # ordinary-smooth of order 2: inverse norms grow like lam^2 l^2
        lam = 0.7
        b = transforms.transform_blocks(transforms.laplace(lam), 64)
        ratio = b.inv_op_norms[64] / 64 ** 2
        assert abs(ratio / lam ** 2 - 1.0) < 0.05

    def test_vmf_blocks_match_sampler_average(self):
        model = transforms.vmf_error(2.0, np.eye(3))
        blocks = transforms.transform_blocks(model, 1)
        rots = sphere.sample_error(model, 200000, seed=31)
        eul = np.array([r.euler for r in rots])
        d1 = harmonics.wigner_small_d_matrix(1, eul[:, 1])
        m = np.arange(-1, 2)
        dmat = (np.exp(-1j * np.outer(eul[:, 0], m))[:, :, None] * d1
                * np.exp(-1j * np.outer(eul[:, 2], m))[:, None, :])
        mc = dmat.mean(axis=0)
        se = np.abs(dmat - mc).std() / math.sqrt(len(rots))
        assert np.abs(mc - blocks.block(1)).max() < max(4.0 * se, 0.01)


def vmf_density_s2(kappa, mu):
    def f(coords):
        coords = np.atleast_2d(coords)
        return kappa * np.exp(kappa * (coords @ mu)) / (4 * math.pi * math.sinh(kappa))
    return f


class TestForwardTransform:
    def test_constant_function(self, quad_s2):
        c = 1.0 / math.sqrt(4 * math.pi)
        coefs = transforms.forward_transform(lambda x: np.full(len(x), c), quad_s2, 3)
        assert abs(coefs[0][0] - 1.0) < 1e-10
        for l in (1, 2, 3):
            assert np.abs(coefs[l]).max() < 1e-10

    def test_real_part_splits_into_conjugate_pair(self, quad_s2):
        # real part of a degree-2 element with classical order +2
        table = harmonics.BasisTable.for_grid(quad_s2, 2)

        def f(coords):
            g = sphere.SphereGrid.from_coords(coords)
            t = harmonics.BasisTable.for_grid(g, 2)
            return t.block(2)[:, 4].real

        coefs = transforms.forward_transform(f, quad_s2, 2)
        assert abs(coefs[2][4] - 0.5) < 1e-9
        assert abs(coefs[2][0] - 0.5) < 1e-9

    def test_density_total_mass(self, quad_s2):
        f = vmf_density_s2(0.1, np.array([0, 0, 1.0]))
        coefs = transforms.forward_transform(f, quad_s2, 1)
        assert abs(coefs[0][0] - 1.0 / math.sqrt(4 * math.pi)) < 1e-10


class TestConvolutionIdentity:
    @pytest.mark.parametrize("gmodel,tol", [
        (transforms.error_free(2), 1e-9),
        (transforms.laplace(0.5), 1e-6),
        (transforms.gaussian(0.5), 1e-6),
        (transforms.vmf_error(2.0, np.eye(3)), 1e-6),
    ])
    def test_blockwise_product(self, gmodel, tol, quad_s2):
        rotq = sphere.so3_axis_angle_quadrature(16)
        f = vmf_density_s2(2.0, np.array([0.3, -0.4, math.sqrt(0.75)]))
        assert transforms.convolve_check(gmodel, f, quad_s2, rotq, 4) < tol

    def test_constant_fixed_point(self, quad_s2):
        rotq = sphere.so3_axis_angle_quadrature(12)
        c = 1.0 / (4 * math.pi)
        dev = transforms.convolve_check(transforms.vmf_error(2.0, np.eye(3)),
                                        lambda x: np.full(len(x), c), quad_s2, rotq, 3)
        assert dev < 1e-8
