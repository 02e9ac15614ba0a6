import math

import numpy as np
import pytest

from spheredeconv import sphere, transforms
from spheredeconv.errors import DomainError, UnsupportedDimensionError

from conftest import random_point, random_rotation_so3


class TestCoordinates:
    def test_identity_case_d1(self):
        p = sphere.from_angles(1, 0.0)
        assert np.allclose(p.coords, [1.0, 0.0])

    def test_equator_d2(self):
        p = sphere.from_angles(2, 0.0, [math.pi / 2])
        assert np.allclose(p.coords, [1.0, 0.0, 0.0], atol=1e-15)

    def test_coordinate_map_d3(self):
        p = sphere.from_angles(3, math.pi / 2, [math.pi / 2, math.pi / 2])
        assert np.allclose(p.coords, [0.0, 1.0, 0.0, 0.0], atol=1e-15)

    def test_round_trip(self, rng):
        for d in (1, 2, 3, 4):
            for _ in range(20):
                p = random_point(rng, d)
                q = sphere.from_angles(d, p.phi, p.thetas)
                assert np.max(np.abs(q.coords - p.coords)) < 1e-12
                assert abs(np.linalg.norm(p.coords) - 1.0) < 1e-12

    def test_singular_points_canonical(self):
        phi, thetas = sphere.to_angles(sphere.from_coords([0.0, 0.0, 1.0]))
        assert phi == 0.0 and thetas == (0.0,)
        phi, thetas = sphere.to_angles(sphere.from_coords([1.0, 0.0, 0.0]))
        assert phi == 0.0 and abs(thetas[0] - math.pi / 2) < 1e-15
        phi, _ = sphere.to_angles(sphere.from_coords([-1.0, 0.0]))
        assert abs(phi - math.pi) < 1e-15

    def test_south_pole_round_trip(self):
        p = sphere.from_coords([0.0, 0.0, -1.0])
        q = sphere.from_angles(2, p.phi, p.thetas)
        assert np.max(np.abs(q.coords - p.coords)) < 1e-12

    def test_angle_domain_errors(self):
        with pytest.raises(DomainError):
            sphere.from_angles(1, -0.1)
        with pytest.raises(DomainError):
            sphere.from_angles(2, 0.0, [3.5])
        with pytest.raises(DomainError):
            sphere.from_angles(3, 0.0, [0.5])  # wrong angle count


class TestRotations:
    def test_euler_identity(self):
        u = sphere.rotation_from_euler(0.0, 0.0, 0.0)
        assert np.allclose(u.matrix, np.eye(3))

    def test_euler_z_quarter_turn(self):
        u = sphere.rotation_from_euler(math.pi / 2, 0.0, 0.0)
        assert np.allclose(u.matrix @ [1, 0, 0], [0, 1, 0], atol=1e-15)

    def test_euler_orthogonality_defect(self):
        u = sphere.rotation_from_euler(math.pi / 3, math.pi / 4, math.pi / 5)
        assert np.abs(u.matrix.T @ u.matrix - np.eye(3)).max() < 1e-12
        assert abs(np.linalg.det(u.matrix) - 1.0) < 1e-12

    def test_euler_round_trip(self, rng):
        for _ in range(50):
            u = random_rotation_so3(rng)
            v = sphere.rotation_from_euler(*sphere.euler_from_matrix(u.matrix))
            assert np.abs(u.matrix - v.matrix).max() < 1e-10

    def test_apply_identity_and_norm(self, rng):
        x = random_point(rng, 2)
        assert np.allclose(sphere.apply(sphere.rotation_identity(2), x).coords, x.coords)
        u = random_rotation_so3(rng)
        assert abs(np.linalg.norm(sphere.apply(u, x).coords) - 1.0) < 1e-12

    def test_apply_so2_quarter_turn(self):
        u = sphere.rotation_from_angle(math.pi / 2)
        x = sphere.from_angles(1, 0.0)
        assert np.allclose(sphere.apply(u, x).coords, [0.0, 1.0], atol=1e-15)

    def test_rotation_closure(self, rng):
        for _ in range(10):
            u, v = random_rotation_so3(rng), random_rotation_so3(rng)
            x = random_point(rng, 2)
            lhs = sphere.apply(u, sphere.apply(v, x)).coords
            rhs = sphere.apply(sphere.compose(u, v), x).coords
            assert np.abs(lhs - rhs).max() < 1e-10

    def test_dim_mismatch(self, rng):
        with pytest.raises(DomainError):
            sphere.apply(sphere.rotation_identity(1), random_point(rng, 2))


class TestQuadrature:
    def test_mass(self):
        for d in (1, 2, 3):
            q = sphere.product_quadrature(d, 16)
            assert abs(q.weights.sum() - sphere.surface_area(d)) < 1e-8

    def test_d1_trig_exactness(self, quad_s1):
        vals = np.cos(3.0 * quad_s1.phi)
        assert abs(quad_s1.integrate(vals)) < 1e-12

    def test_unsupported_dimension(self):
        with pytest.raises(UnsupportedDimensionError):
            sphere.product_quadrature(4, 8)

    def test_so3_weights_sum_to_one(self):
        for res in (6, 16):
            rq = sphere.so3_quadrature(res)
            assert abs(rq.weights.sum() - 1.0) < 1e-10
        rq = sphere.so3_axis_angle_quadrature(8)
        assert abs(rq.weights.sum() - 1.0) < 1e-10

    def test_so3_degree_one_schur(self):
        rq = sphere.so3_quadrature(16)
        phi, theta, psi = rq.euler
        from spheredeconv import harmonics
        d1 = harmonics.wigner_small_d_matrix(1, theta)
        m = np.arange(-1, 2)
        dmat = (np.exp(-1j * np.outer(phi, m))[:, :, None] * d1
                * np.exp(-1j * np.outer(psi, m))[:, None, :])
        mean = np.einsum("k,kqr->qr", rq.weights, dmat)
        assert np.abs(mean).max() < 1e-10

    def test_so3_haar_invariance(self, rng):
        rq = sphere.so3_quadrature(12)
        a = random_rotation_so3(rng).matrix
        for g in (lambda m: np.einsum("kii->k", m),
                  lambda m: np.einsum("kii->k", m) ** 2):
            plain = np.sum(rq.weights * g(rq.matrices))
            shifted = np.sum(rq.weights * g(np.einsum("ij,kjl->kil", a, rq.matrices)))
            assert abs(plain - shifted) < 1e-8


class TestVmfSampler:
    def test_uniform_case(self):
        pts = sphere.sample_vmf_sphere(sphere.from_coords([0, 0, 1.0]), 0.0, 10000, seed=1)
        resultant = np.linalg.norm(np.mean([p.coords for p in pts], axis=0))
        assert resultant < 0.05

    def test_weak_concentration_mean_direction(self):
        mean = sphere.from_coords([1.0, 1.0, 1.0])
        pts = sphere.sample_vmf_sphere(mean, 0.1, 100000, seed=2)
        direction = np.mean([p.coords for p in pts], axis=0)
        direction /= np.linalg.norm(direction)
        assert math.degrees(math.acos(np.clip(direction @ mean.coords, -1, 1))) < 10.0

    def test_strong_concentration_tail(self):
        mean = sphere.from_coords([0.0, 0.0, 1.0])
        pts = sphere.sample_vmf_sphere(mean, 100.0, 5000, seed=3)
        cosines = np.array([p.coords @ mean.coords for p in pts])
        assert cosines.min() > math.cos(math.radians(30.0))

    def test_circle_sampler(self):
        mean = sphere.from_angles(1, 1.0)
        pts = sphere.sample_vmf_sphere(mean, 4.0, 50000, seed=4)
        ang = np.array([p.phi for p in pts])
        resultant = np.abs(np.mean(np.exp(1j * ang)))
        # resultant length of a von Mises law is I1/I0
        from scipy.special import iv
        assert abs(resultant - iv(1, 4.0) / iv(0, 4.0)) < 0.02

    def test_negative_concentration_rejected(self):
        with pytest.raises(DomainError):
            sphere.sample_vmf_sphere(sphere.from_coords([0, 0, 1.0]), -1.0, 10, seed=0)


def _mean_d1_matrix(rotations, l):
    ang = np.array([r.angle for r in rotations])
    return np.array([[np.mean(np.cos(l * ang)), -np.mean(np.sin(l * ang))],
                     [np.mean(np.sin(l * ang)), np.mean(np.cos(l * ang))]])


def _mean_d2_matrix(rotations, l):
    from spheredeconv import harmonics
    eul = np.array([r.euler for r in rotations])
    dl = harmonics.wigner_small_d_matrix(l, eul[:, 1])
    m = np.arange(-l, l + 1)
    dmat = (np.exp(-1j * np.outer(eul[:, 0], m))[:, :, None] * dl
            * np.exp(-1j * np.outer(eul[:, 2], m))[:, None, :])
    return dmat.mean(axis=0)


class TestErrorSampler:
    def test_error_free(self):
        rots = sphere.sample_error(transforms.error_free(2), 5, seed=0)
        for r in rots:
            assert np.allclose(r.matrix, np.eye(3))

    def test_laplace_so3_transform_consistency(self):
        model = transforms.laplace(0.5)
        rots = sphere.sample_error(model, 100000, seed=5)
        mean = _mean_d2_matrix(rots, 1)
        se = 3.0 * 0.5 / math.sqrt(len(rots))
        assert np.abs(np.diag(mean) - 2.0 / 3.0).max() < 3e-3 + se
        assert np.abs(mean - np.diag(np.diag(mean))).max() < 0.01

    def test_vmf_so3_acceptance_and_trace(self):
        model = transforms.vmf_error(2.0, np.eye(3))
        rots = sphere.sample_error(model, 20000, seed=6)
        mean_tr = np.mean([np.trace(r.matrix) for r in rots])
        assert len(rots) == 20000
        assert mean_tr > 1.0

    @pytest.mark.parametrize("model,lmax", [
        (transforms.laplace(0.5), 3),
        (transforms.gaussian(0.5), 3),
        (transforms.rosenthal(math.pi / 2, 2.0), 3),
        (transforms.vmf_error(2.0, np.eye(3)), 3),
    ])
    def test_sampler_matches_transform_so3(self, model, lmax):
        n = 100000
        rots = sphere.sample_error(model, n, seed=7)
        blocks = transforms.transform_blocks(model, lmax)
        for l in range(1, lmax + 1):
            mean = _mean_d2_matrix(rots, l)
            # entrywise spread of D^l entries is at most 1
            tol = 4.0 / math.sqrt(n) + 4.0 * np.abs(mean - blocks.block(l)).std()
            assert np.abs(mean - blocks.block(l)).max() < max(tol, 0.02)

    @pytest.mark.parametrize("model,lmax", [
        (transforms.laplace(0.4, d=1), 3),
        (transforms.gaussian(0.6, d=1), 3),
        (transforms.vmf_error(1.5, np.eye(2), d=1), 3),
    ])
    def test_sampler_matches_transform_so2(self, model, lmax):
        n = 100000
        rots = sphere.sample_error(model, n, seed=8)
        blocks = transforms.transform_blocks(model, lmax)
        for l in range(1, lmax + 1):
            mean = _mean_d1_matrix(rots, l)
            assert np.abs(mean - blocks.block(l).real).max() < 0.02

    def test_rosenthal_point_mass_case(self):
        model = transforms.rosenthal(1.1, 1.0)
        rots = sphere.sample_error(model, 200, seed=9)
        angles = [sphere.rotation_angle(r.matrix) for r in rots]
        assert np.abs(np.asarray(angles) - 1.1).max() < 1e-3

    def test_unsupported_model(self):
        with pytest.raises(Exception):
            sphere.sample_error(transforms.ErrorModel("nope", 2), 5, seed=0)


class TestFibonacciGrid:
    def test_near_uniform(self):
        g = sphere.fibonacci_grid(400)
        assert len(g) == 400
        assert np.abs(np.linalg.norm(g.coords, axis=1) - 1.0).max() < 1e-12
        assert np.linalg.norm(g.coords.mean(axis=0)) < 0.01
