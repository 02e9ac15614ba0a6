import math

import mpmath as mp
import numpy as np
import pytest

from spheredeconv import harmonics, sphere
from spheredeconv.errors import DegreeOverflowError

from conftest import random_point


def direct_wigner_entry(l, q, r, theta, dps=50):
    """Direct alternating-sum evaluation at extended precision (test oracle)."""
    with mp.workdps(dps):
        th = mp.mpf(theta)
        c = mp.sqrt(mp.factorial(2 * l + 1 - q) * mp.factorial(q - 1)
                    * mp.factorial(2 * l + 1 - r) * mp.factorial(r - 1))
        tot = mp.mpf(0)
        for k in range(max(0, r - q), min(2 * l + 1 - q, r - 1) + 1):
            num = ((-1) ** (k + q - r) * mp.cos(th / 2) ** (2 * l - 2 * k + r - q)
                   * mp.sin(th / 2) ** (2 * k + q - r))
            den = (mp.factorial(2 * l + 1 - q - k) * mp.factorial(r - 1 - k)
                   * mp.factorial(k + q - r) * mp.factorial(k))
            tot += num / den
        return float(c * tot)


class TestDimension:
    def test_known_values(self):
        assert harmonics.n_dl(1, 5) == 2
        assert harmonics.n_dl(2, 3) == 7
        assert harmonics.n_dl(3, 2) == 9
        assert harmonics.n_dl(3, 1) == 4

    def test_degree_zero(self):
        for d in range(1, 8):
            assert harmonics.n_dl(d, 0) == 1

    def test_matches_product_formula(self):
        for d in range(2, 6):
            for l in range(1, 12):
                expected = (2 * l + d - 1) * math.factorial(l + d - 2) \
                    // (math.factorial(l) * math.factorial(d - 1))
                assert harmonics.n_dl(d, l) == expected

    def test_stacking_identity(self):
        # the recursive basis concatenates one block per lower degree
        for l in range(0, 8):
            assert harmonics.n_dl(3, l) == sum(harmonics.n_dl(2, j) for j in range(l + 1))


class TestWignerMatrices:
    def test_degree_zero_and_identity(self):
        assert np.allclose(harmonics.wigner_small_d(0, 1.0).matrix, [[1.0]])
        assert np.allclose(harmonics.wigner_small_d(1, 0.0).matrix, np.eye(3), atol=1e-15)

    def test_middle_entry_is_cosine(self):
        w = harmonics.wigner_small_d(1, math.pi / 2)
        assert abs(w.entry(2, 2)) < 1e-15
        w = harmonics.wigner_small_d(1, 0.7)
        assert abs(w.entry(2, 2) - math.cos(0.7)) < 1e-14

    def test_orthogonality(self, rng):
        for l in (1, 4, 12, 32):
            theta = rng.uniform(0.1, 3.0)
            m = harmonics.wigner_small_d_matrix(l, theta)
            assert np.abs(m @ m.T - np.eye(2 * l + 1)).max() < 1e-9

    @pytest.mark.parametrize("l", [1, 5, 16, 64, 128])
    def test_against_extended_precision_sum(self, l, rng):
        theta = float(rng.uniform(0.05, 3.1))
        m = harmonics.wigner_small_d_matrix(l, theta)
        for _ in range(6):
            q = int(rng.integers(1, 2 * l + 2))
            r = int(rng.integers(1, 2 * l + 2))
            assert abs(m[q - 1, r - 1] - direct_wigner_entry(l, q, r, theta)) < 1e-8

    def test_degree_cap(self):
        with pytest.raises(DegreeOverflowError):
            harmonics.wigner_small_d_matrix(129, 0.5)

    def test_column_slice_matches_full_matrix(self, rng):
        theta = rng.uniform(0.1, 3.0, size=5)
        cols = harmonics.wigner_d0_columns(6, theta)
        for l in (1, 3, 6):
            full = harmonics.wigner_small_d_matrix(l, theta)
            assert np.abs(cols[l] - full[:, :, l]).max() < 1e-12


class TestBasisValues:
    def test_d1_values(self):
        x = sphere.from_angles(1, 0.0)
        assert np.allclose(harmonics.eval_basis_d1(1, x), [1 / math.sqrt(math.pi), 0])
        x = sphere.from_angles(1, math.pi / 4)
        assert np.allclose(harmonics.eval_basis_d1(2, x), [0, 1 / math.sqrt(math.pi)], atol=1e-15)
        x = sphere.from_angles(1, 0.7)
        assert abs(np.sum(np.abs(harmonics.eval_basis_d1(3, x)) ** 2) - 1 / math.pi) < 1e-14

    def test_d2_north_pole(self):
        x = sphere.from_coords([0.0, 0.0, 1.0])
        b = harmonics.eval_basis_d2(1, x)
        expected = np.zeros(3, dtype=complex)
        expected[1] = math.sqrt(3.0 / (4.0 * math.pi))
        assert np.abs(b - expected).max() < 1e-14

    def test_d2_equator_zero(self):
        x = sphere.from_angles(2, 0.0, [math.pi / 2])
        assert abs(harmonics.eval_basis_d2(1, x)[1]) < 1e-15

    def test_constants(self, rng):
        for d, expect in ((1, 1 / math.sqrt(2 * math.pi)),
                          (2, 1 / math.sqrt(4 * math.pi)),
                          (3, 1 / math.sqrt(2 * math.pi ** 2))):
            x = random_point(rng, d)
            b = harmonics.eval_basis(d, 0, x)
            assert b.shape == (1,)
            assert abs(b[0] - expect) < 1e-14

    def test_d3_block_length(self, rng):
        x = random_point(rng, 3)
        assert harmonics.eval_basis_general(3, 1, x).shape == (4,)
        assert harmonics.eval_basis_general(3, 5, x).shape == (harmonics.n_dl(3, 5),)

    def test_addition_identity(self, rng):
        for d in (1, 2, 3):
            nu = sphere.surface_area(d)
            for l in range(0, 9):
                x = random_point(rng, d)
                b = harmonics.eval_basis(d, l, x)
                assert abs(np.sum(np.abs(b) ** 2) - harmonics.n_dl(d, l) / nu) < 1e-9


class TestOrthonormality:
    def test_d2_full_gram(self, quad_s2):
        lmax = 12
        table = harmonics.BasisTable.for_grid(quad_s2, lmax)
        b = np.concatenate([table.block(l) for l in range(lmax + 1)], axis=1)
        gram = (b.conj() * quad_s2.weights[:, None]).T @ b
        assert np.abs(gram - np.eye(gram.shape[0])).max() < 1e-8

    def test_d1_full_gram(self, quad_s1):
        lmax = 12
        table = harmonics.BasisTable.for_grid(quad_s1, lmax)
        b = np.concatenate([table.block(l) for l in range(lmax + 1)], axis=1)
        gram = (b.conj() * quad_s1.weights[:, None]).T @ b
        assert np.abs(gram - np.eye(gram.shape[0])).max() < 1e-8

    def test_d3_gram(self):
        q = sphere.product_quadrature(3, 12)
        lmax = 4
        table = harmonics.BasisTable.for_grid(q, lmax)
        b = np.concatenate([table.block(l) for l in range(lmax + 1)], axis=1)
        gram = (b.conj() * q.weights[:, None]).T @ b
        assert np.abs(gram - np.eye(gram.shape[0])).max() < 1e-8

    def test_single_harmonic_integrates_to_zero(self, quad_s2):
        table = harmonics.BasisTable.for_grid(quad_s2, 10)
        for l in (1, 5, 10):
            vals = quad_s2.weights @ table.block(l)
            assert np.abs(vals).max() < 1e-9

    def test_squared_modulus_normalized(self, quad_s2):
        table = harmonics.BasisTable.for_grid(quad_s2, 4)
        vals = table.block(1)[:, 2]  # one basis element of degree 1
        assert abs(quad_s2.integrate(np.abs(vals) ** 2) - 1.0) < 1e-9


class TestRotationCovariance:
    def test_reconstruction_via_quadrature(self, quad_s2, rng):
        # values at rotated points are reproduced by quadrature inner products
        from conftest import random_rotation_so3
        u = random_rotation_so3(rng)
        x = random_point(rng, 2)
        table = harmonics.BasisTable.for_grid(quad_s2, 4)
        rotated = sphere.SphereGrid.from_coords(quad_s2.coords @ u.matrix.T)
        table_u = harmonics.BasisTable.for_grid(rotated, 4)
        for l in (1, 3):
            # inner[q, r] = <B^l_q(u .), B^l_r>_2 by quadrature
            inner = (table_u.block(l) * quad_s2.weights[:, None]).T @ table.block(l).conj()
            bx = harmonics.eval_basis(2, l, x)
            lhs = harmonics.eval_basis(2, l, sphere.apply(u, x))
            rhs = inner @ bx
            assert np.abs(lhs - rhs).max() < 1e-8
