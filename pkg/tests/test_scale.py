import numpy as np
import pytest

from spinpst import scale

from _oracles import cubic_from_gram, random_unitary

TABLE_1A = {4: (12.493, 0.435), 5: (14.391, 0.597), 6: (14.132, 0.714)}
ROOT_LISTS = {
    4: (0.435, 0.660, 0.828),
    5: (0.597, 0.794, 0.866),
    6: (0.714, 0.888, 0.931),
}


def random_psd(rng, n):
    z = rng.standard_normal((n + 2, n)) + 1j * rng.standard_normal((n + 2, n))
    return z.conj().T @ z / (n + 2)


class TestGram:
    def test_zero_block(self):
        g = scale.gram(np.zeros((7, 3), dtype=complex))
        assert np.abs(g.g).max() == 0

    def test_orthonormal_columns(self, rng):
        q = np.linalg.qr(rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3)))[0]
        g = scale.gram(q)
        assert np.abs(g.g - np.eye(3)).max() < 1e-12

    def test_psd(self, rng):
        for _ in range(20):
            v = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
            g = scale.gram(v)
            assert np.linalg.eigvalsh(g.g).min() > -1e-12


class TestLambdaPolynomial:
    def test_degree_one(self):
        g = np.array([[0.37 + 0j]])
        poly = scale.lambda_polynomial(g)
        assert np.allclose(poly.coeffs, [1.0, -0.37])
        assert scale.real_roots(poly)[0] == pytest.approx(np.sqrt(0.37), abs=1e-12)

    def test_scalar_matrix_triple_root(self):
        mu2 = 0.49
        poly = scale.lambda_polynomial(mu2 * np.eye(3, dtype=complex))
        roots = scale.real_roots(poly)
        assert len(roots) == 3
        assert np.allclose(roots, np.sqrt(mu2), atol=1e-4)

    def test_matches_cubic_oracle(self, rng):
        for _ in range(50):
            g = random_psd(rng, 3)
            poly = scale.lambda_polynomial(g)
            assert np.allclose(poly.coeffs, cubic_from_gram(g), atol=1e-10)

    def test_coefficients_real_many_grams(self, rng):
        worst = 0.0
        for _ in range(1000):
            n = rng.integers(2, 5)
            g = random_psd(rng, int(n))
            poly = scale.lambda_polynomial(g)
            worst = max(worst, np.abs(np.imag(poly.coeffs)).max())
        assert worst == 0.0  # coefficients are stored real; reality enforced inside

    def test_monic(self, rng):
        poly = scale.lambda_polynomial(random_psd(rng, 4))
        assert poly.coeffs[0] == 1.0
        assert poly.degree == 4

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            scale.lambda_polynomial(np.array([[1.0, 0.5], [0.1, 1.0]], dtype=complex))


class TestRealRoots:
    @pytest.mark.parametrize("n_er", [4, 5, 6])
    def test_published_root_lists(self, chain10, part10, n_er):
        tau0 = TABLE_1A[n_er][0]
        roots = scale.roots_at(chain10, part10(n_er), 2, tau0)
        assert len(roots) == 3
        for got, want in zip(roots, ROOT_LISTS[n_er]):
            assert got == pytest.approx(want, abs=5e-4)

    def test_unitary_submatrix_roots_in_range(self, rng):
        for _ in range(25):
            u = random_unitary(rng, 9)
            v = u[:5, :2]
            roots = scale.real_roots(scale.lambda_polynomial(scale.gram(v).g))
            assert np.all(roots >= 0) and np.all(roots <= 1 + 1e-9)

    def test_column_permutation_invariance(self, vhat_at, rng):
        v = vhat_at(5).v_hat
        base = scale.real_roots(scale.lambda_polynomial(scale.gram(v).g))[0]
        for _ in range(5):
            perm = rng.permutation(3)
            r = scale.real_roots(scale.lambda_polynomial(scale.gram(v[:, perm]).g))[0]
            assert abs(r - base) < 1e-8


class TestScan:
    @pytest.mark.parametrize("n_er", [4, 5, 6])
    def test_table_1a(self, chain10, part10, n_er):
        res = scale.scan(chain10, part10(n_er), 2, 0.0, 20.0, 0.001)
        tau_ref, lam_ref = TABLE_1A[n_er]
        assert res.tau0 == pytest.approx(tau_ref, abs=1e-9)
        assert res.lambda_min == pytest.approx(lam_ref, abs=5e-4)
        assert res.tau0 == pytest.approx(res.tau_argmax + 0.001, abs=1e-9)

    def test_single_point_range(self, chain10, part10):
        res = scale.scan(chain10, part10(5), 2, 0.0, 0.0, 0.001)
        assert res.tau0 == 0.0
        assert res.lambda_min < 1e-12

    def test_bell_shape_near_peak(self, chain10, part10):
        res = scale.scan(chain10, part10(5), 2, 0.0, 20.0, 0.001)
        mins = res.roots[:, 0]
        i0 = int(np.argmax(mins))
        for dt in (-0.05, 0.05):
            j = i0 + int(round(dt / 0.001))
            assert mins[j] >= 0.9 * mins[i0]

    def test_threaded_scan_matches_serial(self, chain10, part10):
        a = scale.scan(chain10, part10(4), 2, 0.0, 2.0, 0.001)
        b = scale.scan(chain10, part10(4), 2, 0.0, 2.0, 0.001, threads=2)
        assert np.array_equal(a.roots, b.roots)

    def test_empty_range_rejected(self, chain10, part10):
        with pytest.raises(ValueError):
            scale.scan(chain10, part10(5), 2, 1.0, 0.0, 0.001)
        with pytest.raises(ValueError):
            scale.scan(chain10, part10(5), 2, 0.0, 1.0, -0.1)

    def test_scan_roots_match_polynomial_route(self, chain10, part10, tmap10):
        # dual route: batched Gram spectra vs determinant polynomial + companion
        res = scale.scan(chain10, part10(5), 2, 14.0, 14.5, 0.1)
        for tau, row in zip(res.taus, res.roots):
            direct = scale.roots_at(chain10, part10(5), 2, tau)
            assert np.allclose(row, direct, atol=1e-9)


class TestFeasibility:
    def test_minimum_er_dimension(self):
        f = scale.feasibility(n_er=4, n_s=3, k=2)
        assert f.required_min == 5
        assert f.feasible and f.n_er_k == 6

    def test_infeasible(self):
        f = scale.feasibility(n_er=3, n_s=3, k=2)
        assert not f.feasible and f.n_er_k == 3

    def test_counting_bound_weaker(self):
        for n_s in (2, 3, 4):
            for k in (1, 2):
                f = scale.feasibility(6, n_s, k)
                assert f.required_min > f.counting_bound
