"""Closed-form limit objects, pinned by independent oracles.

The one-sided stable distribution function is checked against numerical
inversion of its characteristic function.  The joint-CF coefficients are
checked against literal summation over the rule mixture and, for the
single-type process, against an exact combinatorial reduction (every
die-or-split tree with n nodes has exactly (n+1)/2 leaves, which makes the
centred rule-count statistic deterministic and the joint CF available in
closed form).
"""

import numpy as np
import pytest
from scipy.integrate import quad

from critgw import (
    LimitTarget,
    additive_cf_slope,
    additive_mean,
    centering_vector,
    cf_quadratic_root,
    joint_cf,
    levy_cdf,
    s_lambda,
    stable_cf,
    theorem1_cf,
    theorem2_cf,
    theorem2_coeffs,
    theorem3_cf,
    theorem3_coeffs,
    unit_directions,
)
from critgw.limits import SingularSystemError, ZeroAdditiveMeanError, theorem1_scale


def gil_pelaez_cdf(x):
    """Numerical inversion of stable_cf: F(x) = 1/2 - (1/pi) int_0^inf
    Im(exp(-itx) cf(t)) / t dt.  Independent route to the distribution."""

    def integrand(t):
        return np.imag(np.exp(-1j * t * x) * stable_cf(t)) / t

    total = 0.0
    for a, b in [(1e-12, 1.0), (1.0, 10.0), (10.0, 100.0), (100.0, 2000.0)]:
        val, _ = quad(integrand, a, b, limit=400)
        total += val
    return 0.5 - total / np.pi


def mixture_table(spec, v):
    """Literal dict form of the eigenvector-weighted rule mixture."""
    acc = {}
    for k in range(spec.num_types):
        for n, p in zip(spec.counts[k], spec.probs[k]):
            key = tuple(int(x) for x in n)
            acc[key] = acc.get(key, 0.0) + float(v[k]) * float(p)
    return acc


def thm2_coeffs_oracle(spec, eigen, c):
    """Brute-force summation over the mixture support, scalar loops only."""
    v, u = eigen.v, eigen.u
    eta = eigen.centering @ np.asarray(c, dtype=float)
    table = mixture_table(spec, v)
    mean_u = sum(w * np.dot(n, u) for n, w in table.items())
    mean_eta = sum(w * np.dot(n, eta) for n, w in table.items())
    cov = sum(w * np.dot(n, u) * np.dot(n, eta) for n, w in table.items()) - mean_u * mean_eta
    var = sum(w * np.dot(n, eta) ** 2 for n, w in table.items()) - mean_eta**2
    a = cov - sum(v[s] * u[s] * (eta[s] - c[s]) for s in range(len(v))) - np.dot(c, v)
    b = -var + sum(v[s] * (c[s] - eta[s]) ** 2 for s in range(len(v))) - np.dot(c, v) ** 2
    return a, b


class TestStableCF:
    def test_value_at_zero(self):
        assert stable_cf(0.0) == 1.0 + 0j

    def test_value_at_one(self):
        val = stable_cf(1.0)
        assert val == pytest.approx(np.exp(-1 + 1j), abs=1e-12)
        assert val.real == pytest.approx(0.19877, abs=5e-5)
        assert val.imag == pytest.approx(0.30956, abs=5e-5)

    def test_hermitian_symmetry(self):
        for t in [0.1, 0.5, 1.0, 3.7]:
            assert stable_cf(-t) == pytest.approx(np.conj(stable_cf(t)), abs=1e-15)

    def test_modulus_bounded(self):
        t = np.linspace(-50, 50, 1001)
        assert (np.abs(stable_cf(t)) <= 1.0 + 1e-15).all()


class TestLevyCDF:
    def test_nonpositive_support(self):
        assert levy_cdf(0.0) == 0.0
        assert levy_cdf(-3.0) == 0.0

    def test_limits(self):
        assert levy_cdf(1e12) == pytest.approx(1.0, abs=1e-5)

    def test_value_at_two(self):
        from scipy.special import erfc

        assert levy_cdf(2.0) == pytest.approx(erfc(0.5), abs=1e-15)
        assert levy_cdf(2.0) == pytest.approx(0.4795, abs=1e-4)

    def test_matches_cf_inversion_oracle(self):
        for x in [0.25, 0.5, 1.0, 2.0, 5.0, 20.0]:
            assert levy_cdf(x) == pytest.approx(gil_pelaez_cdf(x), abs=2e-6)


class TestTheorem1CF:
    def test_orthogonal_direction_degenerates(self, eigens):
        spec, eigen, _ = eigens["e2"]
        c = np.array([1.0, -1.0])  # orthogonal to v
        for t in [-2.0, 0.5, 3.0]:
            assert theorem1_cf(spec, eigen, 0, c, t) == pytest.approx(1.0 + 0j, abs=1e-15)

    def test_binary_fission_reduces_to_stable(self, eigens):
        spec, eigen, _ = eigens["e1"]
        assert theorem1_cf(spec, eigen, 0, np.array([1.0]), 1.0) == pytest.approx(
            stable_cf(1.0), abs=1e-15
        )

    def test_asymmetric_scale(self, eigens):
        spec, eigen, _ = eigens["e4"]
        assert theorem1_scale(spec, eigen, 0, np.array([1.0, 1.0])) == pytest.approx(0.6, abs=1e-12)
        assert theorem1_cf(spec, eigen, 0, np.array([1.0, 1.0]), 1.0) == pytest.approx(
            stable_cf(0.6), abs=1e-15
        )


class TestAdditiveSlope:
    def test_binary_fission_constant_tables(self, eigens):
        spec, eigen, _ = eigens["e1"]
        g = {0: np.ones(2)}
        assert additive_mean(spec, eigen, g) == pytest.approx(1.0)
        assert additive_cf_slope(spec, eigen, g, 0) == pytest.approx(-(1 - 1j), abs=1e-12)

    def test_sign_flip(self, eigens):
        spec, eigen, _ = eigens["e1"]
        g = {0: -np.ones(2)}
        assert additive_cf_slope(spec, eigen, g, 0) == pytest.approx(-(1 + 1j), abs=1e-12)

    def test_asymmetric_type2(self, eigens):
        spec, eigen, _ = eigens["e4"]
        g = {0: np.ones(3), 1: np.ones(2)}
        expected = -(1.5) * (1 - 1j) / np.sqrt(15.0 / 16.0)
        assert additive_cf_slope(spec, eigen, g, 1) == pytest.approx(expected, abs=1e-12)

    def test_terminal_count_mean(self, eigens):
        spec, eigen, _ = eigens["e1"]
        g = {0: np.array([1.0, 0.0])}  # indicator of the extinction rule
        assert additive_mean(spec, eigen, g) == pytest.approx(0.5)

    def test_zero_mean_raises(self, eigens):
        spec, eigen, _ = eigens["e1"]
        g = {0: np.array([1.0, -1.0])}
        with pytest.raises(ZeroAdditiveMeanError):
            additive_cf_slope(spec, eigen, g, 0)

    def test_consistency_with_type_frequency_limit(self, eigens):
        # constant tables g_s = c_s turn the additive statistic into c.f
        rng = np.random.Generator(np.random.Philox(key=np.array([3, 1], dtype=np.uint64)))
        for name, (spec, eigen, _) in eigens.items():
            for _ in range(20):
                c = rng.normal(size=spec.num_types)
                if abs(c @ eigen.v) < 1e-6:
                    continue
                g = {k: np.full(spec.counts[k].shape[0], c[k]) for k in range(spec.num_types)}
                lhs = np.exp(additive_cf_slope(spec, eigen, g, 0))
                rhs = theorem1_cf(spec, eigen, 0, c, 1.0)
                assert abs(lhs - rhs) <= 1e-12


class TestCentering:
    def test_single_type_vanishes(self, eigens):
        _, eigen, _ = eigens["e1"]
        assert centering_vector(eigen, np.array([3.7])) == pytest.approx(0.0)

    def test_coupled_pair_direction(self, eigens):
        _, eigen, _ = eigens["e2"]
        np.testing.assert_allclose(centering_vector(eigen, np.array([1.0, 0.0])), [0.5, -0.5], atol=1e-12)

    def test_constant_directions_annihilated(self, eigens):
        for name, (_, eigen, _) in eigens.items():
            ones = np.ones(eigen.v.shape[0])
            np.testing.assert_allclose(centering_vector(eigen, 2.5 * ones), 0.0, atol=1e-10)

    def test_neumann_series_cross_check(self, eigens):
        # centering == sum_{n=0}^{200} residual^n (I - outer(1, v))
        for name in ("e4", "e2"):
            _, eigen, _ = eigens[name]
            dim = eigen.v.shape[0]
            proj = np.eye(dim) - np.tile(eigen.v, (dim, 1))
            total = np.zeros((dim, dim))
            power = np.eye(dim)
            for _ in range(201):
                total += power @ proj
                power = power @ eigen.residual
            np.testing.assert_allclose(total, eigen.centering, atol=1e-10)


class TestJointTypeCoeffs:
    def test_binary_fission_all_zero(self, eigens):
        spec, eigen, _ = eigens["e1"]
        for c in ([1.0], [-2.0], [0.3]):
            a, b = theorem2_coeffs(spec, eigen, np.array(c))
            assert a == pytest.approx(0.0, abs=1e-12)
            assert b == pytest.approx(0.0, abs=1e-12)

    def test_zero_direction(self, eigens):
        for name, (spec, eigen, _) in eigens.items():
            a, b = theorem2_coeffs(spec, eigen, np.zeros(spec.num_types))
            assert a == 0.0 and b == 0.0

    def test_coupled_pair_regression(self, eigens):
        spec, eigen, _ = eigens["e2"]
        c = np.array([1.0, -1.0])
        a, b = theorem2_coeffs(spec, eigen, c)
        oa, ob = thm2_coeffs_oracle(spec, eigen, c)
        assert a == pytest.approx(oa, abs=1e-12) == pytest.approx(0.0, abs=1e-12)
        assert b == pytest.approx(ob, abs=1e-12) == pytest.approx(0.0, abs=1e-12)

    def test_asymmetric_hand_values(self, eigens):
        spec, eigen, _ = eigens["e4"]
        a, b = theorem2_coeffs(spec, eigen, np.array([1.0, 0.0]))
        assert a == pytest.approx(-1.0 / 12.0, abs=1e-12)
        assert b == pytest.approx(-1.0 / 9.0, abs=1e-12)

    def test_matches_bruteforce_oracle(self, eigens):
        rng = np.random.Generator(np.random.Philox(key=np.array([5, 5], dtype=np.uint64)))
        for name, (spec, eigen, _) in eigens.items():
            for _ in range(25):
                c = rng.normal(size=spec.num_types) * 3
                a, b = theorem2_coeffs(spec, eigen, c)
                oa, ob = thm2_coeffs_oracle(spec, eigen, c)
                assert a == pytest.approx(oa, abs=1e-10)
                assert b == pytest.approx(ob, abs=1e-10)

    def test_drift_curvature_inequality(self, eigens):
        # A^2 <= -quad(u) * B for every direction (200 here; the acceptance
        # suite runs the full 1000 x 4)
        for name, (spec, eigen, quad) in eigens.items():
            dirs = unit_directions(spec.num_types, 200, seed=17, v=eigen.v)
            for c in dirs:
                a, b = theorem2_coeffs(spec, eigen, c)
                assert a * a <= -quad * b + 1e-9


class TestJointRuleCoeffs:
    def test_uniform_direction_degenerates(self, eigens):
        spec, eigen, _ = eigens["e1"]
        a, b = theorem3_coeffs(spec, eigen, 0, [(0,), (2,)], np.array([1.0, 1.0]))
        assert a == pytest.approx(0.0, abs=1e-12)
        assert b == pytest.approx(0.0, abs=1e-12)

    def test_zero_direction(self, eigens):
        spec, eigen, _ = eigens["e4"]
        a, b = theorem3_coeffs(spec, eigen, 0, [(0, 0), (1, 0)], np.zeros(2))
        assert a == 0.0 and b == 0.0

    def test_leaf_rule_hand_values(self, eigens):
        # tracked leaf rule of die-or-split: drift -1/2, curvature -1/4
        # (pinned by the exact reduction below)
        spec, eigen, _ = eigens["e1"]
        a, b = theorem3_coeffs(spec, eigen, 0, [(0,), (2,)], np.array([1.0, 0.0]))
        assert a == pytest.approx(-0.5, abs=1e-12)
        assert b == pytest.approx(-0.25, abs=1e-12)

    def test_unknown_rule_raises(self, eigens):
        spec, eigen, _ = eigens["e1"]
        with pytest.raises(KeyError):
            theorem3_coeffs(spec, eigen, 0, [(3,)], np.array([1.0]))

    def test_exact_single_type_reduction(self, eigens):
        # A die-or-split tree with n nodes has (n+1)/2 leaves and (n-1)/2
        # splits, so the centred count of (leaf, split) rules equals
        # (c0 - c2)/2 almost surely and the scaled type population tends to
        # the stable law.  Joint CF must therefore factor exactly.
        spec, eigen, _ = eigens["e1"]
        rng = np.random.Generator(np.random.Philox(key=np.array([9, 2], dtype=np.uint64)))
        for _ in range(40):
            c = rng.normal(size=2) * 2
            for k_imag in (-2.0, -1.0, -0.3, 0.0, 0.3, 1.0, 2.0):
                exact = np.exp(1j * (c[0] - c[1]) / 2.0) * stable_cf(k_imag)
                got = theorem3_cf(spec, eigen, 0, 0, [(0,), (2,)], c, k_imag)
                # this family sits on the double-root boundary, where float
                # noise eps in the coefficients moves the root by sqrt(eps)
                assert abs(got - exact) <= 1e-6


class TestQuadraticRoot:
    def test_all_zero_gives_zero(self):
        assert cf_quadratic_root(1.0, 0.0, 0.0, 0.0) == 0.0

    def test_pure_size_case(self):
        z = cf_quadratic_root(1.0, 0.0, 0.0, 0.5)
        expected = -(1 - 1j) / np.sqrt(2)
        assert z == pytest.approx(expected, abs=1e-12)

    def test_root_satisfies_quadratic(self):
        rng = np.random.Generator(np.random.Philox(key=np.array([8, 8], dtype=np.uint64)))
        for _ in range(200):
            quad = rng.uniform(0.3, 3.0)
            a = rng.normal()
            b = rng.normal()
            k_imag = rng.normal()
            w = rng.uniform(0.1, 1.0)
            z = cf_quadratic_root(quad, a, b, k_imag, w)
            residual = z * z + (2 * w * a * 1j / quad) * z + (w / quad) * (b + 2j * k_imag)
            assert abs(residual) <= 1e-12
            assert z.real <= 1e-15

    def test_strictly_negative_real_part_off_axis(self):
        z = cf_quadratic_root(1.0, 0.7, -0.2, 0.4)
        assert z.real < 0

    def test_continuity_tie_break(self):
        # both roots purely imaginary at K = 0: take the K -> 0+ limit
        z0 = cf_quadratic_root(1.0, 0.0, 1.0, 0.0)
        assert z0 == pytest.approx(1j, abs=1e-15)
        z_eps = cf_quadratic_root(1.0, 0.0, 1.0, 1e-9)
        assert abs(z_eps - z0) <= 1e-4

    def test_double_root_at_equality(self):
        # leaf-rule values sit exactly on the degeneracy boundary
        z = cf_quadratic_root(1.0, -0.5, -0.25, 0.0)
        assert z == pytest.approx(0.5j, abs=1e-15)


class TestJointCFs:
    def test_value_at_origin(self, eigens):
        for name, (spec, eigen, _) in eigens.items():
            c = np.zeros(spec.num_types)
            assert theorem2_cf(spec, eigen, 0, c, 0.0) == pytest.approx(1.0 + 0j, abs=1e-15)

    def test_binary_fission_reduces_to_stable_in_k(self, eigens):
        spec, eigen, _ = eigens["e1"]
        for k_imag in (-1.0, -0.2, 0.4, 2.0):
            got = theorem2_cf(spec, eigen, 0, np.array([0.7]), k_imag)
            assert got == pytest.approx(stable_cf(k_imag), abs=1e-12)

    def test_coupled_pair_exact_factorisation(self, eigens):
        # centred type counts are (1/2, -1/2) a.s., so the joint CF is a
        # deterministic phase times the stable CF
        spec, eigen, _ = eigens["e2"]
        rng = np.random.Generator(np.random.Philox(key=np.array([4, 4], dtype=np.uint64)))
        for _ in range(40):
            c = rng.normal(size=2) * 2
            for k_imag in (-1.0, 0.0, 0.5, 1.0):
                exact = np.exp(1j * (c[0] - c[1]) / 2.0) * stable_cf(k_imag)
                got = theorem2_cf(spec, eigen, 0, c, k_imag)
                # double-root boundary: sqrt(eps) root conditioning
                assert abs(got - exact) <= 1e-6

    def test_hermitian_symmetry(self, eigens):
        rng = np.random.Generator(np.random.Philox(key=np.array([6, 6], dtype=np.uint64)))
        spec, eigen, _ = eigens["e4"]
        for _ in range(30):
            c = rng.normal(size=2)
            k_imag = rng.normal()
            lhs = theorem2_cf(spec, eigen, 0, -c, -k_imag)
            rhs = np.conj(theorem2_cf(spec, eigen, 0, c, k_imag))
            assert abs(lhs - rhs) <= 1e-12
            lhs3 = theorem3_cf(spec, eigen, 0, 0, [(0, 0), (1, 0)], -c, -k_imag)
            rhs3 = np.conj(theorem3_cf(spec, eigen, 0, 0, [(0, 0), (1, 0)], c, k_imag))
            assert abs(lhs3 - rhs3) <= 1e-12

    def test_modulus_bounded(self, eigens):
        rng = np.random.Generator(np.random.Philox(key=np.array([7, 7], dtype=np.uint64)))
        for name, (spec, eigen, _) in eigens.items():
            for _ in range(50):
                c = rng.normal(size=spec.num_types) * 3
                k_imag = rng.normal() * 3
                assert abs(theorem2_cf(spec, eigen, 0, c, k_imag)) <= 1.0 + 1e-12

    def test_limit_target_dispatch(self, eigens):
        spec, eigen, _ = eigens["e4"]
        t2 = LimitTarget(kind="joint_type", spec=spec, eigen=eigen, root_type=0)
        c = np.array([0.4, -0.2])
        assert joint_cf(t2, c, 0.7) == theorem2_cf(spec, eigen, 0, c, 0.7)
        t3 = LimitTarget(
            kind="joint_rule", spec=spec, eigen=eigen, root_type=0, rule_type=0,
            rules=((0, 0), (1, 0), (0, 1)),
        )
        c3 = np.array([1.0, -0.5, 0.25])
        assert joint_cf(t3, c3, -0.4) == theorem3_cf(
            spec, eigen, 0, 0, [(0, 0), (1, 0), (0, 1)], c3, -0.4
        )
        t1 = LimitTarget(kind="type_frequencies", spec=spec, eigen=eigen, root_type=0)
        assert joint_cf(t1, np.array([1.0, 1.0]), 1.0) == pytest.approx(stable_cf(0.6), abs=1e-14)


class TestDepthDiscountedExpectation:
    def test_coupled_pair_closed_form(self, eigens):
        spec, eigen, _ = eigens["e2"]
        out = s_lambda(eigen.mean, 0.9)
        np.testing.assert_allclose(out, [10.0, 10.0], atol=1e-10)
        np.testing.assert_allclose(0.1 * out, eigen.u, atol=1e-10)

    def test_weighted_sum_identity(self, eigens):
        for name, (spec, eigen, _) in eigens.items():
            for lam in (0.5, 0.9, 0.99):
                val = eigen.v @ s_lambda(eigen.mean, lam)
                assert val == pytest.approx(1.0 / (1.0 - lam), abs=1e-10 / (1 - lam))

    def test_scaled_limit_is_right_eigenvector(self, eigens):
        spec, eigen, _ = eigens["e4"]
        errs = []
        for lam in (0.9, 0.99, 0.999):
            errs.append(np.abs((1 - lam) * s_lambda(eigen.mean, lam) - eigen.u).max())
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-3

    def test_resolvent_system_residual(self, eigens):
        for name, (spec, eigen, _) in eigens.items():
            dim = eigen.v.shape[0]
            for lam in (0.5, 0.9, 0.99):
                sol = s_lambda(eigen.mean, lam)
                residual = (np.eye(dim) - lam * eigen.mean) @ sol - np.ones(dim)
                assert np.abs(residual).max() <= 1e-10

    def test_singular_system_raises(self, eigens):
        _, eigen, _ = eigens["e1"]
        with pytest.raises(SingularSystemError):
            s_lambda(eigen.mean, 1.0)
