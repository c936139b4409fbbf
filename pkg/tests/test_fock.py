import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln

from vibronic import (
    MotionalDensityMatrix,
    Truncation,
    TruncationError,
    coherent_rho,
    coherent_vector,
    displacement_matrix,
    laguerre_gen,
    log_factorial_ratio,
    moments_from_rho,
    number_rho,
    thermal_rho,
    trace_distance,
)
from vibronic.fock import displaced_diagonals


def laguerre_direct(n, k, x):
    """Independent oracle: direct polynomial summation of L_n^(k)."""
    total = 0.0
    for i in range(n + 1):
        log_binom = gammaln(n + k + 1) - gammaln(n - i + 1) - gammaln(k + i + 1)
        total += (-1) ** i * math.exp(log_binom - gammaln(i + 1)) * x**i
    return total


class TestLaguerre:
    @pytest.mark.parametrize("k", [0, 1, 3])
    @pytest.mark.parametrize("x", [0.0, 0.09, 2.7])
    def test_degree_zero_is_one(self, k, x):
        assert laguerre_gen(0, k, x) == 1.0

    def test_closed_form_degree_one(self):
        assert laguerre_gen(1, 0, 0.09) == pytest.approx(0.91, abs=1e-14)

    def test_closed_form_degree_two(self):
        # 1 - 2x + x^2/2 at x = 0.09
        assert laguerre_gen(2, 0, 0.09) == pytest.approx(0.82405, abs=1e-14)

    @given(
        n=st.integers(min_value=0, max_value=30),
        k=st.integers(min_value=0, max_value=4),
        x=st.floats(min_value=0.0, max_value=4.0, allow_nan=False),
    )
    @settings(max_examples=150, deadline=None)
    def test_matches_direct_summation(self, n, k, x):
        ref = laguerre_direct(n, k, x)
        assert laguerre_gen(n, k, x) == pytest.approx(ref, rel=1e-10, abs=1e-12)

    @pytest.mark.parametrize("n,k,x", [(12, 2, 0.09), (25, 0, 3.3), (40, 4, 1.0)])
    def test_matches_scipy(self, n, k, x):
        assert laguerre_gen(n, k, x) == pytest.approx(
            float(eval_genlaguerre(n, k, x)), rel=1e-12
        )


class TestLogFactorialRatio:
    @pytest.mark.parametrize("n", [0, 5, 1000])
    def test_empty_product(self, n):
        assert log_factorial_ratio(n, 0) == 0.0

    def test_small_values(self):
        assert log_factorial_ratio(0, 2) == pytest.approx(math.log(2.0), abs=1e-14)
        assert log_factorial_ratio(3, 2) == pytest.approx(math.log(20.0), abs=1e-14)

    def test_huge_arguments_do_not_overflow(self):
        value = log_factorial_ratio(10**6, 3)
        assert value == pytest.approx(3 * math.log(10**6), rel=1e-9)

    @given(n=st.integers(min_value=0, max_value=500), k=st.integers(min_value=0, max_value=30))
    @settings(max_examples=100, deadline=None)
    def test_matches_gammaln(self, n, k):
        ref = float(gammaln(n + k + 1) - gammaln(n + 1))
        assert log_factorial_ratio(n, k) == pytest.approx(ref, rel=1e-12, abs=1e-10)


class TestCoherentVector:
    def test_vacuum(self):
        vec = coherent_vector(0.0, Truncation(8, 1e-10))
        assert vec.amplitudes[0] == 1.0
        assert np.all(vec.amplitudes[1:] == 0.0)

    def test_poisson_mode_at_mean(self):
        vec = coherent_vector(math.sqrt(8.0), Truncation(64, 1e-10))
        mags = np.abs(vec.amplitudes)
        # the mode of a Poisson with integer mean 8 sits at n = 7 and n = 8
        assert mags[8] >= mags.max() - 1e-15
        assert int(np.argmax(mags)) in (7, 8)

    def test_truncation_error_for_tight_cutoff(self):
        with pytest.raises(TruncationError):
            coherent_vector(math.sqrt(8.0), Truncation(5, 1e-10))

    @pytest.mark.parametrize("alpha", [0.3, 1.5 + 0.5j, math.sqrt(8.0)])
    def test_norm_within_tail(self, alpha):
        trunc = Truncation(64, 1e-10)
        vec = coherent_vector(alpha, trunc)
        assert abs(vec.norm() - 1.0) < trunc.tail_tol


class TestDisplacementMatrix:
    def test_zero_is_identity(self):
        trunc = Truncation(16, 1e-10)
        assert np.allclose(displacement_matrix(0.0, trunc), np.eye(17))

    def test_column_zero_is_coherent(self):
        trunc = Truncation(64, 1e-10)
        alpha = 1.1 - 0.6j
        mat = displacement_matrix(alpha, trunc)
        vec = coherent_vector(alpha, trunc).amplitudes
        half = trunc.dim // 2
        assert np.max(np.abs(mat[:half, 0] - vec[:half])) < 1e-10

    @pytest.mark.parametrize("alpha", [0.5, 2.0, 1.0 + 1.0j])
    def test_inverse_composition(self, alpha):
        trunc = Truncation(64, 1e-10)
        prod = displacement_matrix(alpha, trunc) @ displacement_matrix(-alpha, trunc)
        half = trunc.dim // 2
        assert np.max(np.abs(prod[:half, :half] - np.eye(trunc.dim)[:half, :half])) < 1e-8

    def test_matches_exponential_oracle(self):
        trunc = Truncation(48, 1e-10)
        alpha = 1.3 + 0.7j
        a = np.diag(np.sqrt(np.arange(1, trunc.dim)), k=1)
        oracle = expm(alpha * a.conj().T - np.conj(alpha) * a)
        half = trunc.dim // 2
        assert np.max(np.abs((displacement_matrix(alpha, trunc) - oracle)[:half, :half])) < 1e-12

    def test_unitarity_defect_confined_to_top_quarter(self):
        trunc = Truncation(64, 1e-10)
        mat = displacement_matrix(2.0, trunc)
        defect = mat.conj().T @ mat - np.eye(trunc.dim)
        keep = 3 * trunc.dim // 4
        assert np.max(np.abs(defect[:keep, :keep])) < 1e-8

    def test_precondition(self):
        with pytest.raises(TruncationError):
            displacement_matrix(5.0, Truncation(16, 1e-10))


class TestDisplacedDiagonals:
    @pytest.mark.parametrize("alpha", [0.4 + 0.2j, 3.0, 2.8 + 5.0j])
    def test_coherent_analytic(self, alpha):
        c = 1.2
        rho = coherent_rho(c, Truncation(48, 1e-10))
        lam = abs(c - alpha) ** 2
        n_upper = int(lam + 10 * math.sqrt(lam) + 30)
        diag = displaced_diagonals(rho, alpha, n_upper)
        n = np.arange(n_upper + 1)
        expected = np.exp(-lam + n * math.log(lam) - gammaln(n + 1))
        assert np.max(np.abs(diag.real - expected)) < 1e-12
        assert np.max(np.abs(diag.imag)) < 1e-13


def number_operator_moments(rho):
    """Independent oracle: moments via explicit operator matrices and traces."""
    entries = rho.entries if isinstance(rho, MotionalDensityMatrix) else np.asarray(rho)
    dim = entries.shape[0]
    a = np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)
    num = a.conj().T @ a
    return {
        "mean_a": np.trace(entries @ a),
        "mean_a2": np.trace(entries @ a @ a),
        "mean_n": np.trace(entries @ num).real,
        "mean_na": np.trace(entries @ num @ a),
        "mean_n2": np.trace(entries @ num @ num).real,
    }


class TestMoments:
    def test_vacuum(self):
        m = moments_from_rho(number_rho(0, Truncation(8, 1e-10)))
        assert m.mean_a == 0 and m.mean_a2 == 0 and m.mean_n == 0
        assert m.mean_na == 0 and m.mean_n2 == 0

    def test_coherent_analytic(self):
        alpha = 0.9 - 0.4j
        m = moments_from_rho(coherent_rho(alpha, Truncation(48, 1e-10)))
        lam = abs(alpha) ** 2
        assert m.mean_a == pytest.approx(alpha, abs=1e-12)
        assert m.mean_a2 == pytest.approx(alpha**2, abs=1e-12)
        assert m.mean_n == pytest.approx(lam, abs=1e-12)
        assert m.mean_na == pytest.approx(lam * alpha, abs=1e-12)
        assert m.mean_n2 == pytest.approx(lam**2 + lam, abs=1e-12)

    def test_number_state(self):
        m = moments_from_rho(number_rho(1, Truncation(8, 1e-10)))
        assert m.mean_a == 0
        assert m.mean_n == 1.0
        assert m.mean_n2 == 1.0

    def test_thermal_moments(self):
        n_bar = 2.0
        m = moments_from_rho(thermal_rho(n_bar, Truncation(256, 1e-10)))
        assert m.mean_n == pytest.approx(n_bar, abs=1e-8)
        assert m.mean_n2 == pytest.approx(2 * n_bar**2 + n_bar, abs=1e-7)

    def test_matches_operator_matrix_oracle(self, rng):
        dim = 24
        raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        rho = raw @ raw.conj().T
        rho /= np.trace(rho).real
        got = moments_from_rho(rho)
        want = number_operator_moments(rho)
        assert got.mean_a == pytest.approx(want["mean_a"], abs=1e-12)
        assert got.mean_a2 == pytest.approx(want["mean_a2"], abs=1e-12)
        assert got.mean_n == pytest.approx(want["mean_n"], abs=1e-12)
        assert got.mean_na == pytest.approx(want["mean_na"], abs=1e-12)
        assert got.mean_n2 == pytest.approx(want["mean_n2"], abs=1e-12)

    def test_moment_set_invariants(self, rng):
        for _ in range(20):
            dim = 12
            raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            rho = raw @ raw.conj().T
            rho /= np.trace(rho).real
            m = moments_from_rho(rho)
            assert m.mean_n >= -1e-12
            assert m.mean_n2 >= m.mean_n**2 - 1e-12
            assert abs(m.mean_a) ** 2 <= m.mean_n + 1e-12
            m.validate()


class TestDensityMatrixValidation:
    def test_valid_state_passes(self):
        coherent_rho(1.0, Truncation(32, 1e-10)).validate(1e-10)

    def test_non_hermitian_rejected(self):
        bad = np.eye(4, dtype=complex)
        bad[0, 1] = 0.5
        with pytest.raises(ValueError, match="Hermiticity"):
            MotionalDensityMatrix(bad).validate()

    def test_wrong_trace_rejected(self):
        with pytest.raises(ValueError, match="trace"):
            MotionalDensityMatrix(0.5 * np.eye(4)).validate(1e-10)

    def test_negative_eigenvalue_rejected(self):
        bad = np.diag([1.5, -0.5, 0.0, 0.0]).astype(complex)
        with pytest.raises(ValueError, match="eigenvalue"):
            MotionalDensityMatrix(bad).validate(1e-6)


class TestTraceDistance:
    def test_identical_states(self):
        rho = coherent_rho(1.0, Truncation(32, 1e-10))
        assert trace_distance(rho, rho) == 0.0

    def test_orthogonal_states(self):
        trunc = Truncation(8, 1e-10)
        d = trace_distance(number_rho(0, trunc), number_rho(1, trunc))
        assert d == pytest.approx(1.0, abs=1e-12)

    def test_mixed_dimensions(self):
        a = number_rho(0, Truncation(4, 1e-10))
        b = number_rho(0, Truncation(9, 1e-10))
        assert trace_distance(a, b) == pytest.approx(0.0, abs=1e-14)
