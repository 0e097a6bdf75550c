import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import mathieu_a

from dipolegap.errors import IndexOutOfRange, SignAmbiguous
from dipolegap.mathieu import (
    assemble_mathieu_matrix,
    count_negative,
    eval_eigenfunction,
    lowest_eigenvalue,
    mathieu_eigs,
)

LAMBDA0_Q1 = -1.070129704575391  # frozen; equals a_0(4)/4


def test_matrix_examples():
    assert np.array_equal(assemble_mathieu_matrix(0.0, 2), np.diag([4.0, 1, 0, 1, 4]))
    assert np.array_equal(assemble_mathieu_matrix(1.0, 1), [[1, 1, 0], [1, 0, 1], [0, 1, 1]])


@given(st.floats(-20, 20), st.integers(1, 40))
def test_matrix_symmetric(q, N):
    A = assemble_mathieu_matrix(q, N)
    assert np.array_equal(A, A.T)


@given(st.floats(0.01, 20))
def test_parity_pm_q(q):
    a = np.linalg.eigvalsh(assemble_mathieu_matrix(q, 40))
    b = np.linalg.eigvalsh(assemble_mathieu_matrix(-q, 40))
    assert np.allclose(a, b, atol=1e-10)


def test_free_spectrum():
    lam = mathieu_eigs(0.0, levels=5).eigenvalues
    assert np.allclose(lam, [0, 1, 1, 4, 4], atol=1e-12)


def test_small_q_perturbation():
    lam = lowest_eigenvalue(0.01)
    assert lam / (-2e-4) == pytest.approx(1.0, rel=0.05)
    assert lowest_eigenvalue(1e-3) / (-2e-6) == pytest.approx(1.0, rel=0.01)


def test_q1_against_characteristic_value():
    lam = lowest_eigenvalue(1.0)
    assert lam == pytest.approx(mathieu_a(0, 4.0) / 4, abs=1e-9)
    assert lam == pytest.approx(LAMBDA0_Q1, abs=1e-12)


@pytest.mark.parametrize("q", [0.3, 2.0, 7.5])
def test_higher_levels_against_characteristic_values(q):
    # even 2pi-periodic levels are a_{2k}(4q)/4, odd ones b_{2k}(4q)/4
    spec = mathieu_eigs(q, levels=5)
    ref = sorted([mathieu_a(0, 4 * q) / 4, mathieu_a(2, 4 * q) / 4, mathieu_b(2, 4 * q) / 4,
                  mathieu_a(4, 4 * q) / 4, mathieu_b(4, 4 * q) / 4])
    assert np.allclose(spec.eigenvalues, ref, atol=1e-8)


from scipy.special import mathieu_b  # noqa: E402


@given(st.floats(1e-3, 30), st.floats(1e-3, 30))
def test_lambda0_strictly_decreasing(q1, q2):
    if abs(q1 - q2) < 1e-6:
        return
    lo, hi = sorted((q1, q2))
    assert lowest_eigenvalue(lo) > lowest_eigenvalue(hi)


@given(st.floats(0.01, 20), st.floats(0.01, 20))
def test_lambda0_concave(q1, q2):
    mid = lowest_eigenvalue(0.5 * (q1 + q2))
    assert mid >= 0.5 * (lowest_eigenvalue(q1) + lowest_eigenvalue(q2)) - 1e-10


@pytest.mark.parametrize("q", [0.5, 5.0, 20.0])
def test_truncation_error_decreases(q):
    d = [abs(np.linalg.eigvalsh(assemble_mathieu_matrix(q, N))[0]
             - np.linalg.eigvalsh(assemble_mathieu_matrix(q, 2 * N))[0]) for N in range(2, 16)]
    d = [x for x in d if x > 1e-12]  # above the rounding floor
    assert len(d) >= 3
    assert all(a > b for a, b in zip(d, d[1:]))


def test_negative_for_all_positive_q():
    for q in (1e-2, 1e-1, 1.0, 10.0):
        assert lowest_eigenvalue(q) < 0


def test_count_negative():
    assert count_negative(0.0) == 0
    assert count_negative(0.5) >= 1
    qs = np.linspace(0.1, 20, 40)
    counts = [count_negative(q) for q in qs]
    assert counts == sorted(counts)
    assert counts[-1] == 5


def test_count_negative_sign_ambiguous():
    # lambda_1 crosses zero between q = 1.6 and 2
    lo, hi = 1.6, 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mathieu_eigs(mid, levels=2).eigenvalues[1] > 0:
            lo = mid
        else:
            hi = mid
    with pytest.raises(SignAmbiguous):
        count_negative(0.5 * (lo + hi))


def test_eigenfunction_normalisation_and_shape():
    assert eval_eigenfunction(mathieu_eigs(0.0), 0, 1.234) == pytest.approx(1 / math.sqrt(2 * math.pi))
    spec = mathieu_eigs(5.0)
    th = np.linspace(0, 2 * np.pi, 2001)
    y = eval_eigenfunction(spec, 0, th)
    assert np.trapezoid(y**2, th) == pytest.approx(1.0, abs=1e-10)
    assert th[np.argmax(y)] == pytest.approx(math.pi, abs=1e-2)


def test_eigenfunction_solves_equation():
    q = 2.0
    spec = mathieu_eigs(q)
    th = np.linspace(0, 2 * np.pi, 50)
    for n in range(4):
        y = eval_eigenfunction(spec, n, th)
        y2 = eval_eigenfunction(spec, n, th, derivative=2)
        assert np.allclose(-y2 + 2 * q * np.cos(th) * y, spec.eigenvalues[n] * y, atol=1e-8)


def test_index_out_of_range():
    with pytest.raises(IndexOutOfRange):
        mathieu_eigs(1.0, levels=3).coefficients(5)
