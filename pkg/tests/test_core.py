import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from advtomo import ValidationError, make_rng
from advtomo._validation import as_density_matrix
from advtomo.core import (
    from_hermitian_coords,
    gell_mann_matrices,
    hermitian_coords,
    hs_norm,
    op_norm,
    project_to_simplex,
    project_to_state,
    projector_coords,
    random_density_matrix,
    random_hermitian,
    trace_norm,
    truncate_rank,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def hermitian(draw, max_d=6):
    d = draw(st.integers(1, max_d))
    re = draw(arrays(float, (d, d), elements=finite))
    im = draw(arrays(float, (d, d), elements=finite))
    a = re + 1j * im
    return 0.5 * (a + a.conj().T)


def test_trace_norm_examples(rng):
    assert trace_norm(np.zeros((3, 3))) == 0.0
    assert trace_norm(np.diag([1.0, -1.0])) == pytest.approx(2.0)
    a = random_hermitian(6, rng)
    oracle = np.abs(np.linalg.eigvals(a)).sum()
    assert trace_norm(a) == pytest.approx(oracle, abs=1e-8)


def test_hs_norm_examples(rng):
    assert hs_norm(np.eye(4)) == pytest.approx(2.0)
    assert hs_norm(np.diag([1.0, -1.0])) == pytest.approx(np.sqrt(2))
    a = random_hermitian(7, rng)
    assert hs_norm(a) == pytest.approx(np.sqrt(np.sum(np.linalg.eigvalsh(a) ** 2)), abs=1e-8)


def test_non_hermitian_rejected():
    with pytest.raises(ValidationError):
        trace_norm(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValidationError):
        hs_norm(np.array([[0, 1j], [1j, 0]]))


def test_truncate_rank_examples(rng):
    a = np.diag([0.5, 0.3, 0.2])
    np.testing.assert_allclose(truncate_rank(a, 3), a, atol=1e-14)
    np.testing.assert_allclose(truncate_rank(np.diag([0.9, 0.1]), 1), np.diag([0.9, 0.0]), atol=1e-14)

    u, _ = np.linalg.qr(rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8)))
    lam = np.array([3.0, -2.0, 0.7, -0.4, 0, 0, 0, 0])
    a = (u * lam) @ u.conj().T
    gap = hs_norm(a - truncate_rank(a, 2))
    tail = np.sort(np.abs(np.linalg.eigvalsh(a)))[::-1][2:4]
    assert gap == pytest.approx(np.sqrt(np.sum(tail**2)), abs=1e-10)


def test_truncate_rank_range():
    with pytest.raises(ValidationError):
        truncate_rank(np.eye(3), 0)
    with pytest.raises(ValidationError):
        truncate_rank(np.eye(3), 4)


def test_truncate_rank_tie_break_is_deterministic():
    a = np.diag([0.5, -0.5, 0.1])
    out = truncate_rank(a, 1)
    np.testing.assert_array_equal(out, truncate_rank(a, 1))
    assert np.linalg.matrix_rank(out, tol=1e-9) == 1


def test_project_to_state_examples():
    rho = np.diag([0.7, 0.2, 0.1])
    np.testing.assert_allclose(project_to_state(rho), rho, atol=1e-14)
    np.testing.assert_allclose(project_to_state(np.diag([1.2, -0.2])), np.diag([1.0, 0.0]), atol=1e-14)
    np.testing.assert_allclose(project_to_state(np.diag([0.6, 0.6])), np.diag([0.5, 0.5]), atol=1e-14)


def test_project_to_simplex_matches_brute_force(rng):
    # oracle: minimize ||p - x|| over the simplex via active-set enumeration
    for _ in range(20):
        x = rng.normal(size=4)
        best = None
        for mask in range(1, 16):
            idx = [i for i in range(4) if mask >> i & 1]
            theta = (x[idx].sum() - 1) / len(idx)
            p = np.zeros(4)
            p[idx] = x[idx] - theta
            if np.all(p >= -1e-12):
                dist = np.linalg.norm(p - x)
                if best is None or dist < best[0]:
                    best = (dist, p)
        np.testing.assert_allclose(project_to_simplex(x), best[1], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(hermitian())
def test_schatten_monotonicity(a):
    t, h, o = trace_norm(a), hs_norm(a), op_norm(a)
    tol = 1e-9 * (1 + t)
    assert t >= h - tol
    assert h >= o - tol
    assert t <= np.sqrt(a.shape[0]) * h + tol


def test_cauchy_schwarz_equality_for_flat_spectrum(rng):
    u, _ = np.linalg.qr(rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5)))
    a = (u * np.array([1, -1, 1, -1, 1.0])) @ u.conj().T
    assert trace_norm(a) == pytest.approx(np.sqrt(5) * hs_norm(a), abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(hermitian(), st.data())
def test_truncation_rank_and_identity(a, data):
    d = a.shape[0]
    np.testing.assert_allclose(truncate_rank(a, d), a, atol=1e-9 * (1 + np.abs(a).max()))
    r = data.draw(st.integers(1, d))
    out = truncate_rank(a, r)
    assert np.sum(np.abs(np.linalg.eigvalsh(out)) > 1e-9 * (1 + np.abs(a).max())) <= r


def test_eckart_young_optimality(rng):
    a = random_hermitian(6, rng)
    best = hs_norm(a - truncate_rank(a, 2))
    for _ in range(200):
        g = rng.standard_normal((6, 2)) + 1j * rng.standard_normal((6, 2))
        b = g @ np.diag(rng.normal(size=2)) @ g.conj().T
        assert best <= hs_norm(a - 0.5 * (b + b.conj().T)) + 1e-12


@settings(max_examples=60, deadline=None)
@given(hermitian())
def test_project_to_state_is_a_state(a):
    rho = project_to_state(a)
    as_density_matrix(rho)
    np.testing.assert_allclose(project_to_state(rho), rho, atol=1e-9)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_gell_mann_orthonormal(d):
    g = gell_mann_matrices(d)
    gram = np.einsum("iab,jba->ij", g, g)
    np.testing.assert_allclose(gram, np.eye(d * d), atol=1e-12)
    np.testing.assert_allclose(np.einsum("iaa->i", g)[:-1], 0, atol=1e-12)


def test_gell_mann_d2_is_pauli():
    g = gell_mann_matrices(2) * np.sqrt(2)
    np.testing.assert_allclose(g[0], [[0, 1], [1, 0]])
    np.testing.assert_allclose(g[1], [[0, -1j], [1j, 0]])
    np.testing.assert_allclose(g[2], [[1, 0], [0, -1]])
    np.testing.assert_allclose(g[3], np.eye(2))


def test_hermitian_coords_round_trip_and_inner_product(rng):
    a, b = random_hermitian(4, rng), random_hermitian(4, rng)
    np.testing.assert_allclose(from_hermitian_coords(hermitian_coords(a), 4), a, atol=1e-12)
    assert hermitian_coords(a) @ hermitian_coords(b) == pytest.approx(np.trace(a @ b).real)
    v = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
    proj = np.einsum("ia,ib->iab", v, v.conj())
    np.testing.assert_allclose(projector_coords(v), hermitian_coords(proj), atol=1e-12)


def test_random_density_matrix_rank():
    rho = random_density_matrix(6, make_rng(1), rank=2)
    as_density_matrix(rho)
    assert np.linalg.matrix_rank(rho, tol=1e-10) == 2
