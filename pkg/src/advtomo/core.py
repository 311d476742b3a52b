"""Hermitian matrix numerics: norms, truncation, projections and bases.

Matrices are plain ``complex128`` arrays. Functions validate their inputs
through :mod:`advtomo._validation` and never mutate them.
"""

import numpy as np

from ._validation import ValidationError, as_hermitian

__all__ = [
    "trace_norm",
    "hs_norm",
    "op_norm",
    "truncate_rank",
    "project_to_state",
    "project_to_simplex",
    "gell_mann_matrices",
    "hermitian_coords",
    "projector_coords",
    "from_hermitian_coords",
    "random_density_matrix",
    "random_hermitian",
    "random_pure_state",
    "maximally_mixed",
]


def trace_norm(a):
    """Schatten-1 norm: the sum of absolute eigenvalues."""
    a = as_hermitian(a)
    return float(np.sum(np.abs(np.linalg.eigvalsh(a))))


def hs_norm(a):
    """Hilbert-Schmidt (Frobenius) norm, computed entrywise."""
    a = as_hermitian(a)
    return float(np.sqrt(np.sum(a.real**2 + a.imag**2)))


def op_norm(a):
    """Largest absolute eigenvalue."""
    a = as_hermitian(a)
    return float(np.max(np.abs(np.linalg.eigvalsh(a))))


def truncate_rank(a, r):
    """Best rank-``r`` Hermitian approximation in Hilbert-Schmidt norm.

    Keeps the ``r`` eigenvalues of largest magnitude and zeroes the rest
    (Eckart-Young-Mirsky). Ties in magnitude keep the eigenvalue that comes
    first in the descending-magnitude order, which makes the output
    deterministic.

    Parameters
    ----------
    a : (d, d) array_like
        Hermitian matrix.
    r : int
        Target rank, ``1 <= r <= d``.

    Returns
    -------
    (d, d) ndarray
    """
    a = as_hermitian(a)
    d = a.shape[0]
    if not (1 <= int(r) <= d) or int(r) != r:
        raise ValidationError(f"rank must be an integer in [1, {d}], got {r}")
    r = int(r)
    lam, vec = np.linalg.eigh(a)
    order = np.argsort(-np.abs(lam), kind="stable")
    keep = order[:r]
    out = (vec[:, keep] * lam[keep]) @ vec[:, keep].conj().T
    return 0.5 * (out + out.conj().T)


def project_to_simplex(x):
    """Euclidean projection of a real vector onto the probability simplex."""
    x = np.asarray(x, dtype=float)
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, x.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


def project_to_state(a):
    """Closest density matrix in Hilbert-Schmidt distance.

    Eigenvectors are kept and the eigenvalues are projected onto the
    probability simplex.
    """
    a = as_hermitian(a)
    lam, vec = np.linalg.eigh(a)
    p = project_to_simplex(lam)
    out = (vec * p) @ vec.conj().T
    return 0.5 * (out + out.conj().T)


def gell_mann_matrices(d):
    """Generalized Gell-Mann basis of the d x d Hermitian matrices.

    Ordering: symmetric pairs ``(E_jk + E_kj)/sqrt(2)`` for ``j < k`` in
    lexicographic order, then antisymmetric pairs
    ``-i (E_jk - E_kj)/sqrt(2)``, then the traceless diagonal ladder, and
    finally ``I/sqrt(d)``. The set is orthonormal under ``Tr[A B]``; for
    ``d = 2`` it is the Pauli matrices divided by ``sqrt(2)``.

    Returns
    -------
    (d*d, d, d) ndarray
    """
    d = int(d)
    if d < 2:
        raise ValidationError(f"Gell-Mann basis needs d >= 2, got {d}")
    out = np.zeros((d * d, d, d), dtype=np.complex128)
    pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    s = 1.0 / np.sqrt(2.0)
    idx = 0
    for j, k in pairs:
        out[idx, j, k] = out[idx, k, j] = s
        idx += 1
    for j, k in pairs:
        out[idx, j, k] = -1j * s
        out[idx, k, j] = 1j * s
        idx += 1
    for l in range(1, d):
        norm = 1.0 / np.sqrt(l * (l + 1.0))
        out[idx, np.arange(l), np.arange(l)] = norm
        out[idx, l, l] = -l * norm
        idx += 1
    out[idx] = np.eye(d) / np.sqrt(d)
    return out


def _triu_pairs(d):
    return np.triu_indices(d, k=1)


def hermitian_coords(a):
    """Real coordinates of Hermitian matrices in the elementary basis.

    The basis is ``E_aa``, ``(E_ab + E_ba)/sqrt(2)`` and
    ``-i (E_ab - E_ba)/sqrt(2)`` (``a < b``), which is orthonormal, so
    ``Tr[A B] = coords(A) @ coords(B)`` for Hermitian ``A, B``. Accepts a
    single matrix or a stack with shape ``(..., d, d)``.
    """
    a = np.asarray(a, dtype=np.complex128)
    d = a.shape[-1]
    iu, ju = _triu_pairs(d)
    diag = np.diagonal(a, axis1=-2, axis2=-1).real
    off = a[..., iu, ju]
    return np.concatenate(
        [diag, np.sqrt(2.0) * off.real, -np.sqrt(2.0) * off.imag], axis=-1
    )


def projector_coords(v):
    """``hermitian_coords(|v><v|)`` for a stack of vectors, without forming d x d."""
    v = np.asarray(v, dtype=np.complex128)
    d = v.shape[-1]
    iu, ju = _triu_pairs(d)
    off = v[..., iu] * v[..., ju].conj()
    return np.concatenate(
        [np.abs(v) ** 2, np.sqrt(2.0) * off.real, -np.sqrt(2.0) * off.imag], axis=-1
    )


def from_hermitian_coords(c, d):
    """Inverse of :func:`hermitian_coords` for a single coordinate vector."""
    c = np.asarray(c, dtype=float)
    iu, ju = _triu_pairs(d)
    m = iu.size
    out = np.zeros((d, d), dtype=np.complex128)
    out[np.arange(d), np.arange(d)] = c[:d]
    off = (c[d : d + m] - 1j * c[d + m :]) / np.sqrt(2.0)
    out[iu, ju] = off
    out[ju, iu] = off.conj()
    return out


def maximally_mixed(d):
    return np.eye(d, dtype=np.complex128) / d


def random_pure_state(d, rng):
    """Haar-random unit vector (normalized complex Gaussian)."""
    g = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return g / np.linalg.norm(g)


def random_density_matrix(d, rng, rank=None):
    """Random state of the given rank from the induced (Ginibre) measure."""
    rank = d if rank is None else int(rank)
    if not 1 <= rank <= d:
        raise ValidationError(f"rank must lie in [1, {d}], got {rank}")
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def random_hermitian(d, rng, scale=1.0):
    """GUE-style random Hermitian matrix."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * 0.5 * (g + g.conj().T)
