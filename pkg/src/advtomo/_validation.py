"""Input validation helpers shared by every module.

Matrices are plain complex ``ndarray`` objects; these helpers check the
invariants (Hermitian, PSD, unit trace, unit norm, unitary) and return a
contiguous ``complex128`` copy-free view where possible.
"""

import numpy as np

HERMITIAN_TOL = 1e-10
EIGEN_TOL = 1e-9
TRACE_TOL = 1e-9
NORM_TOL = 1e-10
UNITARY_TOL = 1e-8


class ValidationError(ValueError):
    """Raised when an input violates a documented invariant."""


def _as_square(a, name):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    return a


def as_hermitian(a, name="matrix", tol=HERMITIAN_TOL):
    a = _as_square(a, name)
    if not np.allclose(a, a.conj().T, rtol=0.0, atol=tol):
        dev = np.max(np.abs(a - a.conj().T))
        raise ValidationError(f"{name} is not Hermitian (max deviation {dev:.3g})")
    return a


def as_density_matrix(a, name="rho"):
    a = as_hermitian(a, name)
    tr = np.trace(a).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValidationError(f"{name} must have unit trace, got {tr!r}")
    lam_min = np.linalg.eigvalsh(a)[0]
    if lam_min < -EIGEN_TOL:
        raise ValidationError(f"{name} is not PSD (min eigenvalue {lam_min:.3g})")
    return a


def as_pure_state(v, name="state"):
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1 or v.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty vector, got shape {v.shape}")
    nrm = np.vdot(v, v).real
    if abs(nrm - 1.0) > NORM_TOL:
        raise ValidationError(f"{name} must have unit norm, got squared norm {nrm!r}")
    return v


def as_unitary(u, name="U", tol=UNITARY_TOL):
    u = _as_square(u, name)
    if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), rtol=0.0, atol=tol):
        raise ValidationError(f"{name} is not unitary")
    return u


def as_samples(samples, name="samples"):
    """Outcome vectors of the uniform POVM as an ``(n, d)`` array."""
    x = np.asarray(samples, dtype=np.complex128)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValidationError(f"{name} must be an (n, d) array of vectors, got shape {x.shape}")
    if x.shape[0] == 0:
        raise ValidationError(f"{name} is empty")
    return x


def check_fraction(gamma, name="gamma", upper=1.0, inclusive=True):
    gamma = float(gamma)
    ok = 0.0 <= gamma <= upper if inclusive else 0.0 <= gamma < upper
    if not ok:
        bracket = "]" if inclusive else ")"
        raise ValidationError(f"{name} must lie in [0, {upper}{bracket}, got {gamma}")
    return gamma
