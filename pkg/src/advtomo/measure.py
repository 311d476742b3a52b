"""POVMs, Born-rule sampling and the continuous uniform POVM."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    EIGEN_TOL,
    ValidationError,
    as_density_matrix,
    as_samples,
    as_unitary,
)

__all__ = [
    "Povm",
    "OutcomeDistribution",
    "CovarianceEstimate",
    "basis_povm",
    "born_distribution",
    "sample_outcomes",
    "sample_uniform_povm",
    "accumulate_covariance",
    "empirical_covariance",
    "sigma_rho",
]

COMPLETENESS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Povm:
    """Finite POVM with effects stacked as a ``(k, d, d)`` array."""

    effects: np.ndarray
    labels: tuple = None

    def __post_init__(self):
        eff = np.asarray(self.effects, dtype=np.complex128)
        if eff.ndim != 3 or eff.shape[1] != eff.shape[2] or eff.shape[0] < 1:
            raise ValidationError(f"effects must have shape (k, d, d), got {eff.shape}")
        if not np.allclose(eff, np.conj(np.swapaxes(eff, 1, 2)), atol=1e-10, rtol=0):
            raise ValidationError("POVM effects must be Hermitian")
        if np.min(np.linalg.eigvalsh(eff)) < -EIGEN_TOL:
            raise ValidationError("POVM effects must be PSD")
        d = eff.shape[1]
        if not np.allclose(eff.sum(axis=0), np.eye(d), atol=COMPLETENESS_TOL, rtol=0):
            raise ValidationError("POVM effects must sum to the identity")
        labels = tuple(range(eff.shape[0])) if self.labels is None else tuple(self.labels)
        if len(labels) != eff.shape[0]:
            raise ValidationError("one label per effect is required")
        eff.setflags(write=False)
        object.__setattr__(self, "effects", eff)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.effects.shape[1]

    @property
    def n_outcomes(self):
        return self.effects.shape[0]


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    probabilities: np.ndarray
    labels: tuple = None

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).copy()
        if p.ndim != 1 or p.size == 0:
            raise ValidationError("probabilities must be a non-empty vector")
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise ValidationError("probabilities must be nonnegative and sum to 1")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        labels = tuple(range(p.size)) if self.labels is None else tuple(self.labels)
        if len(labels) != p.size:
            raise ValidationError("one label per probability is required")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.probabilities.size

    def index_of(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown outcome label {label!r}") from None


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Empirical second moment ``(1/n) sum |v_i><v_i|`` of uniform-POVM outcomes.

    ``removed`` and ``converged`` are only meaningful for robust estimates.
    """

    matrix: np.ndarray
    count: int
    removed: int = 0
    converged: bool = True
    history: tuple = field(default=())

    @property
    def dim(self):
        return self.matrix.shape[0]

    def to_state_estimate(self):
        """``(d+1) * Sigma - I``: invert ``Sigma_rho = (I + rho)/(d+1)``."""
        d = self.dim
        return (d + 1) * self.matrix - np.eye(d)


def basis_povm(u):
    """Rank-one projective measurement onto the columns of a unitary."""
    u = as_unitary(u)
    effects = np.einsum("ik,jk->kij", u, u.conj())
    return Povm(effects)


def born_distribution(rho, m):
    """``p(x) = Tr[rho M_x]``."""
    rho = as_density_matrix(rho)
    if rho.shape[0] != m.dim:
        raise ValidationError(f"state dimension {rho.shape[0]} != POVM dimension {m.dim}")
    p = np.einsum("xij,ji->x", m.effects, rho).real
    p = np.clip(p, 0.0, None)
    return OutcomeDistribution(p / p.sum(), m.labels)


def sample_outcomes(dist, n, rng):
    """``n`` i.i.d. labels by inverse CDF on the cumulative probabilities."""
    cdf = np.cumsum(dist.probabilities)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(int(n)), side="right")
    # zero-probability tail entries share cdf == 1; never land past the last positive mass
    idx = np.minimum(idx, np.flatnonzero(dist.probabilities > 0)[-1])
    labels = np.asarray(dist.labels)
    return labels[idx]


def sample_uniform_povm(rho, rng, size=None):
    """Outcomes of the uniform POVM on ``rho``, density ``d <v|rho|v> dv``.

    The law is the ``lambda``-mixture over eigenpairs ``(lambda_i, psi_i)`` of
    the size-biased Haar law ``d |<psi_i|v>|^2 dv``. For one eigenvector that
    law has ``|<psi|v>|^2 ~ Beta(2, d-1)``, a uniform phase on ``<psi|v>`` and a
    Haar-random direction in the orthogonal complement.

    Returns a ``(d,)`` vector when ``size`` is None, else ``(size, d)``.
    """
    rho = as_density_matrix(rho)
    d = rho.shape[0]
    n = 1 if size is None else int(size)
    lam, vec = np.linalg.eigh(rho)
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum()
    comp = rng.choice(d, size=n, p=lam)
    psi = vec[:, comp].T
    phase = np.exp(2j * np.pi * rng.random(n))
    if d == 1:
        out = phase[:, None] * psi
    else:
        w = rng.beta(2.0, d - 1.0, size=n)
        g = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
        g -= psi * np.sum(psi.conj() * g, axis=1, keepdims=True)
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        out = np.sqrt(w)[:, None] * phase[:, None] * psi + np.sqrt(1.0 - w)[:, None] * g
    return out[0] if size is None else out


def empirical_covariance(samples, weights=None):
    """``sum_i w_i |v_i><v_i| / sum_i w_i`` as a Hermitian matrix."""
    x = as_samples(samples)
    if weights is None:
        s = x.T @ x.conj() / x.shape[0]
    else:
        w = np.asarray(weights, dtype=float)
        s = (x.T * w) @ x.conj() / w.sum()
    return 0.5 * (s + s.conj().T)


def accumulate_covariance(samples):
    x = as_samples(samples)
    return CovarianceEstimate(empirical_covariance(x), x.shape[0])


def sigma_rho(rho):
    """Population covariance ``(I + rho)/(d + 1)`` of uniform-POVM outcomes."""
    rho = as_density_matrix(rho)
    d = rho.shape[0]
    return (np.eye(d) + rho) / (d + 1)
