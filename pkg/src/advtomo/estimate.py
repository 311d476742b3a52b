"""Tomography from uniform-POVM outcomes: plain, filtered and brute-force.

The functional API works on ``(n, d)`` arrays of outcome vectors. The
estimator classes at the bottom wrap it in the scikit-learn
``fit``/``get_params`` protocol.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._rng import make_rng
from ._validation import ValidationError, as_density_matrix, as_hermitian, as_samples, check_fraction
from .core import (
    from_hermitian_coords,
    gell_mann_matrices,
    hermitian_coords,
    project_to_state,
    projector_coords,
    truncate_rank,
)
from .measure import CovarianceEstimate, empirical_covariance, sample_uniform_povm

logger = logging.getLogger(__name__)

__all__ = [
    "RobustConfig",
    "ConstraintReport",
    "naive_tomography",
    "filter_robust_covariance",
    "subset_oracle",
    "check_constraints",
    "second_moment_closed_form",
    "projector_coord_moments",
    "hypercontractivity_margin",
    "sos_error_scale",
    "flip_operator",
    "NaiveTomography",
    "FilterTomography",
    "SubsetOracleTomography",
]

SUBSET_ORACLE_MAX_N = 20


@dataclass(frozen=True)
class RobustConfig:
    """Knobs of the robust estimators.

    ``t`` is the moment half-order (``h = 2t``) and ``C`` the
    hypercontractivity constant shared by both moment constraints.
    ``max_removed_fraction`` defaults to ``2 * gamma``.
    """

    gamma: float
    t: int = 1
    C: float = 2.0
    filter_threshold_slack: float = 3.0
    max_removed_fraction: float = None
    tail_cutoff: float = 9.0
    max_iter: int = 100

    def __post_init__(self):
        check_fraction(self.gamma, upper=0.5, inclusive=False)
        if int(self.t) != self.t or self.t < 1:
            raise ValidationError(f"t must be a positive integer, got {self.t}")
        if self.C <= 0:
            raise ValidationError(f"C must be positive, got {self.C}")
        if self.max_removed_fraction is None:
            object.__setattr__(self, "max_removed_fraction", 2.0 * self.gamma)
        check_fraction(self.max_removed_fraction, name="max_removed_fraction")

    @property
    def eta(self):
        return sos_error_scale(self.gamma, self.t, self.C)


def sos_error_scale(gamma, t, C=2.0):
    """``C sqrt(C) t (2 gamma)^(1 - 1/(2t))``.

    The Hilbert-Schmidt error of the certified covariance estimate is at
    most this value divided by ``d + 1``. Reported, not enforced.
    """
    return C * math.sqrt(C) * t * (2.0 * gamma) ** (1.0 - 1.0 / (2.0 * t))


def naive_tomography(samples):
    """``(d+1) * mean(|v_i><v_i|) - I``; unit trace, not necessarily PSD."""
    x = as_samples(samples)
    d = x.shape[1]
    return (d + 1) * empirical_covariance(x) - np.eye(d)


def flip_operator(d):
    """Swap operator ``F |a>|b> = |b>|a>`` on C^d (x) C^d (kron index order)."""
    f = np.zeros((d * d, d * d))
    a, b = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    f[(a * d + b).ravel(), (b * d + a).ravel()] = 1.0
    return f


def second_moment_closed_form(rho):
    """``E[|v><v| (x) |v><v|]`` under the uniform POVM on ``rho``.

    Equals ``(I + F)(I + I (x) rho + rho (x) I) / ((d+1)(d+2))`` with ``F``
    the flip operator; returned as a ``(d^2, d^2)`` matrix in ``np.kron``
    ordering.
    """
    rho = as_density_matrix(rho)
    d = rho.shape[0]
    eye = np.eye(d)
    big = np.eye(d * d) + np.kron(eye, rho) + np.kron(rho, eye)
    return (np.eye(d * d) + flip_operator(d)) @ big / ((d + 1) * (d + 2))


def projector_coord_moments(rho):
    """Mean and covariance of ``hermitian_coords(|v><v|)`` for v ~ D(rho).

    Uses ``E[<v|A|v><v|B|v>] = (TrA TrB + TrA Tr[B rho] + Tr[A rho] TrB
    + Tr[AB] + 2 Re Tr[rho A B]) / ((d+1)(d+2))`` over the orthonormal
    elementary basis, i.e. the closed-form second moment contracted with
    ``A (x) B``.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    d = rho.shape[0]
    m = d * d
    basis = np.stack([from_hermitian_coords(e, d) for e in np.eye(m)])
    tr = np.trace(basis, axis1=1, axis2=2).real
    r = hermitian_coords(rho)
    rb = np.einsum("ab,jbc->jac", rho, basis)
    g = np.einsum("jab,kba->jk", rb, basis).real
    g = g + g.T
    second = (np.outer(tr, tr) + np.outer(tr, r) + np.outer(r, tr) + np.eye(m) + g)
    second /= (d + 1) * (d + 2)
    mean = (tr + r) / (d + 1)
    cov = second - np.outer(mean, mean)
    return mean, 0.5 * (cov + cov.T)


def filter_robust_covariance(samples, cfg, rng=None):
    """Spectral filtering estimate of the outcome covariance.

    Each round compares the empirical covariance of the active samples'
    projector coordinates with the covariance the uniform-POVM model
    predicts at the current state estimate. If the largest excess
    eigenvalue ``lambda*`` is below
    ``slack * (3/d^2) * d / sqrt(n_active)`` the loop stops. Otherwise
    samples are removed at random with probability proportional to their
    score along the top direction ``Q`` in excess of ``tail_cutoff`` times the
    model variance along ``Q``. At most ``max_removed_fraction * n`` samples
    are ever removed; hitting that cap returns the last iterate with
    ``converged=False``.

    Parameters
    ----------
    samples : (n, d) array_like
        Possibly corrupted outcome vectors.
    cfg : RobustConfig
    rng : numpy Generator, optional

    Returns
    -------
    CovarianceEstimate
        ``history`` holds ``lambda*`` per round.
    """
    x = as_samples(samples)
    n, d = x.shape
    rng = make_rng(rng)
    if cfg.gamma > 0 and n < 10.0 / cfg.gamma**2:
        raise ValidationError(f"filtering needs n >= 10/gamma^2 = {10.0 / cfg.gamma**2:.0f}, got {n}")
    y = projector_coords(x)
    active = np.ones(n, dtype=bool)
    cap = int(math.floor(cfg.max_removed_fraction * n + 1e-9))
    history = []
    converged = True
    for _ in range(cfg.max_iter):
        ya = y[active]
        mean = ya.mean(axis=0)
        dev = ya - mean
        emp = dev.T @ dev / ya.shape[0]
        sigma = from_hermitian_coords(mean, d)
        rho_hat = project_to_state((d + 1) * sigma - np.eye(d))
        _, model = projector_coord_moments(rho_hat)
        lam, vec = np.linalg.eigh(emp - model)
        lam_star, q = float(lam[-1]), vec[:, -1]
        history.append(lam_star)
        threshold = cfg.filter_threshold_slack * (3.0 / d**2) * d / math.sqrt(ya.shape[0])
        if lam_star <= threshold:
            break
        removed = n - int(active.sum())
        budget = cap - removed
        if budget <= 0:
            converged = False
            break
        scores = (dev @ q) ** 2
        excess = np.clip(scores - cfg.tail_cutoff * float(q @ model @ q), 0.0, None)
        if excess.max() <= 0:
            converged = False
            break
        drop = rng.random(scores.size) < excess / excess.max()
        idx = np.flatnonzero(active)[drop]
        if idx.size > budget:
            idx = idx[np.argsort(-scores[drop], kind="stable")[:budget]]
        active[idx] = False
    else:
        converged = False
    if not converged:
        logger.warning("filter stopped without meeting its threshold (removed %d of %d)", n - active.sum(), n)
    sigma = empirical_covariance(x[active])
    return CovarianceEstimate(sigma, int(active.sum()), n - int(active.sum()), converged, tuple(history))


def _subset_score(outer_sum, coord_sum, size, probes):
    mean = coord_sum / size
    cov = outer_sum / size - np.outer(mean, mean)
    lam, vec = np.linalg.eigh(cov)
    own = vec[:, -1]
    probe_var = np.einsum("pj,jk,pk->p", probes, cov, probes)
    return max(float(probe_var.max()), float(own @ cov @ own))


def subset_oracle(samples, gamma):
    """Exhaustive search over subsets of size ``ceil((1-gamma) n)``.

    Returns the covariance of the subset whose largest deviation variance,
    over the Gell-Mann probes and the subset's own top deviation direction,
    is smallest. Ties go to the lexicographically first subset. Feasible
    only for ``n <= 20``.
    """
    x = as_samples(samples)
    n, d = x.shape
    if n > SUBSET_ORACLE_MAX_N:
        raise ValidationError(f"subset oracle supports n <= {SUBSET_ORACLE_MAX_N}, got {n}")
    gamma = check_fraction(gamma, upper=0.5, inclusive=False)
    size = math.ceil((1.0 - gamma) * n - 1e-9)
    y = projector_coords(x)
    outers = np.einsum("ij,ik->ijk", y, y)
    probes = hermitian_coords(gell_mann_matrices(max(d, 2)) if d >= 2 else np.eye(1)[None])
    best, best_subset = np.inf, None
    for subset in itertools.combinations(range(n), size):
        sel = list(subset)
        score = _subset_score(outers[sel].sum(axis=0), y[sel].sum(axis=0), size, probes)
        if score < best - 1e-15:
            best, best_subset = score, subset
    sigma = empirical_covariance(x[list(best_subset)])
    est = CovarianceEstimate(sigma, size, n - size, True, (best,))
    object.__setattr__(est, "subset", best_subset)
    return est


@dataclass(frozen=True)
class ConstraintReport:
    """Outcome of checking the robust-selection constraint system."""

    weights: np.ndarray
    selected: int
    size_ok: bool
    sigma_ok: bool
    hypercontractivity_margins: np.ndarray
    second_moment_margins: np.ndarray
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(
            self.size_ok
            and self.sigma_ok
            and np.all(self.hypercontractivity_margins >= 0)
            and np.all(self.second_moment_margins >= 0)
        )


def check_constraints(samples, w, sigma, probes, cfg, sigma_tol=1e-9):
    """Direct check of the selection constraints on a 0/1 weight vector.

    With ``x_i = v_i`` on the selected samples, verifies for every probe Q:

    (a) ``sum(w) == (1 - gamma) n`` (rounded up);
    (b) ``sigma`` equals the mean of ``|x_i><x_i|`` over the selection;
    (c) ``mean <x|Q|x>^{2t} <= (C t)^{2t} (mean <x|Q|x>^2)^t``;
    (d) ``mean <x|Q|x>^2 <= C (||Q||_HS^2 + Tr[Q]^2) / (d+1)^2``.

    Means run over the selected samples. Margins are ``rhs - lhs``; a probe
    passes when its margin is nonnegative. Only finitely many probes are
    checked, so a pass is necessary but not sufficient for the
    for-all-Q system.
    """
    x = as_samples(samples)
    n, d = x.shape
    w = np.asarray(w, dtype=bool)
    if w.shape != (n,):
        raise ValidationError(f"weights must have shape ({n},), got {w.shape}")
    probes = [as_hermitian(q, "probe") for q in probes]
    if not probes:
        raise ValidationError("at least one probe is required")
    sigma = sigma.matrix if isinstance(sigma, CovarianceEstimate) else np.asarray(sigma)
    target = math.ceil((1.0 - cfg.gamma) * n - 1e-9)
    selected = int(w.sum())
    size_ok = selected == target
    xs = x[w]
    if selected:
        sigma_dev = float(np.max(np.abs(empirical_covariance(xs) - sigma)))
    else:
        sigma_dev = np.inf
    sigma_ok = sigma_dev <= sigma_tol
    t, C = cfg.t, cfg.C
    hyper, second = [], []
    for q in probes:
        vals = np.einsum("ia,ab,ib->i", xs.conj(), q, xs).real if selected else np.zeros(1)
        m2 = float(np.mean(vals**2))
        m2t = float(np.mean(vals ** (2 * t)))
        hyper.append((C * t) ** (2 * t) * m2**t - m2t)
        bound = C * (np.sum(np.abs(q) ** 2) + np.trace(q).real ** 2) / (d + 1) ** 2
        second.append(bound - m2)
    return ConstraintReport(
        weights=w,
        selected=selected,
        size_ok=size_ok,
        sigma_ok=sigma_ok,
        hypercontractivity_margins=np.array(hyper),
        second_moment_margins=np.array(second),
        details={"target_size": target, "sigma_max_deviation": sigma_dev},
    )


def hypercontractivity_margin(rho, m, h, n_mc, rng):
    """Monte Carlo sides of the h-th moment hypercontractivity bound.

    Returns ``(lhs, rhs)`` with ``lhs = (d+1)^h * (mean <v|M|v>^h)^2`` over
    ``n_mc`` draws from D(rho) and ``rhs = ((h+1)!)^2 (Tr[M^2] + Tr[M]^2)^h``.
    """
    if int(h) != h or h < 2 or h % 2 or h > 6:
        raise ValidationError(f"h must be an even integer in [2, 6], got {h}")
    h = int(h)
    rho = as_density_matrix(rho)
    m = as_hermitian(m)
    d = rho.shape[0]
    rhs = math.factorial(h + 1) ** 2 * (np.trace(m @ m).real + np.trace(m).real ** 2) ** h
    if not np.any(m):
        return 0.0, float(rhs)
    v = sample_uniform_povm(rho, rng, size=int(n_mc))
    vals = np.einsum("ia,ab,ib->i", v.conj(), m, v).real
    lhs = (d + 1) ** h * float(np.mean(vals**h)) ** 2
    return lhs, float(rhs)


class _TomographyBase(BaseEstimator):
    """Shared ``fit`` plumbing: outcome vectors in, state estimate out.

    After ``fit``: ``covariance_`` (d x d), ``state_`` (raw estimate,
    unit trace, possibly indefinite), ``state_truncated_`` when ``rank`` is
    set, ``n_removed_``.
    """

    def _finish(self, est):
        d = est.dim
        self.covariance_ = est.matrix
        self.n_samples_ = est.count + est.removed
        self.n_removed_ = est.removed
        self.converged_ = est.converged
        self.state_ = (d + 1) * est.matrix - np.eye(d)
        if self.rank is not None:
            self.state_truncated_ = truncate_rank(self.state_, self.rank)
        return self

    def estimate(self, project=False):
        """Fitted estimate: rank-truncated if ``rank`` was set, then optionally projected."""
        check_is_fitted(self, "state_")
        out = self.state_truncated_ if self.rank is not None else self.state_
        return project_to_state(out) if project else out


class NaiveTomography(_TomographyBase):
    """Plug-in estimator ``(d+1) * mean(|v><v|) - I``."""

    def __init__(self, rank=None):
        self.rank = rank

    def fit(self, X, y=None):
        x = as_samples(X)
        return self._finish(CovarianceEstimate(empirical_covariance(x), x.shape[0]))


class FilterTomography(_TomographyBase):
    """Plug-in estimator after spectral filtering of outliers."""

    def __init__(self, gamma=0.05, rank=None, filter_threshold_slack=3.0,
                 max_removed_fraction=None, tail_cutoff=9.0, random_state=None):
        self.gamma = gamma
        self.rank = rank
        self.filter_threshold_slack = filter_threshold_slack
        self.max_removed_fraction = max_removed_fraction
        self.tail_cutoff = tail_cutoff
        self.random_state = random_state

    def fit(self, X, y=None):
        cfg = RobustConfig(
            gamma=self.gamma,
            filter_threshold_slack=self.filter_threshold_slack,
            max_removed_fraction=self.max_removed_fraction,
            tail_cutoff=self.tail_cutoff,
        )
        est = filter_robust_covariance(X, cfg, make_rng(self.random_state))
        self.history_ = est.history
        return self._finish(est)


class SubsetOracleTomography(_TomographyBase):
    """Brute-force subset selection; only for ``n <= 20`` samples."""

    def __init__(self, gamma=0.1, rank=None):
        self.gamma = gamma
        self.rank = rank

    def fit(self, X, y=None):
        est = subset_oracle(X, self.gamma)
        self.subset_ = est.subset
        return self._finish(est)
