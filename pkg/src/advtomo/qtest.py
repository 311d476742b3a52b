"""Robust identity testing of discrete and quantum outcome distributions.

The tester compares the empirical l1 distance to the reference, minus the
``2 gamma`` an adversary can add, against the ``null_quantile`` of the same
distance simulated under the clean null.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from ._validation import ValidationError, as_density_matrix, as_hermitian, check_fraction
from .adversary import OutcomeRecord, budget_for
from .core import hs_norm
from .haar import sample_haar_unitary
from .measure import OutcomeDistribution, basis_povm, born_distribution, sample_outcomes

__all__ = [
    "TesterConfig",
    "TestVerdict",
    "AuditError",
    "empirical_l1",
    "calibrate_threshold",
    "robust_identity_test",
    "quantum_identity_test",
    "outcome_distance_diagnostics",
    "delta_distance_diagnostics",
    "expected_lp_bound",
    "l2_lower_bound",
    "linf_upper_bound",
]


class AuditError(RuntimeError):
    """A record used more corruption budget than its gamma allows."""


@dataclass(frozen=True)
class TesterConfig:
    gamma: float = 0.0
    epsilon_target: float = None
    calibration_trials: int = 499
    null_quantile: float = 0.95

    __test__ = False

    def __post_init__(self):
        check_fraction(self.gamma, upper=0.5)
        check_fraction(self.null_quantile, name="null_quantile", inclusive=False)
        if int(self.calibration_trials) < 100:
            raise ValidationError("calibration_trials must be >= 100")


@dataclass(frozen=True)
class TestVerdict:
    """``accept`` iff ``statistic <= threshold``; ``corrupted_budget`` is gamma."""

    accept: bool
    statistic: float
    threshold: float
    corrupted_budget: float
    budget_used: int = 0

    # keep pytest from collecting this class
    __test__ = False


def _counts(outcomes, dist):
    lookup = {lab: i for i, lab in enumerate(dist.labels)}
    try:
        idx = np.fromiter((lookup[v.item() if hasattr(v, "item") else v] for v in outcomes), dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"outcome {exc.args[0]!r} is not a reference label") from None
    return np.bincount(idx, minlength=len(dist))


def empirical_l1(outcomes, q):
    """``sum_x |p_hat(x) - q(x)|`` for a sequence of outcome labels."""
    entries = outcomes.entries if isinstance(outcomes, OutcomeRecord) else np.asarray(outcomes)
    if entries.size == 0:
        raise ValidationError("no outcomes")
    c = _counts(entries, q)
    return float(np.abs(c / entries.size - q.probabilities).sum())


def calibrate_threshold(q, n, trials, quantile, rng):
    """Order-statistic quantile of the clean null l1 distance.

    Uses the ``ceil(quantile * (trials + 1))``-th smallest of ``trials``
    simulated distances, which gives a false-rejection rate of at most
    ``1 - quantile`` for exchangeable draws.
    """
    sims = rng.multinomial(int(n), q.probabilities, size=int(trials))
    l1 = np.abs(sims / n - q.probabilities).sum(axis=1)
    k = min(math.ceil(quantile * (trials + 1)), trials)
    return float(np.sort(l1)[k - 1])


def robust_identity_test(outcomes, q, cfg, rng=None):
    """Accept ``p = q`` unless the l1 excess over ``2 gamma`` is too large.

    Parameters
    ----------
    outcomes : OutcomeRecord or array_like
        Observed labels, possibly corrupted.
    q : OutcomeDistribution
        Reference law.
    cfg : TesterConfig
    rng : numpy Generator, optional
        Drives the null calibration.

    Returns
    -------
    TestVerdict
    """
    rng = make_rng(rng)
    if not isinstance(q, OutcomeDistribution):
        q = OutcomeDistribution(q)
    record = outcomes if isinstance(outcomes, OutcomeRecord) else OutcomeRecord(np.asarray(outcomes))
    n = len(record)
    if record.budget_used > budget_for(cfg.gamma, n):
        raise AuditError(f"record uses {record.budget_used} corruptions, gamma allows {budget_for(cfg.gamma, n)}")
    stat = empirical_l1(record, q) - 2.0 * cfg.gamma
    thr = calibrate_threshold(q, n, cfg.calibration_trials, cfg.null_quantile, rng)
    return TestVerdict(bool(stat <= thr), float(stat), thr, cfg.gamma, record.budget_used)


def quantum_identity_test(rho_source, sigma, n, cfg, adversary=None, rng=None):
    """Identity test of a quantum state against ``sigma`` in a Haar-random basis.

    ``rho_source`` is either a density matrix or a callable
    ``(povm, n, rng) -> labels``. ``adversary``, if given, is called as
    ``adversary(record, povm, p_sigma, rng)`` and must return an
    :class:`OutcomeRecord` whose flags stay within ``floor(gamma n)``.
    """
    rng = make_rng(rng)
    sigma = as_density_matrix(sigma)
    d = sigma.shape[0]
    povm = basis_povm(sample_haar_unitary(d, rng))
    q = born_distribution(sigma, povm)
    if callable(rho_source):
        labels = np.asarray(rho_source(povm, int(n), rng))
    else:
        rho = as_density_matrix(rho_source)
        if rho.shape != sigma.shape:
            raise ValidationError("rho and sigma dimensions differ")
        labels = sample_outcomes(born_distribution(rho, povm), int(n), rng)
    record = OutcomeRecord(labels)
    if adversary is not None:
        record = adversary(record, povm, q, rng)
    return robust_identity_test(record, q, cfg, rng)


def delta_distance_diagnostics(delta, trials, rng):
    """Per Haar basis, ``(l1, l2, linf)`` norms of ``diag(U^dag Delta U)``.

    ``delta`` is any traceless Hermitian matrix, so it need not be a
    difference of two states. Returns a ``(trials, 3)`` array.
    """
    delta = as_hermitian(delta)
    if abs(np.trace(delta)) > 1e-9:
        raise ValidationError("delta must be traceless")
    d = delta.shape[0]
    out = np.empty((int(trials), 3))
    for i in range(int(trials)):
        u = sample_haar_unitary(d, rng)
        diff = np.einsum("ai,ab,bi->i", u.conj(), delta, u).real
        out[i] = np.abs(diff).sum(), np.sqrt(np.sum(diff**2)), np.abs(diff).max()
    return out


def outcome_distance_diagnostics(rho, sigma, trials, rng):
    """Per Haar basis, ``(l1, l2, linf)`` distances between the outcome laws of rho and sigma.

    Returns a ``(trials, 3)`` array.
    """
    rho = as_density_matrix(rho)
    sigma = as_density_matrix(sigma)
    if rho.shape != sigma.shape:
        raise ValidationError("rho and sigma dimensions differ")
    return delta_distance_diagnostics(rho - sigma, trials, rng)


def expected_lp_bound(delta, p):
    """Upper bound ``(d/2) binom(d+p-1, p)^{-1} ||Delta||_HS^p`` on ``E_U ||p^U||_p^p``.

    Holds for traceless Hermitian ``Delta`` and even ``p``.
    """
    delta = as_hermitian(delta)
    if abs(np.trace(delta)) > 1e-9:
        raise ValidationError("delta must be traceless")
    if int(p) != p or p < 2 or p % 2:
        raise ValidationError(f"p must be an even integer >= 2, got {p}")
    d = delta.shape[0]
    return 0.5 * d / math.comb(d + int(p) - 1, int(p)) * hs_norm(delta) ** int(p)


def l2_lower_bound(d, hs):
    """Typical-basis lower bound ``0.07 ||Delta||_HS / sqrt(d)`` on the l2 outcome distance."""
    return 0.07 * hs / math.sqrt(d)


def linf_upper_bound(d, hs):
    """Typical-basis upper bound ``3 e ln(d) ||Delta||_HS / d`` on the linf outcome distance."""
    return 3.0 * math.e * math.log(d) * hs / d
