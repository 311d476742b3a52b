"""Budgeted corruption of outcome records.

Every attack returns a new :class:`OutcomeRecord` and never touches its
input. The budget for a corruption level ``gamma`` on ``n`` entries is
``floor(gamma * n)`` flagged entries in total, counting flags already
present on the input record.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from ._validation import ValidationError, as_density_matrix, check_fraction
from .measure import OutcomeDistribution, sample_uniform_povm

__all__ = [
    "ContractViolation",
    "OutcomeRecord",
    "CouplingPlan",
    "budget_for",
    "total_variation",
    "replace_attack",
    "maximal_couple",
    "coupling_attack",
    "spam_attack",
    "state_swap_attack",
]

TV_TOL = 1e-12


class ContractViolation(RuntimeError):
    """An attack was asked to exceed what its corruption model allows."""


def budget_for(gamma, n):
    return int(math.floor(gamma * n + 1e-9))


def _probs(p):
    return p.probabilities if isinstance(p, OutcomeDistribution) else np.asarray(p, dtype=float)


def total_variation(p, q):
    """Half the l1 distance; vectorized over leading axes."""
    tv = 0.5 * np.abs(_probs(p) - _probs(q)).sum(axis=-1)
    return float(tv) if np.ndim(tv) == 0 else tv


@dataclass(frozen=True, eq=False)
class OutcomeRecord:
    """Outcomes plus per-entry corruption flags.

    ``entries`` is ``(n,)`` for discrete labels or ``(n, d)`` for
    uniform-POVM vectors. ``capped`` is set by attacks that wanted more
    changes than the budget allowed.
    """

    entries: np.ndarray
    corrupted: np.ndarray = None
    capped: bool = False

    def __post_init__(self):
        e = np.array(self.entries)
        if e.ndim not in (1, 2) or e.shape[0] == 0:
            raise ValidationError(f"entries must be a non-empty (n,) or (n, d) array, got {e.shape}")
        c = np.zeros(e.shape[0], dtype=bool) if self.corrupted is None else np.array(self.corrupted, dtype=bool)
        if c.shape != (e.shape[0],):
            raise ValidationError("one corruption flag per entry is required")
        e.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "entries", e)
        object.__setattr__(self, "corrupted", c)

    def __len__(self):
        return self.entries.shape[0]

    @property
    def budget_used(self):
        return int(self.corrupted.sum())

    def remaining_budget(self, gamma):
        return budget_for(gamma, len(self)) - self.budget_used


@dataclass(frozen=True, eq=False)
class CouplingPlan:
    """Per-index source and target outcome distributions, ``(n, k)`` each.

    ``labels`` maps column ``j`` to the outcome label it stands for.
    """

    sources: np.ndarray
    targets: np.ndarray
    labels: tuple = None

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.sources, dtype=float))
        q = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if p.shape != q.shape:
            raise ValidationError(f"source and target shapes differ: {p.shape} vs {q.shape}")
        for name, m in (("sources", p), ("targets", q)):
            if np.any(m < -1e-12) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
                raise ValidationError(f"{name} rows must be probability vectors")
        labels = tuple(range(p.shape[1])) if self.labels is None else tuple(self.labels)
        if len(labels) != p.shape[1]:
            raise ValidationError("one label per outcome column is required")
        object.__setattr__(self, "sources", np.clip(p, 0.0, None))
        object.__setattr__(self, "targets", np.clip(q, 0.0, None))
        object.__setattr__(self, "labels", labels)

    @classmethod
    def repeated(cls, source, target, n):
        """Same source/target pair at each of ``n`` indices."""
        labels = source.labels if isinstance(source, OutcomeDistribution) else None
        p = source.probabilities if isinstance(source, OutcomeDistribution) else np.asarray(source, float)
        q = target.probabilities if isinstance(target, OutcomeDistribution) else np.asarray(target, float)
        return cls(np.tile(p, (n, 1)), np.tile(q, (n, 1)), labels)

    def __len__(self):
        return self.sources.shape[0]

    @property
    def tv_per_index(self):
        return 0.5 * np.abs(self.sources - self.targets).sum(axis=1)


def _label_index(labels, values):
    lookup = {lab: i for i, lab in enumerate(labels)}
    try:
        return np.fromiter((lookup[v.item() if hasattr(v, "item") else v] for v in values), dtype=np.int64, count=len(values))
    except KeyError as exc:
        raise ValidationError(f"outcome {exc.args[0]!r} is not a label of the plan") from None


def _couple_indices(p, q, x, rng):
    """Vectorized maximal coupling; ``p``, ``q`` are ``(m, k)``, ``x`` column indices."""
    rows = np.arange(x.size)
    px = p[rows, x]
    if np.any(px <= 0):
        raise ValidationError("observed outcome has zero probability under its source distribution")
    overlap = np.minimum(p, q)
    keep = rng.random(x.size) < overlap[rows, x] / px
    y = x.copy()
    move = np.flatnonzero(~keep)
    if move.size:
        resid = q[move] - overlap[move]
        cdf = np.cumsum(resid, axis=1)
        cdf /= cdf[:, -1:]
        cdf[:, -1] = 1.0
        u = rng.random(move.size)[:, None]
        y[move] = np.minimum((cdf <= u).sum(axis=1), p.shape[1] - 1)
    return y


def maximal_couple(p, q, x, rng):
    """Draw ``Y`` given ``X = x`` so that ``(X, Y)`` is a maximal coupling of p and q.

    Keeps ``x`` with probability ``min(p(x), q(x)) / p(x)`` and otherwise
    samples from ``(q - min(p, q)) / TV(p, q)``. Then ``Y ~ q`` and
    ``P[X != Y] = TV(p, q)``.

    Raises
    ------
    ValidationError
        If ``p(x) = 0``.
    """
    if not isinstance(p, OutcomeDistribution):
        p = OutcomeDistribution(p)
    if not isinstance(q, OutcomeDistribution):
        q = OutcomeDistribution(q, p.labels)
    if len(p) != len(q):
        raise ValidationError("p and q must share an outcome set")
    xi = np.array([p.index_of(x)])
    y = _couple_indices(p.probabilities[None], q.probabilities[None], xi, make_rng(rng))
    return p.labels[int(y[0])]


def replace_attack(record, gamma, payload, rng):
    """Overwrite ``floor(gamma n)`` uniformly chosen unflagged entries with ``payload``."""
    gamma = check_fraction(gamma)
    rng = make_rng(rng)
    k = max(record.remaining_budget(gamma), 0)
    free = np.flatnonzero(~record.corrupted)
    k = min(k, free.size)
    idx = rng.choice(free, size=k, replace=False) if k else np.array([], dtype=int)
    entries = np.array(record.entries)
    if entries.ndim == 2:
        payload = np.asarray(payload, dtype=entries.dtype)
        if payload.shape != entries.shape[1:]:
            raise ValidationError(f"payload must have shape {entries.shape[1:]}, got {payload.shape}")
    entries[idx] = payload
    flags = record.corrupted.copy()
    flags[idx] = True
    return OutcomeRecord(entries, flags)


def coupling_attack(record, plan, gamma, rng, all_or_nothing=False):
    """Move each entry toward its target law by maximal coupling, within budget.

    Proposals are drawn for every index. Changed proposals are applied in
    index order until the remaining budget is spent; the rest are
    discarded. With ``all_or_nothing`` either every proposal is applied
    (if they fit) or none is. ``capped`` on the result reports whether
    proposals were dropped.
    """
    gamma = check_fraction(gamma)
    rng = make_rng(rng)
    if record.entries.ndim != 1:
        raise ValidationError("coupling attacks act on discrete outcome records")
    if len(plan) != len(record):
        raise ValidationError(f"plan covers {len(plan)} indices, record has {len(record)}")
    x = _label_index(plan.labels, record.entries)
    y = _couple_indices(plan.sources, plan.targets, x, rng)
    changed = np.flatnonzero((y != x) & ~record.corrupted)
    budget = max(record.remaining_budget(gamma), 0)
    capped = changed.size > budget
    if capped:
        changed = np.array([], dtype=int) if all_or_nothing else changed[:budget]
    labels = np.asarray(plan.labels, dtype=object)
    entries = np.array(record.entries)
    entries[changed] = labels[y[changed]].astype(entries.dtype)
    flags = record.corrupted.copy()
    flags[changed] = True
    return OutcomeRecord(entries, flags, capped)


def spam_attack(record, channel, gamma_spam, rng):
    """SPAM noise simulated as a coupling attack with budget ``2 * gamma_spam``.

    ``channel`` maps each clean per-index outcome law to its noisy
    counterpart. Each per-index TV must be at most ``gamma_spam``.
    """
    gamma_spam = check_fraction(gamma_spam, name="gamma_spam", upper=0.5)
    tv = channel.tv_per_index
    if np.any(tv > gamma_spam + TV_TOL):
        raise ContractViolation(
            f"SPAM channel has per-index TV {tv.max():.6g} above gamma_spam = {gamma_spam:.6g}"
        )
    return coupling_attack(record, channel, 2.0 * gamma_spam, rng)


def state_swap_attack(record, gamma, sigma, rng):
    """Replace ``floor(gamma n)`` uniformly chosen uniform-POVM outcomes by fresh draws from D(sigma)."""
    gamma = check_fraction(gamma)
    rng = make_rng(rng)
    if record.entries.ndim != 2:
        raise ValidationError("state swaps act on (n, d) uniform-POVM records")
    sigma = as_density_matrix(sigma)
    if sigma.shape[0] != record.entries.shape[1]:
        raise ValidationError("sigma dimension does not match the record")
    free = np.flatnonzero(~record.corrupted)
    k = min(max(record.remaining_budget(gamma), 0), free.size)
    idx = rng.choice(free, size=k, replace=False) if k else np.array([], dtype=int)
    entries = np.array(record.entries)
    if k:
        entries[idx] = sample_uniform_povm(sigma, rng, size=k)
    flags = record.corrupted.copy()
    flags[idx] = True
    return OutcomeRecord(entries, flags)
