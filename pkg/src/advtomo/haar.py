"""Haar sampling and exact permutation-sum moment formulas."""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._validation import ValidationError, as_hermitian

__all__ = [
    "PermutationSpec",
    "UnsupportedOrderError",
    "MAX_MOMENT_ORDER",
    "sample_haar_unitary",
    "sample_haar_state",
    "sample_haar_states",
    "permutations",
    "symmetric_moment_scale",
    "haar_trace_moment",
]

MAX_MOMENT_ORDER = 6


class UnsupportedOrderError(ValueError):
    """Moment order beyond what the k! enumeration supports."""


@dataclass(frozen=True)
class PermutationSpec:
    """A permutation of ``{0..k-1}`` together with its cycle decomposition."""

    mapping: tuple
    cycles: tuple

    @property
    def size(self):
        return len(self.mapping)

    @property
    def cycle_lengths(self):
        return tuple(len(c) for c in self.cycles)

    @classmethod
    def from_mapping(cls, mapping):
        mapping = tuple(int(m) for m in mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise ValidationError(f"{mapping} is not a bijection on 0..{len(mapping) - 1}")
        seen = [False] * len(mapping)
        cycles = []
        for start in range(len(mapping)):
            if seen[start]:
                continue
            cyc = []
            j = start
            while not seen[j]:
                seen[j] = True
                cyc.append(j)
                j = mapping[j]
            cycles.append(tuple(cyc))
        return cls(mapping, tuple(cycles))


@lru_cache(maxsize=None)
def permutations(k):
    """All of S_k as :class:`PermutationSpec`, in lexicographic order."""
    return tuple(PermutationSpec.from_mapping(p) for p in itertools.permutations(range(k)))


def sample_haar_unitary(d, rng):
    """Haar-random d x d unitary.

    QR of a complex Ginibre matrix with the phases of ``diag(R)`` moved
    into ``Q``; without that correction the result is not Haar.
    """
    d = int(d)
    if d < 1:
        raise ValidationError(f"dimension must be >= 1, got {d}")
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def sample_haar_states(d, n, rng):
    """``n`` Haar-random unit vectors as an ``(n, d)`` array.

    A normalized complex Gaussian vector equals, in law and in fact, the
    first column of the phase-corrected QR unitary above.
    """
    g = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_haar_state(d, rng):
    return sample_haar_states(d, 1, rng)[0]


def symmetric_moment_scale(d, k):
    """``binom(d+k-1, k)^{-1}``: prefactor of E[|u><u|^{(x)k}] = scale * P_sym."""
    if k < 1:
        raise ValidationError(f"order must be >= 1, got {k}")
    return 1.0 / math.comb(int(d) + int(k) - 1, int(k))


def haar_trace_moment(m, k):
    """Exact ``E_u[<u|M|u>^k]`` for Haar-random unit ``u``.

    Sums ``prod_c Tr[M^{|c|}]`` over all permutations of S_k and their
    cycles, divided by ``k!`` and by ``binom(d+k-1, k)``.

    Parameters
    ----------
    m : (d, d) array_like
        Hermitian matrix.
    k : int
        Moment order, ``1 <= k <= 6``.
    """
    if int(k) != k or k < 1:
        raise ValidationError(f"order must be a positive integer, got {k}")
    k = int(k)
    if k > MAX_MOMENT_ORDER:
        raise UnsupportedOrderError(f"order {k} exceeds the supported maximum {MAX_MOMENT_ORDER}")
    m = as_hermitian(m)
    d = m.shape[0]
    lam = np.linalg.eigvalsh(m)
    power_sums = [None] + [float(np.sum(lam**j)) for j in range(1, k + 1)]
    total = 0.0
    for perm in permutations(k):
        term = 1.0
        for length in perm.cycle_lengths:
            term *= power_sums[length]
        total += term
    return symmetric_moment_scale(d, k) * total / math.factorial(k)
