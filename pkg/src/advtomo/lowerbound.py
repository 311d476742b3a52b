"""Perturbation ensemble around the maximally mixed state and its information bounds."""

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from ._validation import ValidationError, as_density_matrix
from .adversary import CouplingPlan, OutcomeRecord, coupling_attack
from .core import gell_mann_matrices, op_norm, trace_norm
from .haar import sample_haar_unitary
from .measure import basis_povm, born_distribution, sample_outcomes

__all__ = [
    "DEFAULT_C",
    "HermitianBasis",
    "PerturbedState",
    "InfoChannel",
    "ChiSquareCheck",
    "gell_mann_basis",
    "pauli_basis",
    "default_ell",
    "sample_perturbed_state",
    "info_channel",
    "chi_square",
    "chi_square_bound_check",
    "critical_epsilon",
    "emd_upper_bound",
    "coupling_diagnostic",
]

DEFAULT_C = 10.0 * math.sqrt(2.0)
BASIS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class HermitianBasis:
    """Orthonormal basis ``V_1..V_{d^2}`` of Hermitian matrices with ``V_{d^2} = I/sqrt(d)``."""

    elements: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.elements, dtype=np.complex128)
        if v.ndim != 3 or v.shape[1] != v.shape[2] or v.shape[0] != v.shape[1] ** 2:
            raise ValidationError(f"basis must have shape (d^2, d, d), got {v.shape}")
        d = v.shape[1]
        if not np.allclose(v, np.conj(np.swapaxes(v, 1, 2)), atol=1e-10, rtol=0):
            raise ValidationError("basis elements must be Hermitian")
        gram = np.einsum("iab,jba->ij", v, v)
        if not np.allclose(gram, np.eye(d * d), atol=BASIS_TOL, rtol=0):
            raise ValidationError("basis is not orthonormal")
        if not np.allclose(v[-1], np.eye(d) / np.sqrt(d), atol=BASIS_TOL, rtol=0):
            raise ValidationError("last basis element must be I/sqrt(d)")
        v.setflags(write=False)
        object.__setattr__(self, "elements", v)

    @property
    def dim(self):
        return self.elements.shape[1]

    def __len__(self):
        return self.elements.shape[0]


@functools.lru_cache(maxsize=16)
def gell_mann_basis(d):
    # elements are read-only, so sharing a cached instance is safe
    return HermitianBasis(gell_mann_matrices(d))


_PAULIS = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]], [[1, 0], [0, 1]]],
    dtype=np.complex128,
)


def pauli_basis(n_qubits):
    """Normalized N-qubit Pauli strings, with the identity string last."""
    n_qubits = int(n_qubits)
    if n_qubits < 1:
        raise ValidationError("need at least one qubit")
    d = 2**n_qubits
    elems = []
    for word in itertools.product(range(4), repeat=n_qubits):
        m = np.ones((1, 1), dtype=np.complex128)
        for letter in word:
            m = np.kron(m, _PAULIS[letter])
        elems.append(m / np.sqrt(d))
    # identity string (3, 3, ..., 3) is last in product order
    return HermitianBasis(np.stack(elems))


def default_ell(d):
    return math.ceil(d * d / 2)


@dataclass(frozen=True, eq=False)
class PerturbedState:
    """``sigma_z = I/d + clip * Delta_z`` with ``Delta_z = c eps / sqrt(d ell) sum_i z_i V_i``."""

    z: np.ndarray
    ell: int
    epsilon: float
    c_const: float
    delta: np.ndarray
    clip: float
    state: np.ndarray

    @property
    def clipped_delta(self):
        return self.clip * self.delta


def _check_ell(d, ell):
    if int(ell) != ell or not (d * d / 2 <= ell <= d * d - 1):
        raise ValidationError(f"ell must be an integer in [d^2/2, d^2 - 1] = [{d * d / 2:g}, {d * d - 1}], got {ell}")
    return int(ell)


def _perturbation(basis, z, ell, epsilon, c_const):
    d = basis.dim
    delta = c_const * epsilon / math.sqrt(d * ell) * np.tensordot(z, basis.elements[:ell], axes=1)
    delta = 0.5 * (delta + delta.conj().T)
    norm = op_norm(delta) if np.any(delta) else 0.0
    clip = 1.0 if norm == 0.0 else min(1.0, 1.0 / (2.0 * d * norm))
    return delta, clip


def sample_perturbed_state(d, ell=None, epsilon=0.004, c_const=DEFAULT_C, rng=None, basis=None, z=None):
    """Draw ``sigma_z`` with uniform signs ``z`` (or the given ``z``).

    The first ``ell`` elements of ``basis`` (Gell-Mann by default) are used.
    Clipping keeps ``||clip * Delta_z||_op <= 1/(2d)``, so ``sigma_z`` is a state.
    """
    basis = gell_mann_basis(d) if basis is None else basis
    if basis.dim != d:
        raise ValidationError("basis dimension does not match d")
    ell = _check_ell(d, default_ell(d) if ell is None else ell)
    if epsilon < 0:
        raise ValidationError("epsilon must be nonnegative")
    if z is None:
        z = make_rng(rng).choice(np.array([-1.0, 1.0]), size=ell)
    z = np.asarray(z, dtype=float)
    if z.shape != (ell,) or not np.all(np.abs(z) == 1):
        raise ValidationError(f"z must be a +-1 vector of length {ell}")
    delta, clip = _perturbation(basis, z, ell, epsilon, c_const)
    state = np.eye(d) / d + clip * delta
    return PerturbedState(z, ell, float(epsilon), float(c_const), delta, clip, as_density_matrix(state))


@dataclass(frozen=True, eq=False)
class InfoChannel:
    """Measurement information channel ``H(X) = sum_x M_x Tr[M_x X] / Tr[M_x]``.

    ``matrix`` is its ``(d^2, d^2)`` representation on column-stacked
    vectorizations.
    """

    matrix: np.ndarray
    effects: np.ndarray

    @property
    def dim(self):
        return self.effects.shape[1]

    @property
    def trace(self):
        return float(np.trace(self.matrix).real)

    def apply(self, x):
        weights = np.einsum("kab,ba->k", self.effects, x) / np.einsum("kaa->k", self.effects)
        return np.tensordot(weights, self.effects, axes=1)

    def quadratic_form(self, v):
        """``<V, H(V)> = sum_x Tr[M_x V]^2 / Tr[M_x]``, vectorized over a leading axis."""
        v = np.asarray(v)
        tr = np.einsum("kaa->k", self.effects).real
        overlaps = np.einsum("kab,...ba->...k", self.effects, v).real
        return (overlaps**2 / tr).sum(axis=-1)


def info_channel(m):
    """Build the information channel of a POVM, dropping zero effects."""
    eff = m.effects
    tr = np.einsum("kaa->k", eff).real
    norms = np.sqrt(np.sum(np.abs(eff) ** 2, axis=(1, 2)))
    zero_trace = tr <= 1e-12
    if np.any(zero_trace & (norms > 1e-9)):
        raise ValidationError("an effect has zero trace but nonzero norm")
    eff = eff[~zero_trace]
    vecs = np.swapaxes(eff, 1, 2).reshape(eff.shape[0], -1)
    mat = (vecs.T / tr[~zero_trace]) @ vecs.conj()
    return InfoChannel(0.5 * (mat + mat.conj().T), eff)


def chi_square(p, q):
    """``sum_x (p - q)^2 / q``; every ``q(x)`` must be positive."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise ValidationError("reference distribution has a zero-probability outcome")
    return float(np.sum((p - q) ** 2 / q))


@dataclass(frozen=True)
class ChiSquareCheck:
    empirical_mean: float
    standard_error: float
    bound: float
    loose_bound: float
    n_clipped: int

    @property
    def passed(self):
        return self.empirical_mean <= self.bound + 3.0 * self.standard_error + 1e-15


def chi_square_bound_check(m, basis, ell, epsilon, n_z, rng, c_const=DEFAULT_C):
    """Monte Carlo mean of ``chi2(p_{sigma_z} || p_{I/d})`` against its closed form.

    ``bound = c^2 eps^2 / ell * sum_{i <= ell} <V_i, H(V_i)>``, the exact mean
    before clipping. ``loose_bound`` replaces the partial sum by ``Tr C_M``.
    ``passed`` allows three standard errors of Monte Carlo slack.
    """
    rng = make_rng(rng)
    d = basis.dim
    if m.dim != d:
        raise ValidationError("POVM and basis dimensions differ")
    ell = _check_ell(d, ell)
    h = info_channel(m)
    q = born_distribution(np.eye(d) / d, m).probabilities
    if np.any(q <= 0):
        raise ValidationError("a POVM effect has zero probability under I/d; drop it first")
    scale = c_const**2 * epsilon**2 / ell
    bound = scale * float(h.quadratic_form(basis.elements[:ell]).sum())
    loose = scale * h.trace
    vals = np.empty(int(n_z))
    clipped = 0
    for i in range(int(n_z)):
        z = rng.choice(np.array([-1.0, 1.0]), size=ell)
        delta, clip = _perturbation(basis, z, ell, epsilon, c_const)
        clipped += clip < 1.0
        diff = clip * np.einsum("kab,ba->k", m.effects, delta).real
        vals[i] = float(np.sum(diff**2 / q))
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return ChiSquareCheck(float(vals.mean()), se, bound, loose, int(clipped))


def critical_epsilon(gamma, d, trace_h_sup):
    """``gamma d / (4 sqrt(sup Tr H))``: the trace-distance scale below which robust testing fails."""
    if gamma < 0 or d <= 0 or trace_h_sup <= 0:
        raise ValidationError("gamma must be nonnegative; d and trace_h_sup positive")
    return gamma * d / (4.0 * math.sqrt(trace_h_sup))


def emd_upper_bound(povms, n, epsilon):
    """``2 n eps sqrt(max_M Tr C_M) / d``: outcome changes needed to fake the ensemble.

    The perturbation constant ``c`` is not part of this formula.
    """
    povms = list(povms)
    if not povms:
        raise ValidationError("need at least one POVM")
    d = povms[0].dim
    t = max(info_channel(p).trace for p in povms)
    return 2.0 * n * epsilon * math.sqrt(t) / d


def coupling_diagnostic(d, gamma, n, rng, ell=None, c_const=DEFAULT_C, trials=1):
    """Couple basis outcomes of I/d toward a perturbed state at the critical epsilon.

    For each trial: draw a Haar basis and ``sigma_z`` with
    ``eps = critical_epsilon(gamma, d, d)``, sample ``n`` outcomes under
    I/d and run the budgeted coupling attack toward ``p_{sigma_z}``.

    Returns
    -------
    list of dict
        ``epsilon``, ``tv`` (per-index TV), ``trace_distance``,
        ``changes``, ``budget``, ``capped`` per trial.
    """
    rng = make_rng(rng)
    eps = critical_epsilon(gamma, d, d)
    rows = []
    for _ in range(int(trials)):
        povm = basis_povm(sample_haar_unitary(d, rng))
        ps = sample_perturbed_state(d, ell, eps, c_const, rng)
        p = born_distribution(np.eye(d) / d, povm)
        q = born_distribution(ps.state, povm)
        record = OutcomeRecord(sample_outcomes(p, n, rng))
        out = coupling_attack(record, CouplingPlan.repeated(p, q, n), gamma, rng)
        rows.append(
            {
                "epsilon": eps,
                "tv": 0.5 * float(np.abs(p.probabilities - q.probabilities).sum()),
                "trace_distance": trace_norm(ps.state - np.eye(d) / d),
                "changes": out.budget_used,
                "budget": int(math.floor(gamma * n + 1e-9)),
                "capped": out.capped,
            }
        )
    return rows
