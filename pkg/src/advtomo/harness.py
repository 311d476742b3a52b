"""Seeded experiment orchestration, CSV output and the command line.

Every trial draws from its own generator keyed by
``mix64(seed, trial)``, so trials may run in any order or in parallel
and reruns of the same config reproduce every row.

Column meaning by kind:

``tomo``
    ``trace_error``/``hs_error`` of the state estimate; ``statistic`` is the
    number of samples the estimator discarded.
``test``
    Identity test of ``rho`` against ``I/d`` where ``rho`` sits at trace
    distance ``epsilon``; ``accept``, ``statistic``, ``threshold`` come from
    the tester.
``attack-demo``
    Basis outcomes of a random state, corrupted by the chosen attack;
    ``statistic`` is the l1 shift of the empirical law and ``threshold`` the
    ``2 gamma`` it may not exceed.
``moments``
    Haar moment of order ``order`` for a random Hermitian matrix;
    ``statistic`` is the Monte Carlo z-score against the exact value and
    ``hs_error`` the absolute Monte Carlo deviation.
``lb``
    ``statistic`` is the critical epsilon, ``threshold`` the per-copy EMD
    bound at that epsilon, ``trace_error`` the trace distance of a sampled
    perturbed state and ``budget_used`` the changes of a coupling attack
    toward it.
"""

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from ._rng import make_rng, mix64
from ._validation import ValidationError
from .adversary import (
    ContractViolation,
    CouplingPlan,
    OutcomeRecord,
    budget_for,
    coupling_attack,
    replace_attack,
    spam_attack,
    state_swap_attack,
)
from .core import hs_norm, maximally_mixed, random_density_matrix, random_hermitian, trace_norm
from .estimate import FilterTomography, NaiveTomography, SubsetOracleTomography
from .haar import MAX_MOMENT_ORDER, haar_trace_moment, sample_haar_states, sample_haar_unitary
from .lowerbound import critical_epsilon, default_ell, emd_upper_bound, sample_perturbed_state
from .measure import basis_povm, born_distribution, sample_outcomes, sample_uniform_povm
from .qtest import AuditError, TesterConfig, empirical_l1, robust_identity_test

logger = logging.getLogger(__name__)

__all__ = [
    "KINDS",
    "ESTIMATORS",
    "ATTACKS",
    "CSV_HEADER",
    "ExperimentConfig",
    "ResultRow",
    "run_trial",
    "run_experiment",
    "write_csv",
    "read_csv",
    "write_metadata",
    "parse_cli",
    "main",
]

KINDS = ("tomo", "test", "attack-demo", "moments", "lb")
ESTIMATORS = ("naive", "naive+rank", "filter", "subset-oracle")
ATTACKS = ("none", "replace", "coupling", "spam", "state-swap")
CSV_HEADER = (
    "trial,kind,d,r,n,gamma,epsilon,estimator,attack,trace_error,hs_error,"
    "accept,statistic,threshold,budget_used,wall_time_ms,derived_seed"
).split(",")

_SUPPORTED_ATTACKS = {
    "tomo": {"none", "replace", "state-swap"},
    "test": {"none", "replace", "coupling", "spam"},
    "attack-demo": {"none", "replace", "coupling", "spam"},
    "moments": {"none"},
    "lb": {"none", "coupling"},
}

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: ``trials`` independent runs of ``kind``.

    ``r`` is the state rank for ``tomo``/``attack-demo`` and the truncation
    rank of ``naive+rank``. ``ell`` (``lb`` only) defaults to ``ceil(d^2/2)``;
    ``order`` is the Haar moment order for ``moments``.
    """

    kind: str
    d: int = 4
    r: int = None
    n: int = 10_000
    gamma: float = 0.0
    epsilon: float = 0.0
    trials: int = 1
    seed: int = 0
    estimator: str = "naive"
    attack: str = "none"
    output_path: str = None
    ell: int = None
    order: int = 3
    workers: int = 1
    record_timing: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for name in ("d", "n", "trials", "seed", "order", "workers"):
            val = getattr(self, name)
            if isinstance(val, bool) or int(val) != val:
                raise ValidationError(f"{name} must be an integer, got {val!r}")
            object.__setattr__(self, name, int(val))
        if self.d < 2:
            raise ValidationError(f"d must be >= 2, got {self.d}")
        if self.n < 1 or self.trials < 1 or self.workers < 1:
            raise ValidationError("n, trials and workers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if not 0.0 <= self.gamma < 0.5:
            raise ValidationError(f"gamma must satisfy 0 <= gamma < 0.5, got {self.gamma}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.r is None:
            object.__setattr__(self, "r", self.d)
        if not 1 <= int(self.r) <= self.d:
            raise ValidationError(f"r must lie in [1, d], got {self.r}")
        object.__setattr__(self, "r", int(self.r))
        if self.estimator not in ESTIMATORS:
            raise ValidationError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.attack not in ATTACKS:
            raise ValidationError(f"attack must be one of {ATTACKS}, got {self.attack!r}")
        if self.attack not in _SUPPORTED_ATTACKS[self.kind]:
            raise ValidationError(f"attack {self.attack!r} is not available for kind {self.kind!r}")
        if self.kind == "tomo" and self.estimator == "subset-oracle" and self.n > 20:
            raise ValidationError("subset-oracle needs n <= 20")
        if self.kind == "tomo" and self.estimator in ("filter", "subset-oracle") and self.gamma <= 0:
            raise ValidationError(f"estimator {self.estimator!r} needs gamma > 0")
        if self.kind == "tomo" and self.estimator == "filter" and self.n < 10.0 / self.gamma**2:
            raise ValidationError(f"filter needs n >= 10/gamma^2 = {math.ceil(10.0 / self.gamma**2)}")
        if self.kind == "moments" and not 1 <= self.order <= MAX_MOMENT_ORDER:
            raise ValidationError(f"order must lie in [1, {MAX_MOMENT_ORDER}]")
        if self.kind == "lb":
            if self.ell is None:
                object.__setattr__(self, "ell", default_ell(self.d))
            if not self.d * self.d / 2 <= self.ell <= self.d * self.d - 1:
                raise ValidationError("ell must lie in [d^2/2, d^2 - 1]")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ResultRow:
    trial: int
    kind: str
    d: int
    r: int
    n: int
    gamma: float
    epsilon: float
    estimator: str
    attack: str
    trace_error: float = float("nan")
    hs_error: float = float("nan")
    accept: bool = None
    statistic: float = float("nan")
    threshold: float = float("nan")
    budget_used: int = 0
    wall_time_ms: float = float("nan")
    derived_seed: int = 0


def _tomo(cfg, rng):
    rho = random_density_matrix(cfg.d, rng, rank=cfg.r)
    record = OutcomeRecord(sample_uniform_povm(rho, rng, size=cfg.n))
    if cfg.attack == "replace":
        payload = np.zeros(cfg.d, dtype=np.complex128)
        payload[0] = 1.0
        record = replace_attack(record, cfg.gamma, payload, rng)
    elif cfg.attack == "state-swap":
        record = state_swap_attack(record, cfg.gamma, random_density_matrix(cfg.d, rng, rank=1), rng)
    rank = cfg.r if cfg.estimator == "naive+rank" else None
    if cfg.estimator in ("naive", "naive+rank"):
        est = NaiveTomography(rank=rank)
    elif cfg.estimator == "filter":
        est = FilterTomography(gamma=cfg.gamma, random_state=rng)
    else:
        est = SubsetOracleTomography(gamma=cfg.gamma)
    est.fit(record.entries)
    rho_hat = est.estimate()
    return dict(
        trace_error=trace_norm(rho_hat - rho),
        hs_error=hs_norm(rho_hat - rho),
        statistic=float(est.n_removed_),
        budget_used=record.budget_used,
    )


def _far_state(d, rng):
    return np.outer(*(2 * [sample_haar_states(d, 1, rng)[0]]))


def _corrupt_labels(cfg, record, p, rng):
    """Apply a discrete-outcome attack that pushes ``record`` toward a far outcome law."""
    n = len(record)
    if cfg.attack == "replace":
        return replace_attack(record, cfg.gamma, p.labels[0], rng)
    if cfg.attack in ("coupling", "spam"):
        d = p.probabilities.size
        far = np.zeros(d)
        far[int(np.argmin(p.probabilities))] = 1.0
        if cfg.attack == "coupling":
            return coupling_attack(record, CouplingPlan.repeated(p.probabilities, far, n), cfg.gamma, rng)
        # move halfway-budget worth of mass: per-index TV exactly gamma/2
        tv = 0.5 * np.abs(far - p.probabilities).sum()
        t = min(1.0, 0.5 * cfg.gamma / tv) if tv > 0 else 0.0
        noisy = (1 - t) * p.probabilities + t * far
        return spam_attack(record, CouplingPlan.repeated(p.probabilities, noisy, n), cfg.gamma / 2, rng)
    return record


def _perturbed_away(sigma, epsilon, rng):
    """State at trace distance ``epsilon`` from the maximally mixed ``sigma``."""
    d = sigma.shape[0]
    u = sample_haar_unitary(d, rng)
    signs = np.where(np.arange(d) < d // 2, 1.0, -1.0)
    if d % 2:
        signs[-1] = 0.0
    half = (d // 2) or 1
    delta = (u * (signs * epsilon / (2 * half))) @ u.conj().T
    return sigma + 0.5 * (delta + delta.conj().T)


def _test(cfg, rng):
    sigma = maximally_mixed(cfg.d)
    rho = _perturbed_away(sigma, cfg.epsilon, rng)
    povm = basis_povm(sample_haar_unitary(cfg.d, rng))
    q = born_distribution(sigma, povm)
    record = OutcomeRecord(sample_outcomes(born_distribution(rho, povm), cfg.n, rng))
    record = _corrupt_labels(cfg, record, born_distribution(rho, povm), rng)
    verdict = robust_identity_test(record, q, TesterConfig(gamma=cfg.gamma), rng)
    return dict(
        trace_error=trace_norm(rho - sigma),
        hs_error=hs_norm(rho - sigma),
        accept=verdict.accept,
        statistic=verdict.statistic,
        threshold=verdict.threshold,
        budget_used=verdict.budget_used,
    )


def _attack_demo(cfg, rng):
    rho = random_density_matrix(cfg.d, rng, rank=cfg.r)
    povm = basis_povm(sample_haar_unitary(cfg.d, rng))
    p = born_distribution(rho, povm)
    clean = OutcomeRecord(sample_outcomes(p, cfg.n, rng))
    dirty = _corrupt_labels(cfg, clean, p, rng)
    counts = [np.bincount(r.entries.astype(int), minlength=cfg.d) / cfg.n for r in (clean, dirty)]
    shift = float(np.abs(counts[1] - counts[0]).sum())
    return dict(
        accept=shift <= 2 * cfg.gamma + 1e-12,
        statistic=shift,
        threshold=2 * cfg.gamma,
        trace_error=empirical_l1(dirty, p),
        budget_used=dirty.budget_used,
    )


def _moments(cfg, rng, n_mc=None):
    m = random_hermitian(cfg.d, rng)
    exact = haar_trace_moment(m, cfg.order)
    v = sample_haar_states(cfg.d, cfg.n if n_mc is None else n_mc, rng)
    vals = np.einsum("ia,ab,ib->i", v.conj(), m, v).real ** cfg.order
    se = vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else float("inf")
    z = abs(vals.mean() - exact) / se if se > 0 else 0.0
    return dict(statistic=float(z), threshold=5.0, accept=bool(z <= 5.0), hs_error=abs(vals.mean() - exact))


def _lb(cfg, rng):
    d = cfg.d
    eps = critical_epsilon(cfg.gamma, d, d) if cfg.epsilon == 0 else cfg.epsilon
    povm = basis_povm(sample_haar_unitary(d, rng))
    ps = sample_perturbed_state(d, cfg.ell, eps, rng=rng)
    p = born_distribution(maximally_mixed(d), povm)
    q = born_distribution(ps.state, povm)
    record = OutcomeRecord(sample_outcomes(p, cfg.n, rng))
    if cfg.attack == "coupling":
        record = coupling_attack(record, CouplingPlan.repeated(p, q, cfg.n), cfg.gamma, rng)
    dist = trace_norm(ps.state - maximally_mixed(d))
    return dict(
        statistic=critical_epsilon(cfg.gamma, d, d),
        threshold=emd_upper_bound([povm], cfg.n, eps) / cfg.n,
        trace_error=dist,
        hs_error=hs_norm(ps.state - maximally_mixed(d)),
        accept=bool(dist >= eps),
        budget_used=record.budget_used,
    )


_RUNNERS = {"tomo": _tomo, "test": _test, "attack-demo": _attack_demo, "moments": _moments, "lb": _lb}


def run_trial(cfg, trial):
    """Run one trial; raises :class:`AuditError` if the corruption budget is exceeded."""
    seed = mix64(cfg.seed, trial)
    rng = make_rng(seed)
    start = time.perf_counter()
    out = _RUNNERS[cfg.kind](cfg, rng)
    elapsed = 1e3 * (time.perf_counter() - start)
    row = ResultRow(
        trial=trial, kind=cfg.kind, d=cfg.d, r=cfg.r, n=cfg.n, gamma=cfg.gamma, epsilon=cfg.epsilon,
        estimator=cfg.estimator, attack=cfg.attack, wall_time_ms=elapsed, derived_seed=seed, **out,
    )
    if row.budget_used > budget_for(cfg.gamma, cfg.n):
        raise AuditError(f"trial {trial}: budget_used {row.budget_used} exceeds floor(gamma n)")
    return row


def _run_one(args):
    return run_trial(*args)


def run_experiment(cfg):
    """All trials of ``cfg``, sorted by trial index."""
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]
    return sorted(rows, key=lambda r: r.trial)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        # not-applicable columns are NaN and print empty
        return "" if math.isnan(value) else format(value, ".17g")
    return str(value)


def _row_values(row, record_timing):
    vals = dataclasses.asdict(row)
    if not record_timing:
        vals["wall_time_ms"] = None
    return [_fmt(vals[k]) for k in CSV_HEADER]


def write_csv(rows, path, record_timing=False):
    """Write rows under the fixed header.

    ``wall_time_ms`` is left empty unless ``record_timing`` is set, so the
    file stays byte-identical across reruns.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(_row_values(row, record_timing))


_INT_COLS = {"trial", "d", "r", "n", "budget_used", "derived_seed"}
_STR_COLS = {"kind", "estimator", "attack"}


def _parse(key, text):
    if key in _STR_COLS:
        return text
    if key in _INT_COLS:
        return int(text)
    if key == "accept":
        return None if text == "" else text == "true"
    return float("nan") if text == "" else float(text)


def read_csv(path):
    """Parse a results file back into :class:`ResultRow` objects."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValidationError("unexpected CSV header")
        return [ResultRow(**{k: _parse(k, v) for k, v in rec.items()}) for rec in reader]


def _code_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def write_metadata(cfg, rows, path):
    meta = {
        "config": dataclasses.asdict(cfg),
        "code_version": _code_version(),
        "numpy_version": np.__version__,
        "csv_header": CSV_HEADER,
        "wall_time_ms": [r.wall_time_ms for r in rows],
    }
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dim", dest="d", type=int)
    common.add_argument("--rank", dest="r", type=int)
    common.add_argument("--copies", dest="n", type=int)
    common.add_argument("--gamma", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--estimator", choices=ESTIMATORS)
    common.add_argument("--attack", choices=ATTACKS)
    common.add_argument("--out", dest="output_path")
    common.add_argument("--config", help="JSON file of config fields; flags override it")
    common.add_argument("--ell", type=int, help="perturbation size for lb (default ceil(d^2/2))")
    common.add_argument("--order", type=int, help="moment order for moments (default 3)")
    common.add_argument("--workers", type=int, help="worker processes (default 1)")
    common.add_argument("--record-timing", dest="record_timing", action="store_const", const=True,
                        help="write wall_time_ms into the CSV (breaks byte-identical reruns)")
    parser = argparse.ArgumentParser(prog="advtomo", description="Adversarially robust tomography experiments.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="{" + ",".join(KINDS) + "}")
    for kind in KINDS:
        sub.add_parser(kind, parents=[common])
    return parser


def parse_cli(argv):
    """Map argv onto an :class:`ExperimentConfig`.

    Raises
    ------
    SystemExit
        Code 2 on usage errors (argparse).
    ValidationError
        On invalid field values.
    """
    ns = vars(_build_parser().parse_args(argv))
    data = {}
    config_path = ns.pop("config")
    if config_path is not None:
        data = json.loads(Path(config_path).read_text())
        if not isinstance(data, dict):
            raise ValidationError("config file must hold a JSON object")
        data.pop("kind", None)
    data.update({k: v for k, v in ns.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_cli(argv)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = run_experiment(cfg)
    except (AuditError, ContractViolation, AssertionError) as exc:
        print(f"runtime assertion failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if cfg.output_path:
        write_csv(rows, cfg.output_path, cfg.record_timing)
        write_metadata(cfg, rows, str(cfg.output_path) + ".json")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(_row_values(row, cfg.record_timing))
    return 0
