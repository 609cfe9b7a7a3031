"""Seeded Monte Carlo experiments against ground truth.

Trial ``t`` builds a fresh sketch with seed ``derive_seed(base_seed, t)`` and
element ids ``(t << 40) | j``, so trials are independent and a config always
reproduces the same report.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field as dc_field
from typing import Optional

import numpy as np

from .constants import constants_for
from .errors import ConfigurationError, ExperimentError
from .field import FieldSpec
from .hashing import DEFAULT_COLUMNS, derive_seed
from .l0 import PrimeScheme, select_prime
from .sketch import LEVEL_SHIFT, Sketch

DISTINCT_INSERTS = "distinct_inserts"
INSERT_DELETE_PAIRS = "insert_delete_pairs"
ZTURNSTILE = "zturnstile"
WORKLOADS = (DISTINCT_INSERTS, INSERT_DELETE_PAIRS, ZTURNSTILE)

_TRIAL_SHIFT = 40
_DELETED_BASE = 1 << 39
_U64 = np.uint64


@dataclass(frozen=True)
class ValueDistribution:
    """Net integer values for the ``zturnstile`` workload.

    ``uniform``: nonzero integers uniform on ``[-max_abs, max_abs]``.
    ``smooth``: signed products of small primes, capped at ``max_abs``
    (adversarial for small reduction primes).
    """

    kind: str = "uniform"
    max_abs: int = 1000

    def sample(self, rng, n):
        if self.max_abs < 1 or self.max_abs >= 1 << 40:
            raise ConfigurationError(f"max_abs must lie in [1, 2^40), got {self.max_abs}")
        sign = np.where(rng.random(n) < 0.5, -1, 1)
        if self.kind == "uniform":
            return sign * rng.integers(1, self.max_abs + 1, size=n)
        if self.kind == "smooth":
            out = np.ones(n, dtype=np.int64)
            for p in (2, 3, 5, 7, 11, 13):
                e = rng.integers(0, 4, size=n)
                grown = out * p ** e
                out = np.where(grown <= self.max_abs, grown, out)
            return sign * out
        raise ConfigurationError(f"unknown value distribution {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    field: Optional[FieldSpec]
    m: int
    true_cardinality: int
    trials: int
    columns: int = DEFAULT_COLUMNS
    base_seed: int = 0
    workload: str = DISTINCT_INSERTS
    values: Optional[ValueDistribution] = None
    scheme: Optional[PrimeScheme] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if not 1 <= self.true_cardinality < _DELETED_BASE:
            raise ConfigurationError(f"true_cardinality must lie in [1, 2^39), got {self.true_cardinality}")
        if self.workload not in WORKLOADS:
            raise ConfigurationError(f"unknown workload {self.workload!r}; expected one of {WORKLOADS}")
        if self.workload == ZTURNSTILE:
            if self.scheme is None:
                raise ConfigurationError("zturnstile needs a prime scheme")
        elif self.field is None:
            raise ConfigurationError(f"{self.workload} needs a field")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("field") is not None:
            d["field"] = FieldSpec.parse(d["field"])
        if d.get("values") is not None:
            d["values"] = ValueDistribution(**d["values"])
        if d.get("scheme") is not None:
            d["scheme"] = PrimeScheme(**d["scheme"])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["field"] = None if self.field is None else str(self.field)
        return d


@dataclass(frozen=True)
class LevelRate:
    level: int
    observed: float
    predicted: float
    sigma: float
    samples: int

    @property
    def z_score(self):
        if self.sigma == 0:
            return 0.0 if self.observed == self.predicted else math.inf
        return (self.observed - self.predicted) / self.sigma


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    trials: int
    mean_estimate: float
    mean_target: float
    relative_bias: float
    relative_stddev: float
    predicted_relative_error: float
    calibrated_fraction: float
    levels: tuple
    estimates: tuple = dc_field(repr=False)
    # zturnstile only: targets against the integer L0 as well
    mean_l0: Optional[float] = None
    relative_bias_vs_l0: Optional[float] = None
    reduction_loss_rate: Optional[float] = None
    elapsed_seconds: float = dc_field(default=0.0, compare=False)

    @property
    def stderr_of_bias(self):
        return self.relative_stddev / math.sqrt(self.trials)

    def level(self, j):
        return self.levels[j]

    def to_dict(self, include_estimates=False):
        d = {
            "config": self.config.to_dict(),
            "trials": self.trials,
            "mean_estimate": self.mean_estimate,
            "mean_target": self.mean_target,
            "relative_bias": self.relative_bias,
            "relative_stddev": self.relative_stddev,
            "predicted_relative_error": self.predicted_relative_error,
            "calibrated_fraction": self.calibrated_fraction,
            "levels": [asdict(lv) for lv in self.levels],
            "throughput_updates_per_second": self._throughput(),
        }
        if self.mean_l0 is not None:
            d.update(
                mean_l0=self.mean_l0,
                relative_bias_vs_l0=self.relative_bias_vs_l0,
                reduction_loss_rate=self.reduction_loss_rate,
            )
        if include_estimates:
            d["estimates"] = list(self.estimates)
        return d

    def _throughput(self):
        if not self.elapsed_seconds:
            return None
        per_trial = self.config.true_cardinality * (3 if self.config.workload == INSERT_DELETE_PAIRS else 1)
        return per_trial * self.trials / self.elapsed_seconds


def level_masses(offsets, columns):
    """``P(level = l)`` per row (rows x columns), including boundary mass."""
    j = np.arange(columns + 1, dtype=np.float64)
    tail = 2.0 ** (-(j[None, :] + offsets[:, None]))  # P(level >= j) for j >= 1
    tail[:, 0] = 1.0
    tail[:, columns] = 0.0
    return tail[:, :-1] - tail[:, 1:]


def predicted_nonzero(offsets, columns, n, order):
    """Probability each cell is nonzero after ``n`` distinct insertions.

    Interior levels reduce to ``(1 - exp(-n/m * 2^-(l + 1 + theta))) (1 - 1/|F|)``.
    """
    m = offsets.size
    hits = 1.0 - np.exp(-n / m * level_masses(offsets, columns))
    return hits * (1.0 - 1.0 / order)


def _trial_ids(t, n, base=0):
    return (_U64(t) << _U64(_TRIAL_SHIFT)) | (_U64(base) + np.arange(n, dtype=_U64))


def _run_trial(cfg, t):
    seed = derive_seed(cfg.base_seed, t)
    n = cfg.true_cardinality
    ids = _trial_ids(t, n)
    extra = {}
    if cfg.workload == ZTURNSTILE:
        rng = np.random.default_rng(seed)
        p = select_prime(cfg.scheme.with_seed(seed))
        field = FieldSpec(p)
        x = cfg.values.sample(rng, n)
        transient = rng.integers(0, cfg.values.max_abs + 1, size=n)
        sk = Sketch(field, cfg.m, cfg.columns, seed)
        # each element arrives as (x + d) then is decremented by d
        sk.update_many(ids, ((x + transient) % p).astype(_U64))
        sk.update_many(ids, ((-transient) % p).astype(_U64))
        target = int(np.count_nonzero(x % p))
        extra = {"l0": n}
    else:
        field = cfg.field
        sk = Sketch(field, cfg.m, cfg.columns, seed)
        sk.update_many(ids)
        if cfg.workload == INSERT_DELETE_PAIRS:
            gone = _trial_ids(t, n, _DELETED_BASE)
            sk.update_many(gone)
            sk.update_many(gone, np.full(n, field.neg(1), dtype=_U64))
        target = n
    consts = constants_for(cfg.m, field.order)
    est = sk.estimate(consts)
    observed = sk.table != 0
    predicted = predicted_nonzero(sk.plan.offsets, cfg.columns, target, field.order)
    return est, target, consts.rel_error_exact, observed, predicted, extra


def run_experiment(cfg):
    """Run ``cfg.trials`` independent trials and summarise them."""
    started = time.perf_counter()
    estimates = np.empty(cfg.trials)
    targets = np.empty(cfg.trials)
    rel_errors = np.empty(cfg.trials)
    calibrated = 0
    obs_sum = np.zeros(cfg.columns)
    pred_sum = np.zeros(cfg.columns)
    var_sum = np.zeros(cfg.columns)
    l0s = []
    for t in range(cfg.trials):
        try:
            est, target, rel, observed, predicted, extra = _run_trial(cfg, t)
        except MemoryError as exc:
            raise ExperimentError(f"out of memory ({exc})", completed=t) from exc
        estimates[t], targets[t], rel_errors[t] = est.value, target, rel
        calibrated += est.calibrated
        obs_sum += observed.sum(axis=0)
        pred_sum += predicted.sum(axis=0)
        var_sum += (predicted * (1.0 - predicted)).sum(axis=0)
        if extra:
            l0s.append(extra["l0"])
    samples = cfg.trials * cfg.m
    levels = tuple(
        LevelRate(j, obs_sum[j] / samples, pred_sum[j] / samples, math.sqrt(var_sum[j]) / samples, samples)
        for j in range(cfg.columns)
    )
    ratios = estimates / targets
    std = float(np.std(ratios, ddof=1)) if cfg.trials > 1 else 0.0
    report = dict(
        config=cfg,
        trials=cfg.trials,
        mean_estimate=float(estimates.mean()),
        mean_target=float(targets.mean()),
        relative_bias=float(ratios.mean() - 1.0),
        relative_stddev=std,
        predicted_relative_error=float(rel_errors.mean()),
        calibrated_fraction=calibrated / cfg.trials,
        levels=levels,
        estimates=tuple(estimates.tolist()),
        elapsed_seconds=time.perf_counter() - started,
    )
    if l0s:
        l0 = np.array(l0s, dtype=np.float64)
        report.update(
            mean_l0=float(l0.mean()),
            relative_bias_vs_l0=float((estimates / l0).mean() - 1.0),
            reduction_loss_rate=float(((l0 - targets) / l0).mean()),
        )
    return ExperimentReport(**report)


def center_level(n, m):
    """Stored level whose estimator column is ``log2(n / m)``."""
    return int(round(math.log2(n / m))) - LEVEL_SHIFT


def cell_law_check(cfg, window=3, report=None):
    """Observed vs predicted nonzero-cell rates for the levels within
    ``window`` of the level where ``n / m`` elements are expected."""
    if cfg.workload != DISTINCT_INSERTS:
        raise ConfigurationError("the cell law is checked on distinct_inserts workloads")
    if report is None:
        report = run_experiment(cfg)
    c = center_level(cfg.true_cardinality, cfg.m)
    lo, hi = max(0, c - window), min(cfg.columns - 1, c + window)
    return [report.levels[j] for j in range(lo, hi + 1)]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def evaluate_checks(report, checks):
    """Evaluate acceptance checks from a simulate config.

    Supported keys: ``unbiased: {sigmas}``, ``relative_error: {target,
    tolerance}`` (target a number, ``"exact"`` or ``"asymptotic"``) and
    ``cell_law: {sigmas, window}``.
    """
    out = []
    cfg = report.config
    if "unbiased" in checks:
        k = checks["unbiased"].get("sigmas", 3.0)
        bound = k * report.stderr_of_bias
        out.append(CheckResult(
            "unbiased", abs(report.relative_bias) < bound,
            f"|bias| {abs(report.relative_bias):.5f} vs {k} SE = {bound:.5f}",
        ))
    if "relative_error" in checks:
        opts = checks["relative_error"]
        target = opts.get("target", "exact")
        if target == "exact":
            target = report.predicted_relative_error
        elif target == "asymptotic":
            order = cfg.field.order if cfg.field is not None else None
            if order is None:
                raise ConfigurationError("asymptotic target needs a fixed field")
            target = constants_for(cfg.m, order).rel_error_asymptotic
        tol = opts.get("tolerance", 0.15)
        ratio = report.relative_stddev / float(target)
        out.append(CheckResult(
            "relative_error", abs(ratio - 1.0) <= tol,
            f"stddev {report.relative_stddev:.5f} / target {float(target):.5f} = {ratio:.4f} (tol {tol})",
        ))
    if "cell_law" in checks:
        opts = checks["cell_law"]
        k = opts.get("sigmas", 5.0)
        rows = cell_law_check(cfg, opts.get("window", 3), report)
        worst = max(rows, key=lambda lv: abs(lv.z_score))
        out.append(CheckResult(
            "cell_law", all(abs(lv.z_score) <= k for lv in rows),
            f"worst level {worst.level}: z = {worst.z_score:+.2f} (limit {k})",
        ))
    unknown = set(checks) - {"unbiased", "relative_error", "cell_law"}
    if unknown:
        raise ConfigurationError(f"unknown checks {sorted(unknown)}")
    return out
