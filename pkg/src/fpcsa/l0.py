"""L0 estimation over integer turnstile streams via prime fields.

An integer state ``x`` is reduced coordinatewise modulo a prime ``p``; the
sketch then estimates ``||x||_{0;F_p}``, the number of coordinates not
divisible by ``p``.  The prime is drawn uniformly from a set chosen so that
``||x||_0 - ||x||_{0;F_p} <= eps * ||x||_0`` except with probability 1/10.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, UsageError
from .primes import is_prime, primes_at_least, primes_first_n

INFINITY_NORM = "infinity_norm"
AVERAGE_NORM = "average_norm"
FIXED = "fixed"

# Above this many primes the failure rate is sampled instead of enumerated.
ENUMERATION_LIMIT = 1 << 20


class DegenerateSchemeWarning(UserWarning):
    """The scheme's prime set is empty; a fixed fallback prime was used."""


class ExactState:
    """Ground-truth turnstile state: element id -> nonzero value.

    With ``field=None`` values are Python ints (the integer turnstile
    model); otherwise they are elements of ``field`` and updates add in the
    field.
    """

    def __init__(self, entries=None, field=None):
        self.field = field
        self.entries = {}
        for v, k in (entries or {}).items():
            self.update(v, k)

    def update(self, element, k):
        if self.field is None:
            new = self.entries.get(element, 0) + int(k)
        else:
            new = self.field.add(self.entries.get(element, 0), k)
        if new:
            self.entries[element] = new
        else:
            self.entries.pop(element, None)

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, ExactState):
            return NotImplemented
        return self.field == other.field and self.entries == other.entries

    def __repr__(self):
        return f"ExactState({len(self.entries)} nonzero, field={self.field})"

    def l0(self):
        return len(self.entries)

    def l1(self):
        self._require_integer("l1")
        return sum(abs(v) for v in self.entries.values())

    def linf(self):
        self._require_integer("linf")
        return max((abs(v) for v in self.entries.values()), default=0)

    def _require_integer(self, what):
        if self.field is not None:
            raise UsageError(f"{what} is only defined for integer states")


def exact_l0(state, field=None):
    """``||x||_0``, or ``||x||_{0;F_p}`` when a prime field is given."""
    if field is None or state.field is not None:
        if state.field is not None and field is not None and field != state.field:
            raise UsageError(f"state lives in {state.field}, not {field}")
        return len(state.entries)
    if field.degree != 1:
        raise UsageError(f"integer states have no canonical reduction into {field}")
    p = field.characteristic
    return sum(1 for v in state.entries.values() if v % p)


def mass_discount(state, epsilon):
    """Copy of ``state`` with its ``floor(eps * tau / 2)`` largest-magnitude
    entries removed (``tau = ||x||_0``), ties broken by ascending element id."""
    if not 0 < epsilon < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    drop = math.floor(epsilon * len(state.entries) / 2)
    ranked = sorted(state.entries.items(), key=lambda kv: (-abs(kv[1]), kv[0]))
    out = ExactState(field=state.field)
    out.entries = dict(ranked[drop:])
    return out


@dataclass(frozen=True)
class PrimeScheme:
    """How the reduction prime is chosen.

    ``bound`` is the caller's bound on ``||x||_inf`` (infinity_norm) or on
    the average nonzero magnitude ``||x||_1 / ||x||_0`` (average_norm).
    """

    kind: str
    epsilon: Optional[float] = None
    bound: Optional[float] = None
    p: Optional[int] = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind == FIXED:
            if self.p is None or not is_prime(self.p):
                raise ConfigurationError(f"fixed scheme needs a prime p, got {self.p}")
            return
        if self.kind not in (INFINITY_NORM, AVERAGE_NORM):
            raise ConfigurationError(f"unknown scheme kind {self.kind!r}")
        if self.epsilon is None or not 0 < self.epsilon <= 1:
            raise ConfigurationError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.bound is None or self.bound <= 0:
            raise ConfigurationError(f"{self.kind} needs a positive bound, got {self.bound}")

    @classmethod
    def fixed(cls, p):
        return cls(FIXED, p=p)

    @classmethod
    def infinity_norm(cls, epsilon, linf, rng_seed=0):
        return cls(INFINITY_NORM, epsilon=epsilon, bound=linf, rng_seed=rng_seed)

    @classmethod
    def average_norm(cls, epsilon, average, rng_seed=0):
        return cls(AVERAGE_NORM, epsilon=epsilon, bound=average, rng_seed=rng_seed)

    def with_seed(self, rng_seed):
        return PrimeScheme(self.kind, self.epsilon, self.bound, self.p, rng_seed)


def prime_set_size(scheme):
    if scheme.kind == FIXED:
        return 1
    if scheme.kind == INFINITY_NORM:
        if scheme.bound < 2:
            return 0
        return math.ceil(10 * math.log2(scheme.bound) / scheme.epsilon - 1e-9)
    return math.ceil(10 / scheme.epsilon - 1e-9)


def prime_set(scheme):
    """The primes the scheme draws from uniformly (empty if degenerate)."""
    size = prime_set_size(scheme)
    if scheme.kind == FIXED:
        return [scheme.p]
    if size == 0:
        return []
    if scheme.kind == INFINITY_NORM:
        return primes_first_n(size)
    return primes_at_least(max(2, math.ceil(scheme.bound - 1e-9)), size)


def select_prime(scheme):
    """Draw the reduction prime; deterministic given ``scheme.rng_seed``."""
    primes = prime_set(scheme)
    if not primes:
        warnings.warn(
            f"{scheme.kind} with bound {scheme.bound} gives an empty prime set; "
            "using p = 2, which is exact for |x_v| < 2",
            DegenerateSchemeWarning,
            stacklevel=2,
        )
        return 2
    if len(primes) == 1:
        return primes[0]
    rng = np.random.default_rng(scheme.rng_seed)
    return primes[int(rng.integers(len(primes)))]


def _fails(values, l0, p, epsilon):
    lost = int(np.count_nonzero(values % p == 0))
    return lost > epsilon * l0


def scheme_failure_rate(scheme, state, trials=1000):
    """Fraction of scheme primes with ``||x||_0 - ||x||_{0;F_P} > eps ||x||_0``.

    Enumerates the whole prime set when it has at most ``ENUMERATION_LIMIT``
    members (exact); otherwise draws ``trials`` primes.
    """
    if state.field is not None:
        raise UsageError("failure rates are defined for integer states")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    eps = scheme.epsilon if scheme.epsilon is not None else 0.0
    values = list(state.entries.values())
    l0 = len(values)
    try:
        values = np.array(values, dtype=np.int64)
    except OverflowError:
        values = np.array(values, dtype=object)
    if l0 == 0:
        return 0.0
    size = prime_set_size(scheme)
    if size == 0:
        return float(_fails(values, l0, 2, eps))
    if size <= ENUMERATION_LIMIT:
        primes = prime_set(scheme)
        return sum(_fails(values, l0, p, eps) for p in primes) / len(primes)
    rng = np.random.default_rng(scheme.rng_seed)
    primes = prime_set(scheme)
    picks = rng.integers(len(primes), size=trials)
    return sum(_fails(values, l0, primes[int(i)], eps) for i in picks) / trials
