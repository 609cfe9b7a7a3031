"""Prime generation: deterministic Miller-Rabin and a segmented sieve."""

import math

import numpy as np

from .errors import ResourceLimitError

# Witness set that is deterministic for every n < 3.3e24 (covers all 64-bit n).
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)

SEGMENT_SIZE = 1 << 18
MAX_PRIME_COUNT = 50_000_000
# Above this the base-prime table for a sieve gets large; scan with Miller-Rabin.
SIEVE_CEILING = 1 << 40


def is_prime(n):
    """Deterministic primality test for integers below 3.3e24."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _small_primes(limit):
    """All primes <= limit by the plain sieve of Eratosthenes."""
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    flags = np.ones(limit + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return np.flatnonzero(flags).astype(np.int64)


def _segments(lower):
    """Yield arrays of consecutive primes >= lower, one sieve segment at a time."""
    lo = max(lower, 2)
    base = _small_primes(math.isqrt(lo + SEGMENT_SIZE) + 1)
    while True:
        hi = lo + SEGMENT_SIZE
        root = math.isqrt(hi) + 1
        if base.size == 0 or base[-1] < root:
            base = _small_primes(2 * root)
        flags = np.ones(hi - lo, dtype=bool)
        for p in base:
            p = int(p)
            if p * p >= hi:
                break
            start = max(p * p, -(-lo // p) * p)
            flags[start - lo :: p] = False
        yield np.flatnonzero(flags) + lo
        lo = hi


def _check_budget(count):
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if count > MAX_PRIME_COUNT:
        raise ResourceLimitError(
            f"{count} primes exceeds the sieve budget of {MAX_PRIME_COUNT}"
        )


def primes_first_n(count):
    """The first ``count`` primes in increasing order."""
    return primes_at_least(2, count)


def primes_at_least(lower, count):
    """The first ``count`` primes that are >= ``lower``, increasing."""
    _check_budget(count)
    if lower < 2:
        raise ValueError(f"lower must be >= 2, got {lower}")
    if lower > SIEVE_CEILING:
        out = []
        n = lower
        while len(out) < count:
            if is_prime(n):
                out.append(n)
            n += 1
        return out
    chunks = []
    found = 0
    for seg in _segments(lower):
        chunks.append(seg[: count - found])
        found += chunks[-1].size
        if found >= count:
            break
    return np.concatenate(chunks).tolist()


def next_prime(n):
    """Smallest prime >= n."""
    return primes_at_least(max(n, 2), 1)[0]
