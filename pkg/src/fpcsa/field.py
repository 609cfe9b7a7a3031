"""Finite-field arithmetic for GF(p) and GF(2^k).

Field elements are plain Python ints (or ``uint64`` numpy arrays for the
batch helpers): residues ``0..p-1`` for prime fields, polynomial bit-vectors
for GF(2^k) where bit ``i`` is the coefficient of ``x^i``.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, UsageError
from .primes import is_prime

MAX_PRIME = 1 << 61
MAX_BINARY_DEGREE = 32

# Lexicographically smallest irreducible polynomial of each degree over GF(2),
# bit i = coefficient of x^i.  Verified by the test suite.
IRREDUCIBLE_POLYS = {
    2: 0x7, 3: 0xB, 4: 0x13, 5: 0x25, 6: 0x43, 7: 0x83, 8: 0x11B,
    9: 0x203, 10: 0x409, 11: 0x805, 12: 0x1009, 13: 0x201B, 14: 0x4021,
    15: 0x8003, 16: 0x1002B, 17: 0x20009, 18: 0x40009, 19: 0x80027,
    20: 0x100009, 21: 0x200005, 22: 0x400003, 23: 0x800021, 24: 0x100001B,
    25: 0x2000009, 26: 0x400001B, 27: 0x8000027, 28: 0x10000003,
    29: 0x20000005, 30: 0x40000003, 31: 0x80000009, 32: 0x10000008D,
}

_SPEC_RE = re.compile(r"^\s*gf\(\s*(\d+)\s*(?:\^\s*(\d+)\s*)?\)\s*$", re.IGNORECASE)
_U64 = np.uint64
_M32 = _U64(0xFFFFFFFF)


# -- GF(2)[x] helpers --------------------------------------------------------

def clmul(a, b):
    """Carry-less product of two GF(2)[x] polynomials."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        b >>= 1
    return r


def poly_mod(a, f):
    df = f.bit_length() - 1
    while a and a.bit_length() - 1 >= df:
        a ^= f << (a.bit_length() - 1 - df)
    return a


def _poly_gcd(a, b):
    while b:
        a, b = b, poly_mod(a, b)
    return a


def _prime_factors(n):
    out, d = set(), 2
    while d * d <= n:
        while n % d == 0:
            out.add(d)
            n //= d
        d += 1
    if n > 1:
        out.add(n)
    return out


@functools.lru_cache(maxsize=None)
def is_irreducible(f):
    """Rabin's irreducibility test for a GF(2)[x] polynomial of degree >= 1."""
    k = f.bit_length() - 1
    if k < 1:
        return False

    def x_pow_2e(e):
        x = 2
        for _ in range(e):
            x = poly_mod(clmul(x, x), f)
        return x

    if x_pow_2e(k) != 2:
        return False
    return all(_poly_gcd(f, x_pow_2e(k // q) ^ 2) == 1 for q in _prime_factors(k))


def _mulhi64(a, b):
    """High 64 bits of ``a * b`` for a uint64 array ``a`` and scalar ``b < 2**64``."""
    ah, al = a >> _U64(32), a & _M32
    bh, bl = _U64(b >> 32), _U64(b & 0xFFFFFFFF)
    ll = al * bl
    hl = ah * bl
    lh = al * bh
    carry = ((hl & _M32) + (lh & _M32) + (ll >> _U64(32))) >> _U64(32)
    return ah * bh + (hl >> _U64(32)) + (lh >> _U64(32)) + carry


@dataclass(frozen=True)
class FieldSpec:
    """A concrete finite field: GF(p) or GF(2^k) with a reduction polynomial."""

    characteristic: int
    degree: int = 1
    reduction_poly: Optional[int] = None

    def __post_init__(self):
        p, k, f = self.characteristic, self.degree, self.reduction_poly
        if not is_prime(p):
            raise UsageError(f"characteristic {p} is not prime")
        if k < 1:
            raise UsageError(f"degree must be >= 1, got {k}")
        if k == 1:
            if f is not None:
                raise UsageError("prime fields take no reduction polynomial")
            if p >= MAX_PRIME:
                raise UsageError(f"prime fields are limited to p < 2^61, got {p}")
            return
        if p != 2:
            raise UsageError("extension fields are only supported in characteristic 2")
        if k > MAX_BINARY_DEGREE:
            raise UsageError(f"GF(2^k) supports k <= {MAX_BINARY_DEGREE}, got {k}")
        if f is None:
            object.__setattr__(self, "reduction_poly", IRREDUCIBLE_POLYS[k])
        elif f.bit_length() - 1 != k or not is_irreducible(f):
            raise UsageError(f"{f:#x} is not an irreducible polynomial of degree {k}")

    @classmethod
    def prime(cls, p):
        return cls(p)

    @classmethod
    def binary(cls, k, reduction_poly=None):
        if k == 1:
            return cls(2)
        return cls(2, k, reduction_poly)

    @classmethod
    def parse(cls, text):
        """Parse ``gf(p)`` or ``gf(2^k)``."""
        m = _SPEC_RE.match(text)
        if not m:
            raise UsageError(f"unrecognised field spec {text!r}; expected gf(p) or gf(2^k)")
        base, exp = int(m.group(1)), int(m.group(2) or 1)
        if exp == 1:
            if not is_prime(base):
                raise UsageError(f"gf({base}): {base} is not prime (write prime powers as gf(2^k))")
            return cls(base)
        if base != 2:
            raise UsageError(f"gf({base}^{exp}): only characteristic-2 extensions are supported")
        return cls.binary(exp)

    def __str__(self):
        if self.degree == 1:
            return f"gf({self.characteristic})"
        return f"gf(2^{self.degree})"

    @property
    def order(self):
        return self.characteristic ** self.degree

    @property
    def is_binary(self):
        """True when elements are bit-vectors (characteristic 2)."""
        return self.characteristic == 2

    @property
    def bits(self):
        """Bits needed to store one element."""
        return max(1, math.ceil(math.log2(self.order)))

    zero = 0
    one = 1

    def check(self, a):
        if not (isinstance(a, (int, np.integer)) and 0 <= a < self.order):
            raise UsageError(f"{a!r} is not an element of {self}")
        return int(a)

    # -- scalar arithmetic ----------------------------------------------------

    def add(self, a, b):
        a, b = self.check(a), self.check(b)
        if self.is_binary:
            return a ^ b
        return (a + b) % self.characteristic

    def neg(self, a):
        a = self.check(a)
        if self.is_binary:
            return a
        return (-a) % self.characteristic

    def sub(self, a, b):
        return self.add(a, self.neg(b))

    def mul(self, a, b):
        a, b = self.check(a), self.check(b)
        if self.degree == 1:
            return a * b % self.characteristic
        f, top = self.reduction_poly, 1 << self.degree
        r = 0
        while b:
            if b & 1:
                r ^= a
            b >>= 1
            a <<= 1
            if a & top:
                a ^= f
        return r

    def inv(self, a):
        a = self.check(a)
        if a == 0:
            raise DomainError(f"zero has no multiplicative inverse in {self}")
        if self.degree == 1:
            return pow(a, -1, self.characteristic)
        # a^(|F|-2) by square-and-multiply
        e, r = self.order - 2, 1
        while e:
            if e & 1:
                r = self.mul(r, a)
            a = self.mul(a, a)
            e >>= 1
        return r

    def embed(self, z):
        """Image of the integer ``z`` in a prime field."""
        if self.degree != 1:
            raise UsageError(f"integers have no canonical embedding into {self} here")
        return int(z) % self.characteristic

    def sample_uniform(self, raw_bits):
        """Map 64 uniform bits to a (near-)uniform field element."""
        raw_bits = int(raw_bits) & 0xFFFFFFFFFFFFFFFF
        q = self.order
        if q & (q - 1) == 0:
            return raw_bits & (q - 1)
        return (raw_bits * q) >> 64

    def elements(self):
        return range(self.order)

    # -- batch arithmetic on uint64 arrays -------------------------------------

    def add_array(self, a, b):
        a = np.asarray(a, dtype=_U64)
        b = np.asarray(b, dtype=_U64)
        if self.is_binary:
            return a ^ b
        return (a + b) % _U64(self.characteristic)

    def neg_array(self, a):
        a = np.asarray(a, dtype=_U64)
        if self.is_binary:
            return a.copy()
        p = _U64(self.characteristic)
        return (p - a) % p

    def mul_array(self, a, b):
        a = np.asarray(a, dtype=_U64)
        b = np.asarray(b, dtype=_U64)
        if self.degree == 1:
            p = self.characteristic
            if p <= 1 << 32:
                return (a * b) % _U64(p)
            prod = a.astype(object) * b.astype(object) % p
            return np.asarray(prod, dtype=_U64)
        k, f = self.degree, _U64(self.reduction_poly)
        a, b = np.broadcast_arrays(a, b)
        a = a.copy()
        r = np.zeros(a.shape, dtype=_U64)
        one, kk = _U64(1), _U64(k)
        for i in range(k):
            r ^= a * ((b >> _U64(i)) & one)
            a <<= one
            a ^= ((a >> kk) & one) * f
        return r

    def sample_uniform_array(self, raw_bits):
        raw_bits = np.asarray(raw_bits, dtype=_U64)
        q = self.order
        if q & (q - 1) == 0:
            return raw_bits & _U64(q - 1)
        return _mulhi64(raw_bits, q)
