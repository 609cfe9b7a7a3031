"""Keyed hashing of element ids to sketch cells.

Every derived quantity comes from the 64-bit murmur3 finalizer applied twice
under a seed-derived key ("lane").  Three independent lanes are used per
element: one for the row, one for the geometric level and one for the
uniform field multiplier g(v), so h and g share no key material.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK = (1 << 64) - 1
_U64 = np.uint64
_C1 = 0xFF51AFD7ED558CCD
_C2 = 0xC4CEB9FE1A85EC53

_SALT_ROW = 0x726F772D6C616E65
_SALT_LEVEL = 0x6C6576656C2D6C6E
_SALT_VALUE = 0x672D76616C75652D
_SALT_OFFSET = 0x7468657461732D2D
_SALT_TRIAL = 0x747269616C2D2D2D

_TOKEN_KEY = b"fpcsa-stream-token-v1"
_INV_2_53 = 2.0 ** -53

DEFAULT_COLUMNS = 64


def mix64(x):
    """murmur3 fmix64: a bijective avalanche mixer on 64-bit ints."""
    x &= _MASK
    x ^= x >> 33
    x = (x * _C1) & _MASK
    x ^= x >> 33
    x = (x * _C2) & _MASK
    x ^= x >> 33
    return x


def _mix_array(x):
    s = _U64(33)
    x = x ^ (x >> s)
    x = x * _U64(_C1)
    x = x ^ (x >> s)
    x = x * _U64(_C2)
    return x ^ (x >> s)


def lane(x, key):
    """Keyed PRF on uint64 arrays: mix(mix(x ^ key) + key)."""
    k = _U64(key)
    with np.errstate(over="ignore"):
        return _mix_array(_mix_array(np.asarray(x, dtype=_U64) ^ k) + k)


def derive_key(seed, salt):
    return mix64(mix64(seed ^ salt) + salt)


def derive_seed(base_seed, index):
    """Seed for the ``index``-th independent run under ``base_seed``."""
    return mix64(mix64(base_seed ^ _SALT_TRIAL) + mix64(index + _SALT_TRIAL))


def token_id(token):
    """64-bit id for a textual element token."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=_TOKEN_KEY).digest()
    return int.from_bytes(digest, "little")


def _check_seed(seed):
    if not (isinstance(seed, (int, np.integer)) and 0 <= seed <= _MASK):
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return int(seed)


def derive_offsets(seed, m):
    """Per-row offsets in [0, 1), 53-bit uniform deviates keyed by ``seed``."""
    if m < 1:
        raise ValueError(f"need at least one row, got {m}")
    key = derive_key(_check_seed(seed), _SALT_OFFSET)
    bits = lane(np.arange(m, dtype=_U64), key)
    return (bits >> _U64(11)).astype(np.float64) * _INV_2_53


def geometric_level(level_bits, offsets, columns):
    """Level of each element from 64 uniform bits and its row offset.

    With U in (0, 1] built from the top 53 bits, the level is
    ``floor(log2(1/U) - offset)`` clamped to ``[0, columns - 1]``, so that
    ``P(level >= j) = 2**-(j + offset)`` for ``1 <= j <= columns - 1``.
    """
    u = ((np.asarray(level_bits, dtype=_U64) >> _U64(11)) + _U64(1)).astype(np.float64)
    u *= _INV_2_53
    lv = np.floor(-np.log2(u) - offsets)
    np.clip(lv, 0, columns - 1, out=lv)
    return lv.astype(np.int64)


class HashPlan:
    """Immutable hashing parameters of a sketch: seed, rows, columns, offsets."""

    __slots__ = ("seed", "rows", "columns", "offsets", "_keys")

    def __init__(self, seed, rows, columns=DEFAULT_COLUMNS):
        seed = _check_seed(seed)
        if rows < 1 or rows >= 1 << 32:
            raise ValueError(f"rows must be in [1, 2^32), got {rows}")
        if columns < 1:
            raise ValueError(f"columns must be >= 1, got {columns}")
        offsets = derive_offsets(seed, rows)
        offsets.setflags(write=False)
        keys = tuple(derive_key(seed, s) for s in (_SALT_ROW, _SALT_LEVEL, _SALT_VALUE))
        for name, value in zip(self.__slots__, (seed, int(rows), int(columns), offsets, keys)):
            object.__setattr__(self, name, value)

    def __setattr__(self, name, value):
        raise AttributeError("HashPlan is immutable")

    def __eq__(self, other):
        if not isinstance(other, HashPlan):
            return NotImplemented
        return (self.seed, self.rows, self.columns) == (other.seed, other.rows, other.columns)

    def __hash__(self):
        return hash((self.seed, self.rows, self.columns))

    def __repr__(self):
        return f"HashPlan(seed={self.seed:#x}, rows={self.rows}, columns={self.columns})"

    def assign_many(self, field, ids):
        """Rows, levels and g-values (all numpy arrays) for an array of ids."""
        ids = np.asarray(ids, dtype=_U64)
        key_row, key_level, key_value = self._keys
        a = lane(ids, key_row)
        rows = (((a >> _U64(32)) * _U64(self.rows)) >> _U64(32)).astype(np.int64)
        levels = geometric_level(lane(ids, key_level), self.offsets[rows], self.columns)
        g = field.sample_uniform_array(lane(ids, key_value))
        return rows, levels, g


@dataclass(frozen=True)
class CellAssignment:
    row: int
    level: int
    g_value: int


def assign(plan, field, element):
    """Cell and multiplier for a single element id."""
    rows, levels, g = plan.assign_many(field, np.array([element], dtype=_U64))
    return CellAssignment(int(rows[0]), int(levels[0]), int(g[0]))
