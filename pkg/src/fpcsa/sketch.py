"""The F-PCSA sketch: an m x C table of field elements updated linearly."""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .constants import constants_for
from .errors import ConfigurationError, FormatError, MergeError, UsageError
from .field import FieldSpec
from .hashing import DEFAULT_COLUMNS, HashPlan

MAGIC = b"FPCSA\0"
VERSION = 1
_HEADER = struct.Struct("<6sHQHQIIQ")
_CRC = struct.Struct("<I")
HEADER_SIZE = _HEADER.size

MIN_ROWS = 3
MAX_COLUMNS = 64

# Stored level l holds elements with log2(1/U) - theta in [l, l + 1), i.e. a
# per-element hit rate of 2^-(l + 1 + theta) / m: the estimator's column l + 1.
LEVEL_SHIFT = 1

_U64 = np.uint64


@dataclass(frozen=True)
class HighestPositions:
    """Per-row highest nonzero level ``levels`` (-1 if empty) and ``w = levels + offset``."""

    levels: np.ndarray
    w: np.ndarray
    empty_rows: int


class Estimate(NamedTuple):
    value: float
    empty_rows: int

    @property
    def calibrated(self):
        """False when some row is empty, i.e. below the middle cardinality range."""
        return self.empty_rows == 0

    def __float__(self):
        return float(self.value)


class Sketch:
    """Mergeable distinct-count sketch over a finite field.

    Each update ``(v, k)`` adds ``k * g(v)`` to the single cell ``h(v)``, so
    the table is a linear function of the stream state and any two sketches
    built with the same field, shape and seed can be merged by cellwise
    addition.
    """

    def __init__(self, field, rows, columns=DEFAULT_COLUMNS, seed=0):
        if isinstance(field, str):
            field = FieldSpec.parse(field)
        if rows < MIN_ROWS:
            raise ConfigurationError(f"F-PCSA needs at least {MIN_ROWS} rows, got {rows}")
        if not 1 <= columns <= MAX_COLUMNS:
            raise ConfigurationError(f"columns must be in [1, {MAX_COLUMNS}], got {columns}")
        self.field = field
        self.plan = HashPlan(seed, rows, columns)
        self.table = np.zeros((rows, columns), dtype=_U64)

    @property
    def rows(self):
        return self.plan.rows

    @property
    def columns(self):
        return self.plan.columns

    @property
    def seed(self):
        return self.plan.seed

    def __repr__(self):
        return f"Sketch({self.field}, rows={self.rows}, columns={self.columns}, seed={self.seed:#x})"

    def __eq__(self, other):
        if not isinstance(other, Sketch):
            return NotImplemented
        return (
            self.field == other.field
            and self.plan == other.plan
            and np.array_equal(self.table, other.table)
        )

    def copy(self):
        out = object.__new__(Sketch)
        out.field, out.plan, out.table = self.field, self.plan, self.table.copy()
        return out

    # -- updates ----------------------------------------------------------------

    def update(self, element, k=1):
        """Apply the turnstile update ``x[element] += k`` (k a field element)."""
        self.field.check(k)
        self.update_many(np.array([element], dtype=_U64), np.array([k], dtype=_U64))

    def update_many(self, elements, values=None):
        """Apply a batch of updates; ``values=None`` means every k is one."""
        elements = np.asarray(elements, dtype=_U64).ravel()
        if elements.size == 0:
            return
        rows, levels, g = self.plan.assign_many(self.field, elements)
        if values is None:
            contrib = g
        else:
            values = np.asarray(values, dtype=_U64).ravel()
            if values.shape != elements.shape:
                raise UsageError("elements and values must have the same length")
            if values.size and int(values.max()) >= self.field.order:
                raise UsageError(f"update value {int(values.max())} is not an element of {self.field}")
            contrib = self.field.mul_array(values, g)
        _scatter_add(self.field, self.table.reshape(-1), rows * self.columns + levels, contrib)

    # -- merge --------------------------------------------------------------------

    def _check_compatible(self, other):
        for name, a, b in (
            ("field", self.field, other.field),
            ("rows", self.rows, other.rows),
            ("columns", self.columns, other.columns),
            ("seed", self.seed, other.seed),
        ):
            if a != b:
                raise MergeError(name, a, b)

    def merge(self, other):
        """Sketch of the concatenation of both streams."""
        self._check_compatible(other)
        out = self.copy()
        out.table = self.field.add_array(self.table, other.table)
        return out

    # -- estimation -----------------------------------------------------------------

    def highest_positions(self):
        nonzero = self.table != 0
        any_nz = nonzero.any(axis=1)
        top = self.columns - 1 - np.argmax(nonzero[:, ::-1], axis=1)
        levels = np.where(any_nz, top, -1).astype(np.int64)
        w = levels + self.plan.offsets
        return HighestPositions(levels, w, int(np.count_nonzero(~any_nz)))

    def estimate(self, constants=None):
        """Distinct-count estimate of the number of nonzero coordinates.

        Returns 0 for an all-empty sketch.  ``Estimate.calibrated`` is False
        when any row is empty; the value is then outside the range the
        normalization constants were derived for.
        """
        if constants is None:
            constants = constants_for(self.rows, self.field.order)
        elif (constants.m, constants.field_order) != (self.rows, self.field.order):
            raise UsageError(
                f"constants are for m={constants.m}, |F|={constants.field_order}; "
                f"sketch has m={self.rows}, |F|={self.field.order}"
            )
        hp = self.highest_positions()
        if hp.empty_rows == self.rows:
            return Estimate(0.0, hp.empty_rows)
        value = constants.norm_factor * 2.0 ** (float(np.mean(hp.w)) + LEVEL_SHIFT)
        return Estimate(value, hp.empty_rows)

    # -- binary format ------------------------------------------------------------------

    def to_bytes(self):
        f = self.field
        header = _HEADER.pack(
            MAGIC, VERSION, f.characteristic, f.degree, f.reduction_poly or 0,
            self.rows, self.columns, self.seed,
        )
        body = header + pack_cells(self.table.reshape(-1), f.bits)
        return body + _CRC.pack(zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < HEADER_SIZE:
            raise FormatError(f"truncated header: {len(data)} of {HEADER_SIZE} bytes", offset=len(data))
        magic, version, char, degree, poly, rows, columns, seed = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}", offset=0)
        if version != VERSION:
            raise FormatError(f"unsupported version {version}", offset=6)
        try:
            field = FieldSpec(char, degree, poly or None)
        except UsageError as exc:
            raise FormatError(f"invalid field: {exc}", offset=8) from None
        if rows < MIN_ROWS:
            raise FormatError(f"rows {rows} < {MIN_ROWS}", offset=26)
        if not 1 <= columns <= MAX_COLUMNS:
            raise FormatError(f"columns {columns} out of range", offset=30)
        n_cells = rows * columns
        table_bytes = -(-n_cells * field.bits // 8)
        expected = HEADER_SIZE + table_bytes + _CRC.size
        if len(data) < expected:
            raise FormatError(f"truncated: {len(data)} of {expected} bytes", offset=len(data))
        if len(data) > expected:
            raise FormatError(f"{len(data) - expected} trailing bytes", offset=expected)
        crc_at = expected - _CRC.size
        (crc,) = _CRC.unpack_from(data, crc_at)
        if crc != zlib.crc32(data[:crc_at]):
            raise FormatError("CRC32 mismatch", offset=crc_at)
        cells, bad = unpack_cells(data[HEADER_SIZE:crc_at], n_cells, field.bits, field.order)
        if bad is not None:
            raise FormatError("cell value outside the field", offset=HEADER_SIZE + bad)
        out = object.__new__(cls)
        out.field = field
        out.plan = HashPlan(seed, rows, columns)
        out.table = cells.reshape(rows, columns)
        return out


def _scatter_add(field, flat, index, contrib):
    """``flat[index] += contrib`` in the field, with repeated indices accumulated."""
    if field.is_binary:
        np.bitwise_xor.at(flat, index, contrib)
        return
    p = field.characteristic
    # chunk so that no uint64 cell can overflow before reduction
    step = max(1, (1 << 64) // p - 2)
    for lo in range(0, index.size, step):
        np.add.at(flat, index[lo : lo + step], contrib[lo : lo + step])
        flat %= _U64(p)


def pack_cells(values, bits):
    """Pack uint64 cells LSB-first at ``bits`` bits each into bytes."""
    shifts = np.arange(bits, dtype=_U64)
    bitmat = ((values[:, None] >> shifts) & _U64(1)).astype(np.uint8)
    return np.packbits(bitmat.reshape(-1), bitorder="little").tobytes()


def unpack_cells(payload, n_cells, bits, order):
    """Inverse of :func:`pack_cells`; also returns the byte offset of the
    first invalid cell or nonzero padding bit (``None`` if all valid)."""
    raw = np.frombuffer(payload, dtype=np.uint8)
    allbits = np.unpackbits(raw, bitorder="little")
    used = n_cells * bits
    if allbits[used:].any():
        return None, (used + int(np.argmax(allbits[used:]))) // 8
    bitmat = allbits[:used].reshape(n_cells, bits).astype(_U64)
    cells = (bitmat << np.arange(bits, dtype=_U64)).sum(axis=1, dtype=_U64)
    over = np.flatnonzero(cells >= _U64(order))
    if over.size:
        return None, int(over[0]) * bits // 8
    return cells, None
