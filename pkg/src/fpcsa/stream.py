"""Text stream files: one ``<element> <value>`` update per line.

The first line is a header ``#fpcsa-stream v1 field=<gf(..)|z>``.  Elements
are unsigned decimal ids or (possibly double-quoted) tokens, which are mapped
to 64-bit ids with :func:`token_id`.  Values are field-element integers, or
signed integers when ``field=z``.  Blank lines and lines starting with ``#``
are ignored.
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass
from typing import Optional

from .errors import FormatError
from .field import FieldSpec
from .hashing import token_id

HEADER_RE = re.compile(r"^#fpcsa-stream\s+v1\s+field=(\S+)\s*$")
_DECIMAL = re.compile(r"^[0-9]+$")
_MAX_ID = (1 << 64) - 1


@dataclass(frozen=True)
class StreamHeader:
    field: Optional[FieldSpec]  # None means integer (z) mode

    @property
    def integer_mode(self):
        return self.field is None


def parse_header(line, lineno=1):
    m = HEADER_RE.match(line.rstrip("\r\n"))
    if not m:
        raise FormatError(f"expected '#fpcsa-stream v1 field=<spec>' header, got {line.strip()[:60]!r}", line=lineno)
    text = m.group(1)
    if text == "z":
        return StreamHeader(None)
    try:
        return StreamHeader(FieldSpec.parse(text))
    except ValueError as exc:
        raise FormatError(f"bad field in header: {exc}", line=lineno) from None


def element_id(token, quoted=False):
    if not quoted and _DECIMAL.match(token):
        v = int(token)
        if v > _MAX_ID:
            raise ValueError(f"element id {token} does not fit in 64 bits")
        return v
    return token_id(token)


def parse_line(line, lineno, header):
    """``(element_id, value)`` for a body line, or ``None`` for blanks/comments."""
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    try:
        parts = shlex.split(text) if '"' in text else text.split()
    except ValueError as exc:
        raise FormatError(f"unbalanced quotes ({exc})", line=lineno) from None
    if len(parts) != 2:
        raise FormatError(f"expected '<element> <value>', got {len(parts)} fields", line=lineno)
    try:
        elem = element_id(parts[0], quoted=text.startswith('"'))
        value = int(parts[1])
    except ValueError as exc:
        raise FormatError(str(exc), line=lineno) from None
    if header.field is not None and not 0 <= value < header.field.order:
        raise FormatError(f"value {value} is not an element of {header.field}", line=lineno)
    return elem, value


def read_stream(path):
    """Header and an iterator of ``(element_id, value)`` updates, in file order."""
    fh = open(path, encoding="utf-8")
    first = fh.readline()
    if not first:
        fh.close()
        raise FormatError("empty stream file: missing header", line=1)
    try:
        header = parse_header(first)
    except FormatError:
        fh.close()
        raise

    def updates():
        with fh:
            for lineno, line in enumerate(fh, start=2):
                item = parse_line(line, lineno, header)
                if item is not None:
                    yield item

    return header, updates()
