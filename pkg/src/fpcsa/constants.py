"""Estimator constants by numerical quadrature.

``nu(z, r)`` is the density of the centred highest position of one row when
each nonzero cell value is nonzero with probability ``r = 1 - 1/|F|``.
``phi(t, r)`` is its base-2 moment generating function and
``psi_moments(r)`` its mean and variance.  Everything else is derived from
these integrals.

Large-``m`` constants involve ``phi(1/m) ** -m`` and
``phi(2/m) ** m / phi(1/m) ** (2m)``; both are evaluated from integrals of
``expm1`` and of centred squares so that no digits are lost to cancellation
when ``m`` is in the millions.
"""

from __future__ import annotations

import functools
import math
import threading
from dataclasses import dataclass

from scipy import integrate

from .errors import ConfigurationError, DomainError

LN2 = math.log(2.0)
LOGLOG_LIMIT = math.sqrt(LN2 ** 2 / 12 + math.pi ** 2 / 6)

# Product factors with 2^(-z-j) below this differ from 1 by less than it.
PRODUCT_CUTOFF = 1e-18
Z_LOW, Z_HIGH = -200.0, 200.0
ABS_TOL = 1e-12
# Interior breakpoints: the density is concentrated on a few units around 0.
_BREAKS = (-40.0, -15.0, -5.0, 0.0, 5.0, 15.0, 40.0)

# Field orders tabulated by the reproduction table.
TABLE_ORDERS = (2, 3, 4, 5, 7, 8, 9, 2 ** 8, 2 ** 32)
TABLE_M = 10 ** 6


def _check_r(r, low=0.0):
    if not low <= r <= 1.0:
        raise DomainError(f"r must lie in [{low:g}, 1], got {r}")


def log_nu(z, r):
    """Natural log of :func:`nu`; ``-inf`` where the density underflows."""
    _check_r(r)
    if r == 0.0:
        return -math.inf
    s = 1.0 - r  # exact for r >= 1/2
    lead = -math.expm1(-(2.0 ** -z)) if z > -1000 else 1.0
    if lead == 0.0:
        return -math.inf
    acc = math.log(lead) + math.log(r)
    j = 1
    while True:
        e = -z - j
        if e > 1000:
            f = s
        else:
            x = 2.0 ** e
            if x < PRODUCT_CUTOFF:
                break
            f = s + r * math.exp(-x) if x > 1.0 else 1.0 + r * math.expm1(-x)
        if f <= 0.0:
            return -math.inf
        acc += math.log(f)
        if acc < -745.0:
            return -math.inf
        j += 1
    return acc


def nu(z, r):
    """Density of the centred highest position, ``z`` real, ``r`` in [0, 1]."""
    return math.exp(log_nu(z, r))


def _integrate(g, r, upper=Z_HIGH, scale=1.0):
    """Integral of ``g(z) * nu(z, r)`` over ``[Z_LOW, upper]``, piecewise adaptive GK21."""
    edges = (Z_LOW,) + tuple(b for b in _BREAKS if b < upper) + (upper,)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(
            lambda z: g(z) * nu(z, r), a, b,
            epsabs=ABS_TOL * scale * 1e-3, epsrel=1e-11, limit=200,
        )
        total += val
    return total


def density_mass(r, low=Z_LOW, high=Z_HIGH):
    """``integral nu(z, r) dz`` over ``[low, high]``; 1 up to quadrature error."""
    _check_r(r)
    total = 0.0
    edges = (low,) + tuple(b for b in _BREAKS if low < b < high) + (high,)
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(lambda z: nu(z, r), a, b, epsabs=ABS_TOL * 1e-3, epsrel=1e-11, limit=200)[0]
    return total


def _upper(t):
    # right tail of 2^(tz) nu(z) decays like 2^-(1-t)z
    return max(Z_HIGH, 80.0 / (1.0 - t))


def _check_t(t):
    if not 0.0 < t < 1.0:
        raise DomainError(f"t must lie strictly inside (0, 1), got {t}")


def phi_minus_one(t, r):
    """``phi(t, r) - 1`` computed without cancellation."""
    _check_t(t)
    _check_r(r, 0.5)
    c = t * LN2
    return _integrate(lambda z: math.expm1(c * z), r, _upper(t), scale=t)


def phi(t, r):
    """Base-2 moment generating function ``integral 2^(tz) nu(z, r) dz``."""
    return 1.0 + phi_minus_one(t, r)


def mgf_spread(t, r, phi_m1=None):
    """``phi(2t, r) - phi(t, r)^2``, the variance of ``2^(t X_r)``."""
    if phi_m1 is None:
        phi_m1 = phi_minus_one(t, r)
    c = t * LN2
    return _integrate(lambda z: (math.expm1(c * z) - phi_m1) ** 2, r, _upper(2 * t), scale=t * t)


@functools.lru_cache(maxsize=64)
def psi_moments(r):
    """Mean and variance of the centred highest position ``X_r``."""
    _check_r(r, 0.5)
    mean = _integrate(lambda z: z, r)
    var = _integrate(lambda z: (z - mean) ** 2, r)
    assert LN2 ** 2 * var < 79, "variance bound violated"
    return mean, var


def r_of(field_order):
    if field_order < 2:
        raise ConfigurationError(f"field order must be >= 2, got {field_order}")
    return 1.0 - 1.0 / field_order


@dataclass(frozen=True)
class EstimatorConstants:
    m: int
    field_order: int
    r: float
    phi_1m: float
    phi_2m: float
    norm_factor: float
    rel_error_exact: float
    psi_e: float
    psi_v: float
    rel_error_asymptotic: float


def compute_constants(m, field_order):
    """Uncached construction of :class:`EstimatorConstants`."""
    if m < 3:
        raise ConfigurationError(f"m must be >= 3, got {m}")
    r = r_of(field_order)
    t = 1.0 / m
    p1 = phi_minus_one(t, r)
    p2 = phi_minus_one(2 * t, r)
    spread = mgf_spread(t, r, p1)
    log_phi1 = math.log1p(p1)
    norm_factor = math.exp(-m * log_phi1) * m
    # phi(2/m)^m / phi(1/m)^(2m) - 1 = (1 + spread/phi^2)^m - 1
    rel_sq = math.expm1(m * math.log1p(spread / (1.0 + p1) ** 2))
    psi_e, psi_v = psi_moments(r)
    return EstimatorConstants(
        m=m,
        field_order=field_order,
        r=r,
        phi_1m=1.0 + p1,
        phi_2m=1.0 + p2,
        norm_factor=norm_factor,
        rel_error_exact=math.sqrt(rel_sq),
        psi_e=psi_e,
        psi_v=psi_v,
        rel_error_asymptotic=math.sqrt(LN2 ** 2 * psi_v / m),
    )


_cache = {}
_lock = threading.Lock()


def constants_for(m, field_order):
    """Cached :class:`EstimatorConstants` for an ``m``-row sketch over a field of this order."""
    key = (int(m), int(field_order))
    with _lock:
        c = _cache.get(key)
        if c is None:
            c = _cache[key] = compute_constants(*key)
    return c


@dataclass(frozen=True)
class TableRow:
    field_order: int
    psi_e: float
    psi_v: float
    norm_factor_per_m: float
    rel_error_sqrt_m: float


def reproduction_table(orders=TABLE_ORDERS, m=TABLE_M):
    """One row of asymptotic constants per field order, using ``m`` as the large-m proxy."""
    rows = []
    for q in orders:
        c = constants_for(m, q)
        rows.append(TableRow(q, c.psi_e, c.psi_v, c.norm_factor / m, c.rel_error_exact * math.sqrt(m)))
    return rows


def format_order(q):
    if q >= 256 and q & (q - 1) == 0:
        return f"2^{q.bit_length() - 1}"
    return str(q)
