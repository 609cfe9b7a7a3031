"""Exhaustive field-axiom checks over full operation tables."""

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numpy fallback
    numba = None


def tables(field):
    """Addition and multiplication tables computed by the batch arithmetic."""
    q = field.order
    x = np.arange(q, dtype=np.uint64)
    a, b = np.meshgrid(x, x, indexing="ij")
    add = field.add_array(a, b).astype(np.uint16)
    mul = field.mul_array(a, b).astype(np.uint16)
    return add, mul


def _triple_violations_numpy(M, A):
    bad = 0
    for b in range(M.shape[0]):
        bad += np.count_nonzero(M[M[:, b]] != M[:, M[b]])
        bad += np.count_nonzero(A[A[:, b]] != A[:, A[b]])
        rhs = np.take_along_axis(A[M[:, b]], M, axis=1)
        bad += np.count_nonzero(M[:, A[b]] != rhs)
    return bad


if numba is not None:

    @numba.njit(cache=True)
    def _triple_violations(M, A):
        q = M.shape[0]
        bad = 0
        for x in range(q):
            for b in range(q):
                xb = M[x, b]
                xab = A[x, b]
                for c in range(q):
                    bad += M[xb, c] != M[x, M[b, c]]
                    bad += A[xab, c] != A[x, A[b, c]]
                    bad += M[x, A[b, c]] != A[xb, M[x, c]]
        return bad

else:  # pragma: no cover
    _triple_violations = _triple_violations_numpy


def axiom_failures(A, M):
    """Names of the field axioms violated by the tables (empty if none)."""
    q = A.shape[0]
    x = np.arange(q)
    failed = []
    if not (np.array_equal(A, A.T) and np.array_equal(M, M.T)):
        failed.append("commutativity")
    if not (np.array_equal(A[0], x) and np.array_equal(M[1], x) and not M[0].any()):
        failed.append("identities")
    if not (A == 0).sum(axis=1).min() == 1:
        failed.append("additive inverse")
    if not ((M[1:] == 1).sum(axis=1) == 1).all():
        failed.append("multiplicative inverse")
    if _triple_violations(M, A):
        failed.append("associativity/distributivity")
    return failed


def uniformity_failures(A, M):
    """Multiplication by a nonzero element permutes F, and the sum of two
    independent uniforms is uniform (every sum has exactly |F| preimages)."""
    q = A.shape[0]
    failed = []
    rows = np.sort(M[1:], axis=1)
    if not (rows == np.arange(q)).all():
        failed.append("a*x is not a bijection")
    counts = np.bincount(A.ravel().astype(np.int64), minlength=q)
    if not (counts == q).all():
        failed.append("x+y is not uniform")
    return failed
