"""Order-independent summation helpers.

Every moment accumulation in the package goes through :func:`exact_sum`,
which wraps :func:`math.fsum` (Shewchuk's algorithm).  The result is the
correctly rounded sum of the inputs, so it does not depend on the order in
which terms arrive or on how work was split between callers.
"""

import math

import numpy as np


def exact_sum(values):
    """Correctly rounded sum of a 1-D sequence of floats."""
    arr = np.asarray(values, dtype=float).ravel()
    return math.fsum(arr.tolist())


def exact_row_sums(values):
    """Correctly rounded sums along the last axis.

    Parameters
    ----------
    values : array_like
        Array of shape ``(..., n)``.

    Returns
    -------
    ndarray
        Array of shape ``(...)``.
    """
    arr = np.asarray(values, dtype=float)
    lead = arr.shape[:-1]
    rows = arr.reshape(-1, arr.shape[-1]).tolist()
    return np.array([math.fsum(r) for r in rows], dtype=float).reshape(lead)


def exact_expansion(values, max_terms=64):
    """Floats whose exact (unrounded) sum equals that of ``values``.

    The leading term is the correctly rounded sum; each following term is
    the correctly rounded residual.  Concatenating expansions of disjoint
    groups and passing them to :func:`math.fsum` therefore gives the same
    bits as summing all the original terms at once.
    """
    terms = np.asarray(values, dtype=float).ravel().tolist()
    out = []
    for _ in range(max_terms):
        s = math.fsum(terms + [-t for t in out])
        if s == 0.0:
            return tuple(out) if out else (0.0,)
        out.append(s)
    raise ArithmeticError("exact expansion did not terminate")


def sum_expansions(expansions):
    """Correctly rounded total of several :func:`exact_expansion` results."""
    return math.fsum(t for e in expansions for t in e)
