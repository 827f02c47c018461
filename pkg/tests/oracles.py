"""Independent reference implementations used only by the tests."""

import itertools
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


def ordered_pairs(space, radius):
    close = (space.dist <= radius) & ~np.eye(space.n, dtype=bool)
    return [(int(x), int(y)) for x, y in zip(*np.nonzero(close))]


def brute_subset_min(space, radius, support):
    """min |boundary A| / |A| over nonempty A in support, by plain enumeration."""
    pairs = ordered_pairs(space, radius)
    best = None
    for k in range(1, len(support) + 1):
        for A in itertools.combinations(support, k):
            a = set(A)
            b = sum((x in a) != (y in a) for x, y in pairs)
            r = Fraction(b, k)
            if best is None or r < best:
                best = r
    return best


def coarea_lp_min(space, radius, support):
    """min over phi supported in ``support`` of sum_pairs |phi(x)-phi(y)| / sum |phi|.

    One LP per sign pattern (up to global sign): within an orthant ``sum |phi|``
    is linear, so fixing it to 1 leaves a linear program with slack ``t`` per pair.
    """
    support = list(support)
    k = len(support)
    pos = {p: i for i, p in enumerate(support)}
    pairs = ordered_pairs(space, radius)
    relevant = [(x, y) for x, y in pairs if x in pos or y in pos]
    m = len(relevant)
    best = np.inf
    for signs in itertools.product((1.0, -1.0), repeat=k - 1):
        s = np.array((1.0,) + signs)
        # variables: phi (k), t (m)
        c = np.concatenate([np.zeros(k), np.ones(m)])
        A_ub, b_ub = [], []
        for e, (x, y) in enumerate(relevant):
            row = np.zeros(k + m)
            if x in pos:
                row[pos[x]] += 1
            if y in pos:
                row[pos[y]] -= 1
            for sign in (1, -1):
                r = sign * row
                r[k + e] = -1
                A_ub.append(r)
                b_ub.append(0.0)
        A_eq = [np.concatenate([s, np.zeros(m)])]
        bounds = [(0, None) if si > 0 else (None, 0) for si in s] + [(0, None)] * m
        res = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=b_ub or None,
                      A_eq=np.array(A_eq), b_eq=[1.0], bounds=bounds, method="highs")
        if res.status == 0:
            best = min(best, res.fun)
    return best
