"""Independent reference implementations used by the tests."""
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy.optimize import linprog


def lp_oracle(uops):
    """Min-max port load by direct LP over per-(µ-op, port) shares."""
    uops = [(sorted(p), float(o)) for p, o in uops]
    ports = sorted({p for ps, _ in uops for p in ps})
    if not uops:
        return 0.0
    var = [(k, p) for k, (ps, _) in enumerate(uops) for p in ps]
    n = len(var) + 1  # last variable is T
    c = np.zeros(n)
    c[-1] = 1.0
    a_eq = np.zeros((len(uops), n))
    for j, (k, _) in enumerate(var):
        a_eq[k, j] = 1.0
    b_eq = np.array([o for _, o in uops])
    a_ub = np.zeros((len(ports), n))
    for j, (_, p) in enumerate(var):
        a_ub[ports.index(p), j] = 1.0
    a_ub[:, -1] = -1.0
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(len(ports)), A_eq=a_eq, b_eq=b_eq,
                  bounds=[(0, None)] * n, method="highs")
    assert res.success, res.message
    return res.fun


def density_oracle(uops):
    """Max over port subsets S of (occupancy confined to S) / |S|, exactly."""
    ports = sorted({p for ps, _ in uops for p in ps})
    best = Fraction(0)
    for r in range(1, len(ports) + 1):
        for s in combinations(ports, r):
            s = set(s)
            occ = sum((Fraction(o) for ps, o in uops if set(ps) <= s), Fraction(0))
            best = max(best, occ / r)
    return best
