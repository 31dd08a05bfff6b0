"""Exact (unregularized) transport for small rational instances.

Used as a reference oracle for the entropic solver. Masses are scaled by a
common denominator to integers, each unit of mass becomes one node of a
square assignment problem, and the assignment is solved exactly. Integer
marginals make the transportation polytope integral, so the optimal
assignment is also an optimal (vertex) transport plan.
"""

from fractions import Fraction
from itertools import permutations
from math import lcm

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..exceptions import CapacityError, ShapeError
from ..validation import as_matrix, check_distribution
from .entropic import TransportPlan, marginal_violation

MAX_SUPPORT = 8
MAX_DENOMINATOR = 64
# n! assignments are enumerated up to this many mass units
ENUMERATION_LIMIT = 8


def integer_masses(p, max_denominator=MAX_DENOMINATOR):
    """Write ``p`` as ``counts / D`` with the smallest common denominator ``D``."""
    fracs = [Fraction(float(x)).limit_denominator(max_denominator) for x in p]
    if any(abs(float(fr) - x) > 1e-9 for fr, x in zip(fracs, p)):
        raise CapacityError(f"masses are not rational with denominator <= {max_denominator}")
    denom = 1
    for fr in fracs:
        denom = lcm(denom, fr.denominator)
    if denom > max_denominator:
        raise CapacityError(f"common denominator {denom} exceeds {max_denominator}")
    counts = [int(fr * denom) for fr in fracs]
    return np.array(counts, dtype=np.int64), denom


def _common_scale(mu, nu):
    cm, dm = integer_masses(mu)
    cn, dn = integer_masses(nu)
    denom = lcm(dm, dn)
    if denom > MAX_DENOMINATOR:
        raise CapacityError(f"common denominator {denom} exceeds {MAX_DENOMINATOR}")
    return cm * (denom // dm), cn * (denom // dn), denom


def expand_units(counts):
    """Support index of every unit of mass, e.g. ``[2, 1] -> [0, 0, 1]``."""
    return np.repeat(np.arange(len(counts)), counts)


def enumerate_assignment(unit_cost):
    """Brute-force minimum-cost perfect matching over all permutations.

    Ties resolve to the lexicographically first permutation.
    """
    n = unit_cost.shape[0]
    perms = np.array(list(permutations(range(n))), dtype=np.intp).reshape(-1, n)
    totals = unit_cost[np.arange(n), perms].sum(axis=1)
    return perms[int(np.argmin(totals))]


def exact_transport(mu, nu, cost):
    """Optimal plan and cost of the unregularized problem ``min <C, P>``.

    Supports up to 8 points per side and masses with a common denominator of
    at most 64. Returns ``(plan, optimal_cost)``.
    """
    mu = check_distribution(mu, "mu")
    nu = check_distribution(nu, "nu")
    cost = as_matrix(cost, "cost")
    if cost.shape != (mu.size, nu.size):
        raise ShapeError(f"cost shape {cost.shape} does not match marginals ({mu.size}, {nu.size})")
    if mu.size > MAX_SUPPORT or nu.size > MAX_SUPPORT:
        raise CapacityError(f"exact oracle supports at most {MAX_SUPPORT} points per side")

    cm, cn, denom = _common_scale(mu, nu)
    src = expand_units(cm)
    dst = expand_units(cn)
    unit_cost = cost[np.ix_(src, dst)]
    if denom <= ENUMERATION_LIMIT:
        cols = enumerate_assignment(unit_cost)
        rows = np.arange(denom)
    else:
        rows, cols = linear_sum_assignment(unit_cost)

    counts = np.zeros(cost.shape, dtype=np.int64)
    np.add.at(counts, (src[rows], dst[cols]), 1)
    plan = counts / denom
    value = float(np.sum(counts * cost) / denom)
    result = TransportPlan(
        matrix=plan,
        violation=marginal_violation(plan, mu, nu),
        epsilon=0.0,
        n_iter=0,
        converged=True,
    )
    return result, value
