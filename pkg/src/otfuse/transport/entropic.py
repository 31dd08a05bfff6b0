"""Entropy-regularized optimal transport between discrete distributions.

The solver works on dual potentials ``f`` and ``g`` in the log domain, so a
plan entry is ``exp((f_i + g_j - C_ij) / epsilon)`` and nothing is ever
stored as a Gibbs kernel. This keeps small regularization values usable.
"""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import CapacityError, DomainError, NumericError, ParameterError, ShapeError
from ..tensor_core import logsumexp
from ..validation import as_matrix, check_distribution

COST_MIN = 0.0
COST_MAX = 2.0
# largest dual move per Newton step, in units of epsilon
MAX_NEWTON_STEP = 4.0


@dataclass(frozen=True)
class SinkhornConfig:
    """Solver settings.

    ``tolerance`` bounds the max-norm violation of both marginals. With
    ``newton_polish`` set, a solve that has not converged after
    ``newton_after`` scaling sweeps finishes with damped Newton steps on the
    dual, which reach the same fixed point far faster once scaling stalls
    (small epsilon, degenerate marginals). Each Newton step counts as one
    iteration against ``max_iters``.
    """

    epsilon: float = 0.05
    tolerance: float = 1e-6
    max_iters: int = 1000
    newton_polish: bool = True
    newton_after: int = 200

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon!r}")
        if not self.tolerance > 0:
            raise ParameterError(f"tolerance must be positive, got {self.tolerance!r}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ParameterError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        if self.newton_after < 1:
            raise ParameterError(f"newton_after must be at least 1, got {self.newton_after!r}")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TransportPlan:
    """A coupling matrix plus the diagnostics of the solve that produced it."""

    matrix: np.ndarray
    violation: float
    epsilon: float = float("nan")
    n_iter: int = 0
    converged: bool = True
    f: np.ndarray = field(default=None, repr=False)
    g: np.ndarray = field(default=None, repr=False)

    @property
    def shape(self):
        return self.matrix.shape

    def transport_cost(self, cost):
        return float(np.sum(np.asarray(cost) * self.matrix))


def marginal_violation(matrix, mu, nu):
    """Max-norm deviation of the row and column sums from ``mu`` and ``nu``."""
    rows = np.abs(matrix.sum(axis=1) - mu).max()
    cols = np.abs(matrix.sum(axis=0) - nu).max()
    return float(max(rows, cols))


def check_cost_matrix(cost):
    """Validate the cosine-cost contract: finite entries in ``[0, 2]``."""
    cost = as_matrix(cost, "cost")
    lo, hi = cost.min(), cost.max()
    if lo < COST_MIN or hi > COST_MAX:
        raise DomainError(f"cost entries must lie in [0, 2], found range [{lo:.6g}, {hi:.6g}]")
    return cost


def build_cost_matrix(features, anchors):
    """Pairwise cosine distances between feature rows and anchor rows.

    Any pairing that involves a zero-norm vector gets the maximal cost 2.
    """
    features = as_matrix(features, "features")
    anchors = as_matrix(anchors, "anchors")
    if features.shape[1] != anchors.shape[1]:
        raise ShapeError(
            f"embedding dimension mismatch: features {features.shape[1]}, anchors {anchors.shape[1]}"
        )
    fn = np.linalg.norm(features, axis=1)
    an = np.linalg.norm(anchors, axis=1)
    f_ok = fn > 0
    a_ok = an > 0
    fu = np.divide(features, fn[:, None], out=np.zeros_like(features), where=f_ok[:, None])
    au = np.divide(anchors, an[:, None], out=np.zeros_like(anchors), where=a_ok[:, None])
    cost = 1.0 - fu @ au.T
    cost[~f_ok, :] = COST_MAX
    cost[:, ~a_ok] = COST_MAX
    return np.clip(cost, COST_MIN, COST_MAX)


def _check_problem(mu, nu, cost):
    mu = check_distribution(mu, "mu")
    nu = check_distribution(nu, "nu")
    cost = as_matrix(cost, "cost")
    if cost.shape != (mu.size, nu.size):
        raise ShapeError(f"cost shape {cost.shape} does not match marginals ({mu.size}, {nu.size})")
    return mu, nu, cost


def sinkhorn(mu, nu, cost, config=None):
    """Solve ``min <C, P> - eps * H(P)`` over couplings of ``mu`` and ``nu``.

    Parameters
    ----------
    mu : array-like (n,)
        Source masses.
    nu : array-like (m,)
        Target masses.
    cost : array-like (n, m)
        Ground cost.
    config : SinkhornConfig, optional
        Regularization, stopping tolerance and iteration cap.

    Returns
    -------
    TransportPlan
        The coupling ``P_ij = exp((f_i + g_j - C_ij) / eps)``. When the
        iteration cap is hit first the plan is still returned, with
        ``converged=False`` and its achieved violation recorded.

    Raises
    ------
    NumericError
        If the potentials stop being finite, which happens when epsilon is
        too small for float64 to represent ``C / eps``.
    """
    config = config or SinkhornConfig()
    mu, nu, cost = _check_problem(mu, nu, cost)
    eps = float(config.epsilon)

    with np.errstate(divide="ignore", over="ignore"):
        log_mu = np.log(mu)
        log_nu = np.log(nu)
        scaled = cost / eps
    if not np.all(np.isfinite(scaled)):
        raise NumericError(f"cost / epsilon overflows float64 at epsilon={eps!r}")

    # potentials are kept divided by eps: a = f/eps, b = g/eps
    a = np.zeros(mu.size)
    b = np.zeros(nu.size)
    max_iters = int(config.max_iters)
    scaling_iters = max_iters
    if config.newton_polish:
        scaling_iters = min(max_iters, int(config.newton_after))
    n_iter = 0
    converged = False
    with np.errstate(invalid="ignore", over="ignore"):
        while n_iter < scaling_iters and not converged:
            n_iter += 1
            a = log_mu - logsumexp(b[None, :] - scaled, axis=1)
            b = log_nu - logsumexp(a[:, None] - scaled, axis=0)
            row_err = _row_error(a, b, scaled, mu)
            if not np.isfinite(row_err):
                break
            converged = row_err <= config.tolerance
        if not converged and n_iter < max_iters and np.isfinite(row_err):
            a, b, n_iter = _newton(
                a, b, scaled, mu, nu, log_mu, log_nu, config.tolerance, n_iter, max_iters
            )

    if not (np.all(np.isfinite(a[mu > 0])) and np.all(np.isfinite(b[nu > 0]))):
        raise NumericError(
            f"log-domain potentials became non-finite after {n_iter} iterations "
            f"(epsilon={eps!r}, max cost/eps={scaled.max():.3g})"
        )
    with np.errstate(invalid="ignore"):
        log_plan = a[:, None] + b[None, :] - scaled
    log_plan = np.where(np.isnan(log_plan), -np.inf, log_plan)
    plan = np.exp(log_plan)
    violation = marginal_violation(plan, mu, nu)
    converged = violation <= config.tolerance
    return TransportPlan(
        matrix=plan,
        violation=violation,
        epsilon=eps,
        n_iter=n_iter,
        converged=converged,
        f=eps * a,
        g=eps * b,
    )


def _row_error(a, b, scaled, mu):
    row_lse = logsumexp(b[None, :] - scaled, axis=1)
    return np.abs(np.exp(a + row_lse) - mu).max()


def _schur_step(plan, r, c, ga, gb):
    """Newton direction for the column potentials after eliminating rows.

    The row block of the dual Hessian is diagonal, so the system reduces to
    an ``m x m`` Schur complement. Its null direction (constant shift) is
    removed by pinning the last column potential; a pseudo-inverse guards
    against blocks that are numerically decoupled.
    """
    weighted = plan / r[:, None]
    # the complement is a graph Laplacian; building it from the off-diagonal
    # couplings avoids cancellation on the diagonal
    coupling = plan.T @ weighted
    np.fill_diagonal(coupling, 0.0)
    schur = np.diag(coupling.sum(axis=1)) - coupling
    rhs = gb - weighted.T @ ga
    reduced = schur[:-1, :-1]
    w, vecs = np.linalg.eigh(reduced)
    step = np.zeros(c.size)
    if w.size:
        keep = w > w.max() * 1e-13
        step[:-1] = vecs[:, keep] @ ((vecs[:, keep].T @ rhs[:-1]) / w[keep])
    return step


def _newton(a, b, scaled, mu, nu, log_mu, log_nu, tol, n_iter, max_iters):
    """Damped Newton ascent on the dual, restricted to positive-mass points.

    Falls back to plain scaling sweeps if a step cannot be taken.
    """
    rows = np.flatnonzero(mu > 0)
    cols = np.flatnonzero(nu > 0)
    n, m = rows.size, cols.size
    s_act = scaled[np.ix_(rows, cols)]
    mu_act, nu_act = mu[rows], nu[cols]

    def dual(aa, bb):
        return mu_act @ aa + nu_act @ bb - np.exp(aa[:, None] + bb[None, :] - s_act).sum()

    use_newton = n > 1 and m > 1
    while n_iter < max_iters:
        n_iter += 1
        if use_newton:
            aa, bb = a[rows], b[cols]
            plan = np.exp(aa[:, None] + bb[None, :] - s_act)
            r = np.maximum(plan.sum(axis=1), np.finfo(np.float64).tiny)
            c = plan.sum(axis=0)
            ga, gb = mu_act - r, nu_act - c
            step_b = _schur_step(plan, r, c, ga, gb)
            step = np.concatenate([(ga - plan @ step_b) / r, step_b])
            grad = np.concatenate([ga, gb])
            # trust region: nearly decoupled blocks give huge, badly modelled steps
            longest = np.abs(step).max()
            if longest > MAX_NEWTON_STEP:
                step *= MAX_NEWTON_STEP / longest
            slope = grad @ step
            if not slope > 0:
                use_newton = False
            base = dual(aa, bb)
            t = 1.0 if use_newton else 0.0
            while t > 1e-8:
                na, nb = aa + t * step[:n], bb + t * step[n:]
                if dual(na, nb) >= base + 1e-4 * t * slope:
                    break
                t *= 0.5
            if t > 1e-8 and np.all(np.isfinite(na)) and np.all(np.isfinite(nb)):
                a = a.copy()
                a[rows] = na
            else:
                use_newton = False
                a = log_mu - logsumexp(b[None, :] - scaled, axis=1)
        else:
            a = log_mu - logsumexp(b[None, :] - scaled, axis=1)
        b = log_nu - logsumexp(a[:, None] - scaled, axis=0)
        if _row_error(a, b, scaled, mu) <= tol:
            break
    return a, b, n_iter


def entropy(plan):
    """Shannon entropy ``-sum P log P`` with ``0 log 0 = 0``."""
    p = np.asarray(plan, dtype=np.float64)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def entropic_objective(plan, cost, epsilon):
    return float(np.sum(cost * plan)) - epsilon * entropy(plan)


def ot_objective_gradient_check(mu, nu, cost, config=None, step=1e-5):
    """Largest gap between the finite-difference gradient of the optimal
    entropic value with respect to each cost entry and the plan itself.

    The optimal value is differentiable in ``C`` with gradient equal to the
    optimal plan, so a correct solver returns a value near zero.
    """
    config = config or SinkhornConfig()
    mu, nu, cost = _check_problem(mu, nu, cost)
    if cost.shape[0] > 6 or cost.shape[1] > 6:
        raise CapacityError("gradient check is limited to instances up to 6x6")
    tight = config.replace(
        tolerance=min(config.tolerance, 1e-12), max_iters=max(config.max_iters, 100_000)
    )
    eps = tight.epsilon

    def value(c):
        plan = sinkhorn(mu, nu, c, tight).matrix
        return entropic_objective(plan, c, eps)

    base = sinkhorn(mu, nu, cost, tight).matrix
    worst = 0.0
    for i in range(cost.shape[0]):
        for j in range(cost.shape[1]):
            up = cost.copy()
            up[i, j] += step
            down = cost.copy()
            down[i, j] -= step
            fd = (value(up) - value(down)) / (2 * step)
            worst = max(worst, abs(fd - base[i, j]))
    return worst


def barycentric_project(plan, anchors, mode="row-normalized", return_empty=False):
    """Map every source row onto the plan-weighted combination of anchors.

    ``mode="row-normalized"`` divides each row of ``P @ T`` by the row mass so
    the output is a convex combination of anchor rows; ``mode="raw"`` returns
    ``P @ T`` unscaled. Rows that carry no mass map to the zero vector; pass
    ``return_empty=True`` to also get the boolean mask of those rows.
    """
    matrix = plan.matrix if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)
    anchors = as_matrix(anchors, "anchors")
    if matrix.ndim != 2 or matrix.shape[1] != anchors.shape[0]:
        raise ShapeError(
            f"plan shape {matrix.shape} incompatible with {anchors.shape[0]} anchor rows"
        )
    if mode not in ("row-normalized", "raw"):
        raise ParameterError(f"unknown projection mode {mode!r}")
    projected = matrix @ anchors
    mass = matrix.sum(axis=1)
    empty = mass <= 0
    if mode == "row-normalized":
        projected = np.divide(
            projected, mass[:, None], out=np.zeros_like(projected), where=~empty[:, None]
        )
    else:
        projected[empty] = 0.0
    if return_empty:
        return projected, empty
    return projected


__all__ = [
    "SinkhornConfig",
    "TransportPlan",
    "barycentric_project",
    "build_cost_matrix",
    "check_cost_matrix",
    "entropic_objective",
    "entropy",
    "marginal_violation",
    "ot_objective_gradient_check",
    "sinkhorn",
]
