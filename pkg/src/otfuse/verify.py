"""Self-check suite run by ``otfuse verify``.

Every check draws its instances from a seeded generator and compares the
library against an independent route: exact transport, closed forms,
finite differences, convex-hull feasibility or a plain counting loop.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .exceptions import DomainError
from .metrics import metrics_from_confusion, segmentation_metrics
from .scene_anchor import ScenePosterior, synthesize_anchor
from .synthetic import make_basis, make_table
from .tensor_core import marginalize_joint, tensor_product_joint
from .transport import (
    SinkhornConfig,
    barycentric_project,
    build_cost_matrix,
    check_cost_matrix,
    exact_transport,
    ot_objective_gradient_check,
    sinkhorn,
)

EPSILON_SWEEP = (0.01, 0.05, 0.25, 1.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_simplex(rng, n):
    p = rng.random(n) + 0.05
    return p / p.sum()


def rational_simplex(rng, n, denom):
    """Random composition of ``denom`` into ``n`` positive parts, over ``denom``."""
    cuts = np.sort(rng.choice(np.arange(1, denom), n - 1, replace=False))
    return np.diff(np.concatenate([[0], cuts, [denom]])) / denom


def random_cost(rng, n, m, dim=5):
    return build_cost_matrix(rng.standard_normal((n, dim)), rng.standard_normal((m, dim)))


def in_convex_hull(point, vertices, tol=1e-7):
    """Feasibility of ``point = w @ vertices`` with ``w`` on the simplex."""
    k = vertices.shape[0]
    a_eq = np.vstack([vertices.T, np.ones((1, k))])
    b_eq = np.concatenate([point, [1.0]])
    res = linprog(np.zeros(k), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * k, method="highs")
    if res.status != 0:
        return False
    return np.abs(res.x @ vertices - point).max() <= tol


def check_marginals(rng, n_instances=30):
    worst = 0.0
    for i in range(n_instances):
        n, m = int(rng.integers(1, 65)), int(rng.integers(1, 9))
        eps = (0.01, 0.05, 0.25)[i % 3]
        plan = sinkhorn(random_simplex(rng, n), random_simplex(rng, m), random_cost(rng, n, m),
                        SinkhornConfig(epsilon=eps))
        if not plan.converged:
            return False, f"instance {i} did not converge (violation {plan.violation:.3g})"
        worst = max(worst, plan.violation)
    return worst <= 1e-6, f"max violation {worst:.3g}"


def check_lp_oracle(rng, n_instances=15, eps=0.01):
    lo, hi_ratio = math.inf, 0.0
    for _ in range(n_instances):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        denom = int(rng.choice([8, 12, 16, 24]))
        mu, nu = rational_simplex(rng, n, denom), rational_simplex(rng, m, denom)
        cost = random_cost(rng, n, m)
        _, exact = exact_transport(mu, nu, cost)
        plan = sinkhorn(mu, nu, cost, SinkhornConfig(epsilon=eps, tolerance=1e-11, max_iters=10_000))
        gap = plan.transport_cost(cost) - exact
        bound = eps * (math.log(n) + math.log(m)) + 1e-6
        lo = min(lo, gap)
        hi_ratio = max(hi_ratio, gap / bound)
    return lo >= -1e-8 and hi_ratio <= 1.0, f"min gap {lo:.3g}, max gap/bound {hi_ratio:.3f}"


def check_gradient(rng, n_instances=5):
    worst = 0.0
    for _ in range(n_instances):
        n, m = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        worst = max(worst, ot_objective_gradient_check(
            random_simplex(rng, n), random_simplex(rng, m), random_cost(rng, n, m), SinkhornConfig(epsilon=0.1)))
    return worst <= 1e-4, f"max deviation {worst:.3g}"


def check_independence(rng, n_instances=20):
    worst = 0.0
    for _ in range(n_instances):
        n, m = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        mu, nu = random_simplex(rng, n), random_simplex(rng, m)
        plan = sinkhorn(mu, nu, np.full((n, m), rng.uniform(0, 2)))
        worst = max(worst, np.abs(plan.matrix - np.outer(mu, nu)).max())
    return worst <= 1e-10, f"max deviation from outer product {worst:.3g}"


def check_closed_form(rng):
    half = np.array([0.5, 0.5])
    plan = sinkhorn(half, half, np.array([[0.0, 1.0], [1.0, 0.0]]), SinkhornConfig(epsilon=0.25, tolerance=1e-12))
    expected = 0.5 / (1.0 + math.exp(-4.0))
    err = abs(plan.matrix[0, 0] - expected)
    return err <= 1e-4, f"diagonal {plan.matrix[0, 0]:.6f}, closed form {expected:.6f}"


def check_cost_range(rng, corrupt=False):
    cost = random_cost(rng, 16, 4, dim=8)
    if corrupt:
        cost = cost.copy()
        cost[0, 0] = 3.0
    try:
        check_cost_matrix(cost)
    except DomainError as exc:
        return False, str(exc)
    return True, f"range [{cost.min():.3g}, {cost.max():.3g}]"


def check_hull(rng, n_instances=10):
    for i in range(n_instances):
        k = int(rng.integers(2, 5))
        anchors = rng.standard_normal((k, 6))
        plan = rng.random((5, k))
        for row in barycentric_project(plan, anchors):
            if not in_convex_hull(row, anchors):
                return False, f"instance {i}: projected row outside the anchor hull"
    return True, f"{n_instances} random plans projected inside the hull"


def check_factorization(rng, config, n_triples=200):
    sizes = config.attribute_space.sizes
    worst = 0.0
    for _ in range(n_triples):
        margs = [random_simplex(rng, s) for s in sizes]
        joint = tensor_product_joint(*margs)
        back = marginalize_joint(joint, sizes)
        worst = max(worst, max(np.abs(b - m).max() for b, m in zip(back, margs)))
    table = make_table(config, make_basis(config.attribute_space, config.embedding_dim, rng), rng)
    lin = 0.0
    for _ in range(20):
        p = ScenePosterior.from_marginals(*(random_simplex(rng, s) for s in sizes))
        q = ScenePosterior.from_marginals(*(random_simplex(rng, s) for s in sizes))
        alpha = rng.random()
        mixed = synthesize_anchor(alpha * p.joint + (1 - alpha) * q.joint, table)
        split = alpha * synthesize_anchor(p, table) + (1 - alpha) * synthesize_anchor(q, table)
        lin = max(lin, np.abs(mixed - split).max())
    return worst <= 1e-12 and lin <= 1e-10, f"marginal error {worst:.3g}, linearity error {lin:.3g}"


def check_coverage(rng, config):
    space = config.attribute_space
    table = make_table(config, make_basis(space, config.embedding_dim, rng), rng)
    train = config.train_set()
    withheld = 0
    for combo in space.combinations():
        anchor = synthesize_anchor(ScenePosterior.one_hot(space, combo), table)
        if anchor.shape != (table.n_classes, table.embedding_dim) or not np.all(np.isfinite(anchor)):
            return False, f"no valid anchor for {space.key(combo)}"
        if not np.array_equal(anchor, table.prototype(combo)):
            return False, f"one-hot anchor differs from prototype for {space.key(combo)}"
        withheld += combo not in train
    return True, f"{space.n_combinations} combinations, {withheld} withheld from training"


def epsilon_sweep(rng, n_instances=20, size=5):
    """Transport cost of the entropic plan for each epsilon, per instance."""
    rows = []
    for i in range(n_instances):
        mu, nu = random_simplex(rng, size), random_simplex(rng, size)
        cost = random_cost(rng, size, size)
        costs = []
        for eps in EPSILON_SWEEP:
            plan = sinkhorn(mu, nu, cost, SinkhornConfig(epsilon=eps, tolerance=1e-11, max_iters=20_000))
            costs.append(plan.transport_cost(cost))
        rows.append((i, costs))
    return rows


def check_monotone(rows):
    worst = 0.0
    for _, costs in rows:
        worst = max(worst, max(a - b for a, b in zip(costs, costs[1:])))
    return worst <= 1e-8, f"largest decrease with growing epsilon {worst:.3g}"


def check_metrics(rng, n_pairs=50):
    for i in range(n_pairs):
        pred = rng.random((16, 16)) < rng.random()
        target = rng.random((16, 16)) < rng.random()
        cm = np.zeros((2, 2), dtype=np.int64)
        for t, p in zip(target.ravel(), pred.ravel()):
            cm[int(t), int(p)] += 1
        if segmentation_metrics(pred, target) != metrics_from_confusion(cm):
            return False, f"pair {i}: metrics disagree with loop count"
    hand = segmentation_metrics(np.array([1, 0, 0, 0]), np.array([1, 1, 0, 0]))["mIoU"]
    return abs(hand - 175.0 / 3.0) <= 0.01, f"hand case mIoU {hand:.4f}"


def run_checks(config, inject_corruption=False):
    """Run every check; returns ``(results, sweep_rows)``."""
    rng = np.random.default_rng(config.seed)
    sweep = epsilon_sweep(rng)
    checks = [
        ("sinkhorn_marginals", lambda: check_marginals(rng)),
        ("lp_oracle_gap", lambda: check_lp_oracle(rng)),
        ("envelope_gradient", lambda: check_gradient(rng)),
        ("constant_cost_independence", lambda: check_independence(rng)),
        ("closed_form_2x2", lambda: check_closed_form(rng)),
        ("cost_range", lambda: check_cost_range(rng, corrupt=inject_corruption)),
        ("projection_hull", lambda: check_hull(rng)),
        ("factorization", lambda: check_factorization(rng, config)),
        ("compositional_coverage", lambda: check_coverage(rng, config)),
        ("epsilon_monotone", lambda: check_monotone(sweep)),
        ("metric_oracle", lambda: check_metrics(rng)),
    ]
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail))
    return results, sweep


def sweep_csv(rows):
    lines = ["instance," + ",".join(f"eps_{e:g}" for e in EPSILON_SWEEP)]
    lines += [f"{i}," + ",".join(f"{c:.10f}" for c in costs) for i, costs in rows]
    return "\n".join(lines) + "\n"
