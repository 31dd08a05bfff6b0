"""Text dump of transport plans.

Each plan is a block: the header line ``rows,cols,epsilon,violation``, one
line with those values, then one line per plan row. Entries use 9
significant digits. Blocks are separated by a blank line; lines starting
with ``#`` are labels and are ignored by the parser.
"""

import numpy as np

from ..exceptions import DataError
from .entropic import TransportPlan

HEADER = "rows,cols,epsilon,violation"


def _fmt(x):
    return format(float(x), ".9g")


def format_plan(plan):
    m = plan.matrix
    lines = [HEADER, ",".join([str(m.shape[0]), str(m.shape[1]), _fmt(plan.epsilon), _fmt(plan.violation)])]
    lines.extend(",".join(_fmt(x) for x in row) for row in m)
    return "\n".join(lines) + "\n"


def dump_plans(plans, path):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(format_plan(p) for p in plans))


def parse_plans(text):
    plans = []
    lines = [ln.strip() for ln in text.splitlines()]
    i = 0
    while i < len(lines):
        if not lines[i] or lines[i].startswith("#"):
            i += 1
            continue
        if lines[i] != HEADER:
            raise DataError(f"line {i + 1}: expected plan header, got {lines[i]!r}")
        try:
            rows, cols, eps, viol = lines[i + 1].split(",")
            rows, cols = int(rows), int(cols)
            body = [[float(x) for x in lines[i + 2 + r].split(",")] for r in range(rows)]
        except (IndexError, ValueError) as exc:
            raise DataError(f"malformed plan block at line {i + 1}") from exc
        matrix = np.array(body, dtype=np.float64).reshape(rows, cols)
        plans.append(TransportPlan(matrix=matrix, violation=float(viol), epsilon=float(eps)))
        i += 2 + rows
    return plans


def load_plans(path):
    with open(path, encoding="ascii") as fh:
        return parse_plans(fh.read())
