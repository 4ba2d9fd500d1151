"""Agreement between partitions: adjusted Rand index and view matching."""

from __future__ import annotations

from math import comb

import numpy as np

from .core import Assignments


def contingency_table(a, b) -> np.ndarray:
    """Counts ``n_ij`` of items in cluster ``i`` of ``a`` and cluster ``j`` of ``b``.

    Rows and columns follow the sorted distinct labels of ``a`` and ``b``.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"partition lengths differ: {a.size} vs {b.size}")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64) if a.size else np.zeros((0, 0), np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _pairs(x):
    return sum(comb(int(c), 2) for c in np.ravel(x))


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index.

    When the chance-corrected denominator vanishes (both sides a single
    cluster, or both all singletons) the result is 1 for identical
    partitions and 0 otherwise.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"partition lengths differ: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise ValueError("adjusted Rand index needs at least two items")
    table = contingency_table(a, b)
    index = _pairs(table)
    rows = _pairs(table.sum(axis=1))
    cols = _pairs(table.sum(axis=0))
    expected = rows * cols / comb(n, 2)
    denom = 0.5 * (rows + cols) - expected
    if denom == 0:
        same = table.shape[0] == table.shape[1] and (table > 0).sum() == table.shape[0]
        return 1.0 if same else 0.0
    return float((index - expected) / denom)


def match_views(true_partitions, yielded_partitions):
    """Best ARI of each true partition over all yielded partitions, and their mean.

    A yielded partition may serve as the best match for several true ones.
    """
    if not true_partitions or not yielded_partitions:
        raise ValueError("both partition lists must be nonempty")
    best = [max(adjusted_rand_index(t, y) for y in yielded_partitions)
            for t in true_partitions]
    return best, float(np.mean(best))


def view_membership_ari(true_assignment: Assignments, yielded: Assignments) -> float:
    """ARI between the feature-to-view memberships, pooled over families."""
    t_shape = [len(f) for f in true_assignment.feature_assignment]
    y_shape = [len(f) for f in yielded.feature_assignment]
    if t_shape != y_shape:
        raise ValueError(f"feature sets differ: {t_shape} vs {y_shape}")
    return adjusted_rand_index(true_assignment.feature_views(), yielded.feature_views())


def object_partitions(assignments: Assignments, views=None):
    """Object partitions of the given views (all views by default)."""
    rows = assignments.object_assignment
    if views is None:
        return [list(r) for r in rows]
    return [list(rows[v]) for v in views]
