"""Seeded K-means and cluster/label agreement."""

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import InvalidArgument
from ..seeding import substream


def _sq_dists(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _init_plus_plus(points, k, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining mass is on duplicates of chosen centres
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def kmeans(points, k, seed, max_iter=300, trace=None):
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops when assignments stop changing or after ``max_iter`` rounds.
    If ``trace`` is a list, the within-cluster sum of squares after every
    centroid update is appended to it.

    Returns (assignments, centroids).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[0]
    if k <= 0:
        raise InvalidArgument(f"k must be positive, got {k}", field="k")
    if k > n:
        raise InvalidArgument(f"k={k} exceeds the number of points {n}", field="k")
    rng = substream(seed, "kmeans-init")
    centroids = _init_plus_plus(points, k, rng)
    assign = np.full(n, -1)
    for _ in range(max_iter):
        d2 = _sq_dists(points, centroids)
        new = d2.argmin(axis=1)
        for c in range(k):
            if not np.any(new == c):
                # refill an empty cluster with the point worst served by its centre
                far = int(d2[np.arange(n), new].argmax())
                new[far] = c
                d2[far, :] = 0.0
        if np.array_equal(new, assign):
            break
        assign = new
        for c in range(k):
            centroids[c] = points[assign == c].mean(axis=0)
        if trace is not None:
            trace.append(float(((points - centroids[assign]) ** 2).sum()))
    return assign.tolist(), centroids


def assign_to_centroids(points, centroids):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return _sq_dists(points, np.asarray(centroids)).argmin(axis=1)


def best_permutation_agreement(pred, truth):
    """Fraction of items whose cluster id matches the true label under the
    best one-to-one relabelling of clusters."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise InvalidArgument("pred and truth must be equal-length and non-empty", field="pred")
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / pred.size)
