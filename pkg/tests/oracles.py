"""Brute-force reference implementations shared by unit and acceptance tests.

Each one is written as plainly as possible in pure Python so that it shares
no code path with the package.
"""

import math
from fractions import Fraction

import numpy as np


def otsu_oracle(hist):
    """Exhaustive search over all thresholds with exact rational arithmetic."""
    n = sum(hist)
    best_t, best = 0, Fraction(-1)
    for t in range(257):
        n0 = sum(hist[:t])
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum(i * hist[i] for i in range(t)), n0)
        mu1 = Fraction(sum(i * hist[i] for i in range(t, 256)), n1)
        score = Fraction(n0 * n1, n * n) * (mu1 - mu0) ** 2
        if score > best:
            best_t, best = t, score
    return best_t


def random_histograms(rng, count=50):
    out = []
    for trial in range(count):
        kind = trial % 3
        if kind == 0:
            hist = rng.integers(0, 50, 256)
        elif kind == 1:  # bimodal scans: dark ink, bright paper
            hist = np.zeros(256, dtype=int)
            hist[rng.integers(0, 80, 30)] += rng.integers(1, 40, 30)
            hist[rng.integers(170, 256, 60)] += rng.integers(1, 200, 60)
        else:  # sparse, with ties likely
            hist = np.zeros(256, dtype=int)
            hist[rng.choice(256, 4, replace=False)] = rng.integers(1, 4, 4)
        out.append([int(h) for h in hist])
    return out


def image_from_hist(hist):
    return np.repeat(np.arange(256, dtype=np.uint8), hist)


def knn_oracle(train_x, train_y, queries, k):
    """All-pairs distances; distance ties keep training order, vote ties pick the lowest class."""
    out = []
    for q in queries.tolist():
        d = [(sum((a - b) ** 2 for a, b in zip(q, row)), i) for i, row in enumerate(train_x.tolist())]
        d.sort()
        votes = {}
        for _, i in d[:k]:
            votes[int(train_y[i])] = votes.get(int(train_y[i]), 0) + 1
        top = max(votes.values())
        out.append(min(c for c, v in votes.items() if v == top))
    return np.array(out)


def integer_points(rng, n, d, k):
    """Small-integer features keep every squared distance exact and make ties common."""
    return rng.integers(0, 4, (n, d)).astype(float), rng.integers(0, k, n)


def gnb_log_posterior_oracle(x, means, variances, priors):
    """Unnormalised log posterior of one sample under independent Gaussians."""
    out = []
    for mu, var, p in zip(means, variances, priors):
        s = math.log(p)
        for xi, m, v in zip(x, mu, var):
            s += -0.5 * math.log(2 * math.pi * v) - (xi - m) ** 2 / (2 * v)
        out.append(s)
    return out


def gini(labels):
    n = len(labels)
    if n == 0:
        return Fraction(0)
    return 1 - sum(Fraction(labels.count(c), n) ** 2 for c in set(labels))


def best_threshold_oracle(values, labels):
    """(threshold, weighted Gini) over every midpoint of distinct sorted values.

    Impurities are exact rationals, so ties resolve to the lowest threshold.
    """
    values, labels = list(values), [int(v) for v in labels]
    distinct = sorted(set(values))
    best = None
    for lo, hi in zip(distinct, distinct[1:]):
        t = 0.5 * (lo + hi)
        left = [y for v, y in zip(values, labels) if v <= t]
        right = [y for v, y in zip(values, labels) if v > t]
        imp = (len(left) * gini(left) + len(right) * gini(right)) / len(values)
        if best is None or imp < best[1]:
            best = (t, imp)
    return None if best is None else (best[0], float(best[1]))
