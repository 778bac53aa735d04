"""Independent reference implementations used by the unit and acceptance tests.

Each one recomputes a quantity by brute force or by a different formula
than the library uses.
"""
import itertools
import math
from collections import Counter

import numpy as np


def brute_macro_f1(y_true, y_pred):
    """Per-class F1 from explicit counting loops."""
    out = []
    for cls in (0, 1):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p == cls)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != cls and p == cls)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p != cls)
        out.append(0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn))
    return sum(out) / 2


def brute_mcc(y_true, y_pred):
    """Pearson correlation of the two 0/1 vectors; 0 when either is constant."""
    n = len(y_true)
    mt, mp = sum(y_true) / n, sum(y_pred) / n
    cov = sum((t - mt) * (p - mp) for t, p in zip(y_true, y_pred))
    vt = sum((t - mt) ** 2 for t in y_true)
    vp = sum((p - mp) ** 2 for p in y_pred)
    return 0.0 if vt == 0 or vp == 0 else cov / math.sqrt(vt * vp)


def expand_table(c):
    """Label vectors realizing a confusion table."""
    y_true = [1] * c.tp + [0] * c.fp + [1] * c.fn + [0] * c.tn
    y_pred = [1] * c.tp + [1] * c.fp + [0] * c.fn + [0] * c.tn
    return y_true, y_pred


def central_diff(fun, w, h=1e-5):
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (fun(w + e) - fun(w - e)) / (2 * h)
    return g


def union_oracle(sets, lower=30, upper=50):
    """Exhaustive sweep over every distinct threshold, smallest first."""
    counts = Counter(f for s in sets for f in set(s))
    freq = {f: c / len(sets) for f, c in counts.items()}
    levels = sorted(set(freq.values()))
    sized = [(t, sorted(f for f in freq if freq[f] >= t)) for t in levels]
    if len(sized[0][1]) < lower:
        return tuple(sized[0][1]), sized[0][0], "closest_fallback"
    for i, (t, s) in enumerate(sized):
        if len(s) <= upper:
            if len(s) >= lower:
                return tuple(s), t, "in_range"
            t_prev, s_prev = sized[i - 1]
            break
    else:
        t_prev, s_prev = sized[-1]
    cut = sorted(s_prev, key=lambda f: (-freq[f], f))[:upper]
    return tuple(sorted(cut)), t_prev, "closest_fallback"


def random_sets(rng):
    """Random per-repetition feature sets with a mix of popular features."""
    n_sets = rng.randint(1, 40)
    universe = rng.randint(10, 150)
    sizes = rng.randint(1, min(universe, 60))
    hot = rng.sample(range(universe), rng.randint(0, min(universe, 70)))
    out = []
    for _ in range(n_sets):
        k = rng.randint(1, sizes)
        pool = hot if hot and rng.random() < 0.7 else list(range(universe))
        out.append(rng.sample(pool, min(k, len(pool))))
    return out


def brute_cfs(X, y):
    """Best merit over all non-empty subsets; ties keep the earliest found."""
    d = X.shape[1]
    R = np.abs(np.corrcoef(np.column_stack([X, y]), rowvar=False))
    best, arg = -1.0, None
    for k in range(1, d + 1):
        for S in itertools.combinations(range(d), k):
            m = cfs_merit_direct(R, S)
            if m > best + 1e-12:
                best, arg = m, S
    return best, arg


def cfs_merit_direct(R, S):
    """k * mean|r_cf| / sqrt(k + k(k-1) * mean|r_ff|) from a full |corr| matrix
    whose last column is the class."""
    k = len(S)
    rcf = R[list(S), -1].mean()
    rff = R[np.ix_(S, S)][~np.eye(k, dtype=bool)].mean() if k > 1 else 0.0
    return k * rcf / math.sqrt(k + k * (k - 1) * rff)


def naive_friedman(table):
    """Average ranks per row by counting, then the tie-corrected formula."""
    n, k = table.shape
    R = np.zeros(k)
    tie_sum = 0
    for row in table:
        for j in range(k):
            less = sum(1 for v in row if v < row[j])
            equal = sum(1 for v in row if v == row[j])
            R[j] += less + (equal + 1) / 2
        for v in set(row.tolist()):
            t = int(np.sum(row == v))
            tie_sum += t**3 - t
    chi = 12 / (n * k * (k + 1)) * sum(r * r for r in R) - 3 * n * (k + 1)
    return chi / (1 - tie_sum / (n * k * (k * k - 1)))


def planted(seed, n=100, noise=20, shift=2.0):
    """Column 0 shifts with the class; the rest are pure noise.  Standardized."""
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.standard_normal((n, noise + 1))
    X[:, 0] += shift * y
    return (X - X.mean(axis=0)) / X.std(axis=0), y
