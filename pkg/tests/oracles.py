"""Brute-force reference implementations used to check the real ones.

Everything here is deliberately naive: exhaustive enumeration and textbook
recursions, independent of the package's DP code paths.
"""

import itertools
from functools import lru_cache

import numpy as np


def collapse_path(path, blank=0):
    """CTC collapse: merge consecutive repeats, then drop blanks."""
    out = []
    prev = None
    for s in path:
        if s != prev and s != blank:
            out.append(s)
        prev = s
    return tuple(out)


def enumerate_labelings(logp, blank=0):
    """Total probability of every labeling, by summing over all V^T paths.

    Returns {labeling tuple: probability} in the linear domain.
    """
    logp = np.asarray(logp, dtype=np.float64)
    T, V = logp.shape
    mass = {}
    for path in itertools.product(range(V), repeat=T):
        p = float(np.exp(sum(logp[t, s] for t, s in enumerate(path))))
        lab = collapse_path(path, blank)
        mass[lab] = mass.get(lab, 0.0) + p
    return mass


def brute_force_ctc_loss(logp, target, blank=0):
    """-log P(target) by path enumeration; inf if no path collapses to it."""
    mass = enumerate_labelings(logp, blank)
    p = mass.get(tuple(target), 0.0)
    return np.inf if p == 0.0 else -float(np.log(p))


def best_labeling(logp, blank=0):
    """Maximum-probability labeling; ties broken lexicographically."""
    mass = enumerate_labelings(logp, blank)
    return min(mass.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def brute_force_edit_distance(a, b):
    """Plain recursive Levenshtein distance."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        sub = d(i - 1, j - 1) + (a[i - 1] != b[j - 1])
        return min(sub, d(i - 1, j) + 1, d(i, j - 1) + 1)

    return d(len(a), len(b))


def random_lattice(rng, T, V):
    """Random normalized log-prob lattice (rows log-sum-exp to 0)."""
    x = rng.normal(size=(T, V))
    return x - np.log(np.exp(x).sum(axis=1, keepdims=True))


def all_targets(V, max_len):
    """Every blank-free target over labels 1..V-1 up to max_len (incl. empty)."""
    out = [()]
    for L in range(1, max_len + 1):
        out.extend(itertools.product(range(1, V), repeat=L))
    return out
