"""Order-statistics index over past path values.

Every windowed count in the package has the form

    #{r < s : lo <= (W_s - W_r) - offset < hi}      (or the ``(lo, hi]`` variant)

for each ``s``.  Values are compressed to ranks once per path and a Fenwick
tree over ranks holds the values seen so far, so each ``s`` costs one update
and two prefix queries.

The rank interval of a window is located with *the same* floating point
expression ``(w_s - v) - offset`` that a brute-force loop evaluates.  IEEE
subtraction is monotone in both arguments, so for fixed ``w_s`` the predicate
is monotone in ``v``, and the edge index is monotone in ``w_s``.  All edges
therefore come out of one linear merge over the sorted distinct values, and
the counts equal a double loop exactly, not just up to rounding.
"""

import numba as nb
import numpy as np

CLOSED_LEFT = 0  # window lo <= d < hi
CLOSED_RIGHT = 1  # window lo < d <= hi


def compress(values):
    """Return ``(sorted_unique, ranks)`` with ``sorted_unique[ranks] == values``."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    uniq = np.unique(values)
    ranks = np.searchsorted(uniq, values).astype(np.int64)
    return uniq, ranks


@nb.njit(cache=True, nogil=True)
def edges(uniq, offset, thr, strict):
    """``e[k]`` = first ``j`` with ``(uniq[k] - uniq[j]) - offset`` below ``thr``.

    "Below" is ``<`` when ``strict`` and ``<=`` otherwise; ``e[k] = m`` when
    no such ``j`` exists.
    """
    m = uniq.shape[0]
    out = np.empty(m, dtype=np.int64)
    j = 0
    for k in range(m):
        ws = uniq[k]
        while j < m:
            d = (ws - uniq[j]) - offset
            if (d < thr) if strict else (d <= thr):
                break
            j += 1
        out[k] = j
    return out


def window_edges(uniq, offset, lo, hi, mode):
    """Per distinct value, the rank interval ``[a, b)`` of values inside the window."""
    strict = mode == CLOSED_LEFT
    return edges(uniq, offset, hi, strict), edges(uniq, offset, lo, strict)


@nb.njit(cache=True, nogil=True)
def _fen_add(tree, i, v):
    i += 1
    m = tree.shape[0]
    while i < m:
        tree[i] += v
        i += i & (-i)


@nb.njit(cache=True, nogil=True)
def _fen_prefix(tree, i):
    # sum over ranks < i
    s = 0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@nb.njit(cache=True, nogil=True)
def _fen_add_row(tree, i, row):
    i += 1
    m = tree.shape[0]
    k = row.shape[0]
    while i < m:
        for j in range(k):
            tree[i, j] += row[j]
        i += i & (-i)


@nb.njit(cache=True, nogil=True)
def _fen_prefix_row(tree, i, out, sign):
    k = out.shape[0]
    while i > 0:
        for j in range(k):
            out[j] += sign * tree[i, j]
        i -= i & (-i)


@nb.njit(cache=True, nogil=True)
def _counts(ranks, m, ea, eb):
    n = ranks.shape[0]
    tree = np.zeros(m + 1, dtype=np.int64)
    out = np.zeros(n, dtype=np.int64)
    for s in range(n):
        k = ranks[s]
        a = ea[k]
        b = eb[k]
        if b > a:
            out[s] = _fen_prefix(tree, b) - _fen_prefix(tree, a)
        _fen_add(tree, k, 1)
    return out


@nb.njit(cache=True, nogil=True)
def _weighted(ranks, m, ea, eb, weights):
    n = ranks.shape[0]
    tree = np.zeros(m + 1, dtype=np.int64)
    out = np.zeros(n, dtype=np.int64)
    for s in range(n):
        k = ranks[s]
        a = ea[k]
        b = eb[k]
        if b > a:
            out[s] = _fen_prefix(tree, b) - _fen_prefix(tree, a)
        if weights[s] != 0:
            _fen_add(tree, k, weights[s])
    return out


@nb.njit(cache=True, nogil=True)
def _weighted_total(ranks, m, ea, eb, weights):
    n, k = weights.shape
    tree = np.zeros((m + 1, k), dtype=np.int64)
    acc = np.zeros(k, dtype=np.int64)
    for s in range(n):
        r = ranks[s]
        a = ea[r]
        b = eb[r]
        if b > a:
            _fen_prefix_row(tree, b, acc, 1)
            _fen_prefix_row(tree, a, acc, -1)
        _fen_add_row(tree, r, weights[s])
    return acc


def past_window_counts(ranks, uniq, offset, lo, hi, mode):
    """``c[s] = #{r < s : (w[s] - w[r]) - offset in window}`` for ``w = uniq[ranks]``."""
    ea, eb = window_edges(uniq, float(offset), float(lo), float(hi), mode)
    return _counts(ranks, uniq.shape[0], ea, eb)


def past_window_weighted(ranks, uniq, offset, lo, hi, mode, weights):
    """``sum(weights[r] for r < s if (w[s] - w[r]) - offset in window)`` for each ``s``."""
    ea, eb = window_edges(uniq, float(offset), float(lo), float(hi), mode)
    return _weighted(ranks, uniq.shape[0], ea, eb, np.ascontiguousarray(weights, dtype=np.int64))


def past_window_weighted_total(ranks, uniq, offset, lo, hi, mode, weights):
    """Column totals of :func:`past_window_weighted` for an ``(n, k)`` weight matrix."""
    ea, eb = window_edges(uniq, float(offset), float(lo), float(hi), mode)
    return _weighted_total(ranks, uniq.shape[0], ea, eb, np.ascontiguousarray(weights, dtype=np.int64))
