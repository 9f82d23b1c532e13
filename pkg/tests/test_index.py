import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from localtime_lab import _index

# a small value alphabet forces ties and exact window-edge hits
values = st.lists(st.sampled_from([-1.0, -0.5, -0.25, 0.0, 0.1, 0.25, 0.3, 0.5, 1.0, 1.5]), min_size=1, max_size=40)
floats = st.lists(st.floats(-3, 3, allow_nan=False, width=64), min_size=1, max_size=40)
offsets = st.sampled_from([0.0, 0.25, -0.25, 0.5, 0.1])
windows = st.sampled_from([(-0.25, 0.25), (0.0, 0.5), (-0.5, 0.0), (0.25, np.inf), (-np.inf, 0.0)])
modes = st.sampled_from([_index.CLOSED_LEFT, _index.CLOSED_RIGHT])


def brute(w, offset, lo, hi, mode, weights=None):
    n = len(w)
    out = np.zeros(n, dtype=np.int64)
    for s in range(n):
        for r in range(s):
            d = (w[s] - w[r]) - offset
            hit = lo <= d < hi if mode == _index.CLOSED_LEFT else lo < d <= hi
            if hit:
                out[s] += 1 if weights is None else weights[r]
    return out


@settings(max_examples=200, deadline=None)
@given(st.one_of(values, floats), offsets, windows, modes)
def test_counts_match_bruteforce(w, offset, win, mode):
    w = np.array(w)
    uniq, ranks = _index.compress(w)
    got = _index.past_window_counts(ranks, uniq, offset, win[0], win[1], mode)
    assert np.array_equal(got, brute(w, offset, *win, mode))


@settings(max_examples=100, deadline=None)
@given(values, offsets, windows, modes, st.randoms(use_true_random=False))
def test_weighted_match_bruteforce(w, offset, win, mode, rnd):
    w = np.array(w)
    weights = np.array([rnd.randint(0, 5) for _ in w], dtype=np.int64)
    uniq, ranks = _index.compress(w)
    got = _index.past_window_weighted(ranks, uniq, offset, win[0], win[1], mode, weights)
    assert np.array_equal(got, brute(w, offset, *win, mode, weights))
    both = np.stack([weights, 2 * weights + 1], axis=1)
    tot = _index.past_window_weighted_total(ranks, uniq, offset, win[0], win[1], mode, both)
    assert tot[0] == got.sum()
    assert tot[1] == brute(w, offset, *win, mode, both[:, 1]).sum()


def test_compress():
    uniq, ranks = _index.compress([3.0, 1.0, 3.0, 2.0])
    assert np.array_equal(uniq, [1.0, 2.0, 3.0])
    assert np.array_equal(ranks, [2, 0, 2, 1])
