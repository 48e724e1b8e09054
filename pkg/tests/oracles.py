"""Independent reference computations used to check the fast paths."""
import math

FULL, EMPTY = 0.0, math.inf


def brute_quantile(scores, level):
    """sup{p : (1/n) #{s >= p} >= level}, scanning every candidate threshold."""
    n = len(scores)
    if n == 0 or level >= 1:
        return FULL
    if level <= 0:
        return EMPTY
    ok = [p for p in set(scores) | {0.0} if sum(s >= p for s in scores) / n >= level]
    return max(ok)


def brute_shannon_lengths(dist):
    """Smallest L with 2**-L <= p, by counting up from zero."""
    out = {}
    for s, p in dist.items():
        L = 0
        while 2.0 ** -L > p:
            L += 1
        out[s] = L
    return out


def is_prefix_free(codewords):
    words = sorted(codewords)
    return all(not b.startswith(a) for a, b in zip(words, words[1:]))
