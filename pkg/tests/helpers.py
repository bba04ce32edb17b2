"""Brute-force reference computations shared by several test modules.

Everything here recomputes tree quantities from explicit cell lists in
pure Python, deliberately ignoring the package's vectorized layouts.
"""

from fractions import Fraction as F

from discweights.geometry import area_carleson, area_top
from discweights.weights import node_id


def brute_cells(depth, domain=None):
    out = []
    for k in range(depth + 1):
        ell = F(1, 1 << k)
        area = area_top(ell) if k < depth else area_carleson(ell)
        for j in range(1 << k):
            if domain is None or domain.mask[node_id(k, j)]:
                out.append((k, j, area))
    return out


def brute_box_integral(w, level, index, power=1.0, domain=None):
    total = 0.0
    for k, j, area in brute_cells(w.depth, domain):
        if k >= level and (j >> (k - level)) == index:
            total += w.value_at(k, j) ** power * float(area)
    return total


def brute_maximal(w, domain=None):
    out = {}
    for k, j, _ in brute_cells(w.depth):
        best = float("-inf")
        lvl, idx = k, j
        while True:
            num = brute_box_integral(w, lvl, idx, 1.0, domain)
            den = float(area_carleson(F(1, 1 << lvl)))
            best = max(best, num / den)
            if lvl == 0:
                break
            lvl, idx = lvl - 1, idx >> 1
        out[(k, j)] = best
    return out
