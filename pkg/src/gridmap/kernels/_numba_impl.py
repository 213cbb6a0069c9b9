"""Numba-compiled kernels. Signatures mirror ``_numpy_impl``."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _lcs_into(a, la, b, lb, prev, cur):
    for j in range(lb + 1):
        prev[j] = 0
    for i in range(la):
        ai = a[i]
        cur[0] = 0
        for j in range(lb):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            elif prev[j + 1] >= cur[j]:
                cur[j + 1] = prev[j + 1]
            else:
                cur[j + 1] = cur[j]
        for j in range(lb + 1):
            prev[j] = cur[j]
    return prev[lb]


@njit(cache=True, nogil=True)
def lcs_length(a, b):
    lb = b.shape[0]
    prev = np.zeros(lb + 1, np.int32)
    cur = np.zeros(lb + 1, np.int32)
    return _lcs_into(a, a.shape[0], b, lb, prev, cur)


@njit(cache=True, nogil=True)
def similarity_matrix(a_codes, a_lens, b_codes, b_lens):
    m = a_lens.shape[0]
    n = b_lens.shape[0]
    out = np.empty((m, n), np.float64)
    width = b_codes.shape[1] + 1
    prev = np.zeros(width, np.int32)
    cur = np.zeros(width, np.int32)
    for i in range(m):
        la = a_lens[i]
        for j in range(n):
            lb = b_lens[j]
            s = la + lb
            if s == 0:
                out[i, j] = 1.0
                continue
            common = _lcs_into(a_codes[i], la, b_codes[j], lb, prev, cur)
            out[i, j] = 1.0 - (s - 2 * common) / s
    return out


@njit(cache=True, nogil=True)
def pairwise_distance(xy, geographic):
    n = xy.shape[0]
    out = np.zeros((n, n), np.float64)
    r = 6371008.8
    for i in range(n):
        for j in range(i + 1, n):
            if geographic:
                p1 = np.radians(xy[i, 1])
                p2 = np.radians(xy[j, 1])
                dl = np.radians(xy[j, 0] - xy[i, 0])
                h = np.sin((p2 - p1) / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
                d = 2 * r * np.arcsin(min(1.0, np.sqrt(h)))
            else:
                d = np.sqrt((xy[j, 0] - xy[i, 0]) ** 2 + (xy[j, 1] - xy[i, 1]) ** 2)
            out[i, j] = d
            out[j, i] = d
    return out


@njit(cache=True, nogil=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True, nogil=True)
def eps_components(dist, eps):
    n = dist.shape[0]
    parent = np.arange(n)
    for i in range(n):
        for j in range(i + 1, n):
            if dist[i, j] <= eps:
                ri = _find(parent, i)
                rj = _find(parent, j)
                if ri != rj:
                    if ri < rj:
                        parent[rj] = ri
                    else:
                        parent[ri] = rj
    labels = np.empty(n, np.int64)
    remap = np.full(n, -1, np.int64)
    k = 0
    for i in range(n):
        r = _find(parent, i)
        if remap[r] < 0:
            remap[r] = k
            k += 1
        labels[i] = remap[r]
    return labels
