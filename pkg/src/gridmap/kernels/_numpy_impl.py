"""Pure-numpy kernels, used when numba is disabled or unavailable."""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

_PAIR_CHUNK = 131_072


def _lcs_batch(a, b):
    """LCS lengths for row-aligned batches of padded code arrays.

    Padding codes differ between ``a`` (-1) and ``b`` (-2) so pads never match.
    """
    p, la = a.shape
    lb = b.shape[1]
    prev = np.zeros((p, lb + 1), np.int32)
    cur = np.zeros((p, lb + 1), np.int32)
    for i in range(la):
        eq = b == a[:, i : i + 1]
        diag = prev[:, :-1] + 1
        for j in range(lb):
            cur[:, j + 1] = np.where(eq[:, j], diag[:, j], np.maximum(prev[:, j + 1], cur[:, j]))
        prev, cur = cur, prev
    return prev[:, lb]


def lcs_length(a, b):
    a2 = np.asarray(a, np.int64).reshape(1, -1)
    b2 = np.asarray(b, np.int64).reshape(1, -1)
    if a2.shape[1] == 0 or b2.shape[1] == 0:
        return 0
    return int(_lcs_batch(a2, b2)[0])


def similarity_matrix(a_codes, a_lens, b_codes, b_lens):
    m, n = len(a_lens), len(b_lens)
    out = np.empty((m, n), np.float64)
    if m == 0 or n == 0:
        return out
    a = np.where(np.arange(a_codes.shape[1]) < a_lens[:, None], a_codes, -1).astype(np.int64)
    b = np.where(np.arange(b_codes.shape[1]) < b_lens[:, None], b_codes, -2).astype(np.int64)
    ii, jj = np.divmod(np.arange(m * n), n)
    flat = out.reshape(-1)
    for start in range(0, m * n, _PAIR_CHUNK):
        sl = slice(start, start + _PAIR_CHUNK)
        ri, rj = ii[sl], jj[sl]
        common = _lcs_batch(a[ri], b[rj])
        s = a_lens[ri] + b_lens[rj]
        with np.errstate(invalid="ignore", divide="ignore"):
            sim = 1.0 - (s - 2 * common) / s
        flat[sl] = np.where(s == 0, 1.0, sim)
    return out


def pairwise_distance(xy, geographic):
    xy = np.asarray(xy, np.float64)
    if geographic:
        lat = np.radians(xy[:, 1])
        dp = lat[None, :] - lat[:, None]
        dl = np.radians(xy[None, :, 0] - xy[:, None, 0])  # same operation order as the numba kernel
        h = np.sin(dp / 2) ** 2 + np.cos(lat)[:, None] * np.cos(lat)[None, :] * np.sin(dl / 2) ** 2
        out = 2 * 6371008.8 * np.arcsin(np.minimum(1.0, np.sqrt(h)))
    else:
        diff = xy[None, :, :] - xy[:, None, :]
        out = np.sqrt((diff ** 2).sum(axis=-1))
    np.fill_diagonal(out, 0.0)
    return out


def eps_components(dist, eps):
    n = dist.shape[0]
    if n == 0:
        return np.zeros(0, np.int64)
    _, raw = connected_components(csr_matrix(dist <= eps), directed=False)
    # relabel in order of first appearance
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return remap[raw].astype(np.int64)
