"""Independent reference implementations used only by the tests.

Each oracle is written from the textbook definition with no code shared
with the package, so agreement is meaningful.
"""

import itertools
import math
from collections import deque


def norm(s):
    return " ".join(s.upper().split())


def lcs_table(a, b):
    """Full (|a|+1) x (|b|+1) dynamic-programming table."""
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                t[i][j] = t[i - 1][j - 1] + 1
            else:
                t[i][j] = max(t[i - 1][j], t[i][j - 1])
    return t[len(a)][len(b)]


def _is_subsequence(sub, s):
    it = iter(s)
    return all(ch in it for ch in sub)


def lcs_enumerate(a, b):
    """Longest common subsequence by enumerating subsequences of the shorter string."""
    if len(a) > len(b):
        a, b = b, a
    for k in range(len(a), -1, -1):
        for idx in itertools.combinations(range(len(a)), k):
            if _is_subsequence("".join(a[i] for i in idx), b):
                return k
    return 0


def indel_distance(a, b, lcs=lcs_table):
    a, b = norm(a), norm(b)
    return len(a) + len(b) - 2 * lcs(a, b)


def indel_similarity(a, b):
    a, b = norm(a), norm(b)
    if not a and not b:
        return 1.0
    return 1.0 - (len(a) + len(b) - 2 * lcs_table(a, b)) / (len(a) + len(b))


R = 6_371_008.8


def great_circle(lon1, lat1, lon2, lat2):
    """Central angle from the vector cross/dot form, times the mean radius."""
    def vec(lon, lat):
        lo, la = math.radians(lon), math.radians(lat)
        return (math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la))

    u, v = vec(lon1, lat1), vec(lon2, lat2)
    cross = (u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0])
    dot = sum(p * q for p, q in zip(u, v))
    return R * math.atan2(math.sqrt(sum(c * c for c in cross)), dot)


def floyd_warshall(nodes, weighted_edges):
    """All-pairs shortest path lengths; ``weighted_edges`` is [(u, v, w)]."""
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    d = [[math.inf] * n for _ in range(n)]
    for i in range(n):
        d[i][i] = 0.0
    for u, v, w in weighted_edges:
        i, j = idx[u], idx[v]
        d[i][j] = min(d[i][j], w)
        d[j][i] = min(d[j][i], w)
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if d[i][k] + d[k][j] < d[i][j]:
                    d[i][j] = d[i][k] + d[k][j]
    return {(nodes[i], nodes[j]): d[i][j] for i in range(n) for j in range(n)}


def eps_components(points, eps, dist):
    """Connected components of the eps-neighbourhood graph, by BFS."""
    n = len(points)
    label = [-1] * n
    cur = 0
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = cur
        q = deque([s])
        while q:
            i = q.popleft()
            for j in range(n):
                if label[j] < 0 and dist(points[i], points[j]) <= eps:
                    label[j] = cur
                    q.append(j)
        cur += 1
    return label


def same_partition(a, b):
    """True when two label vectors induce the same partition."""
    fwd, back = {}, {}
    for x, y in zip(a, b):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True
