"""Independent reference implementations used to check the real code paths.

Everything here is deliberately written the slow, obvious way (loops,
enumeration, textbook recursions) and must stay independent of the package's
own implementations.
"""

from __future__ import annotations

import math
from itertools import permutations

import numpy as np


def naive_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


def finite_difference(f, arrays: list[np.ndarray], h: float = 1e-4) -> list[np.ndarray]:
    """Central finite differences of scalar f(arrays) w.r.t. each array."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gf = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gf[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def adam_reference(x0: float, grads: list[float], lr: float, b1: float, b2: float,
                   eps: float) -> float:
    """Hand recursion of Adam on a scalar parameter."""
    x, m, v = x0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        x = x - lr * mhat / (math.sqrt(vhat) + eps)
    return x


# ---------------------------------------------------------------------------
# navigation metrics, written straight from the column definitions
# ---------------------------------------------------------------------------

def enumerate_geodesic(edges: dict[tuple[int, int], float], nodes: list[int],
                       a: int, b: int) -> float:
    """Minimum path length from a to b by enumerating all simple paths."""
    if a == b:
        return 0.0
    best = math.inf
    others = [n for n in nodes if n not in (a, b)]
    for r in range(len(others) + 1):
        for mid in permutations(others, r):
            path = (a, *mid, b)
            length = 0.0
            ok = True
            for u, v in zip(path, path[1:]):
                key = (min(u, v), max(u, v))
                if key not in edges:
                    ok = False
                    break
                length += edges[key]
            if ok and length < best:
                best = length
    return best


def bruteforce_episode_metrics(edges: dict[tuple[int, int], float], nodes: list[int],
                               trajectory: list[int], start: int, goal: int,
                               threshold: float, grounded: str | None,
                               target: str | None) -> dict:
    """Score one trajectory from the metric definitions, with enumeration-based
    geodesics (independent of any shortest-path code in the package)."""
    assert trajectory[0] == start
    tl = 0.0
    for u, v in zip(trajectory, trajectory[1:]):
        tl += edges[(min(u, v), max(u, v))]
    ne = enumerate_geodesic(edges, nodes, trajectory[-1], goal)
    sr = 1.0 if ne <= threshold else 0.0
    osr = 0.0
    for v in trajectory:
        if enumerate_geodesic(edges, nodes, v, goal) <= threshold:
            osr = 1.0
            break
    ell = enumerate_geodesic(edges, nodes, start, goal)
    if ell == 0.0:
        spl = sr
    else:
        spl = sr * ell / max(ell, tl)
    if grounded is None or target is None:
        rgs = None
        rgspl = None
    else:
        rgs = 1.0 if (sr == 1.0 and grounded == target) else 0.0
        rgspl = rgs if ell == 0.0 else rgs * ell / max(ell, tl)
    return {"TL": tl, "NE": ne, "SR": sr, "OSR": osr, "SPL": spl,
            "RGS": rgs, "RGSPL": rgspl}
