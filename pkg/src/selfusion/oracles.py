"""Slow, definitional reference implementations used as test oracles.

These are deliberately naive (pure Python, breadth-first search, explicit
sums) and share no code with the fast paths they check.  Keep inputs small,
around 32**3 voxels at most.
"""
from __future__ import annotations

import math
from collections import deque
from functools import lru_cache

import numpy as np

__all__ = ["oracle_ccl", "oracle_hysteresis", "oracle_pearson", "oracle_partition"]


@lru_cache(maxsize=32)
def _neighbor_table(dims: tuple[int, int, int], connectivity: int) -> tuple[tuple[int, ...], ...]:
    nx, ny, nz = dims
    max_nonzero = {6: 1, 18: 2, 26: 3}[connectivity]
    offsets = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                nonzero = (dx != 0) + (dy != 0) + (dz != 0)
                if 0 < nonzero <= max_nonzero:
                    offsets.append((dx, dy, dz))
    table = []
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                nbrs = []
                for dx, dy, dz in offsets:
                    a, b, c = x + dx, y + dy, z + dz
                    if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz:
                        nbrs.append(a + nx * (b + ny * c))
                table.append(tuple(nbrs))
    return tuple(table)


def _flat(arr: np.ndarray) -> list:
    # canonical x-fastest order
    return np.asarray(arr).ravel(order="F").tolist()


def oracle_ccl(mask: np.ndarray, connectivity: int = 26) -> tuple[np.ndarray, int]:
    """Flood-fill labeling; components numbered in order of their first voxel."""
    mask = np.asarray(mask)
    dims = tuple(int(d) for d in mask.shape)
    nbrs = _neighbor_table(dims, connectivity)
    fg = _flat(mask)
    labels = [0] * len(fg)
    count = 0
    for start in range(len(fg)):
        if not fg[start] or labels[start]:
            continue
        count += 1
        labels[start] = count
        queue = deque([start])
        while queue:
            i = queue.popleft()
            for j in nbrs[i]:
                if fg[j] and not labels[j]:
                    labels[j] = count
                    queue.append(j)
    return np.array(labels, dtype=np.int32).reshape(dims, order="F"), count


def oracle_partition(mask: np.ndarray, connectivity: int = 26) -> set[frozenset[int]]:
    """Components as a set of frozensets of canonical linear indices."""
    labels, n = oracle_ccl(mask, connectivity)
    flat = labels.ravel(order="F")
    return {frozenset(np.flatnonzero(flat == k).tolist()) for k in range(1, n + 1)}


def oracle_hysteresis(conf: np.ndarray, tau1: int, tau2: int, connectivity: int = 26) -> np.ndarray:
    """Case rule evaluated voxel by voxel.

    A voxel takes its ``> tau2`` value when some ``> tau1`` voxel is reachable
    from it through ``> tau2`` voxels, and its ``> tau1`` value otherwise.
    Reachability is answered by a search from the voxel; every voxel the
    search visits has the same reachable set, so the answer is reused for them.
    """
    conf = np.asarray(conf)
    dims = tuple(int(d) for d in conf.shape)
    nbrs = _neighbor_table(dims, connectivity)
    values = _flat(conf)
    hat = [v > tau2 for v in values]
    tilde = [v > tau1 for v in values]
    out = [None] * len(values)
    for r in range(len(values)):
        if out[r] is not None:
            continue
        if not hat[r]:
            out[r] = tilde[r]
            continue
        reach = {r}
        queue = deque([r])
        while queue:
            i = queue.popleft()
            for j in nbrs[i]:
                if hat[j] and j not in reach:
                    reach.add(j)
                    queue.append(j)
        seeded = any(tilde[q] for q in reach)
        for q in reach:
            out[q] = hat[q] if seeded else tilde[q]
    return np.array(out, dtype=np.uint8).reshape(dims, order="F")


def oracle_pearson(pairs) -> float:
    """Two-pass sample Pearson correlation."""
    xs = [float(p[0]) for p in pairs]
    ys = [float(p[1]) for p in pairs]
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    return sxy / math.sqrt(sxx * syy)
