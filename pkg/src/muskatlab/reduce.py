"""Deterministic reductions.

Every sum over quadrature nodes or lattice frequencies goes through these
helpers so that the order of floating point additions is fixed by the data
layout alone, never by the number of workers that produced the terms.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def tree_sum(terms: Sequence[np.ndarray]) -> np.ndarray:
    """Sum a list of equally shaped arrays by balanced pairwise addition."""
    if len(terms) == 0:
        raise ValueError("tree_sum needs at least one term")
    level = list(terms)
    while len(level) > 1:
        nxt = [level[i] + level[i + 1] for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return np.array(level[0], copy=True)


def tree_sum_axis0(stack: np.ndarray) -> np.ndarray:
    """Pairwise sum of ``stack`` along its leading axis."""
    stack = np.asarray(stack)
    while stack.shape[0] > 1:
        m = stack.shape[0]
        half = m // 2
        paired = stack[0 : 2 * half : 2] + stack[1 : 2 * half : 2]
        if m % 2:
            paired = np.concatenate([paired, stack[-1:]], axis=0)
        stack = paired
    return np.array(stack[0], copy=True)


def weighted_tree_sum(weights: np.ndarray, stack: np.ndarray) -> np.ndarray:
    """Pairwise sum of ``weights[j] * stack[j]`` along the leading axis."""
    w = np.asarray(weights).reshape((-1,) + (1,) * (np.ndim(stack) - 1))
    return tree_sum_axis0(w * stack)


def total(a: np.ndarray) -> float | complex:
    """Scalar sum of all entries in a fixed (row-major, pairwise) order."""
    return np.sum(np.ascontiguousarray(a).ravel())
