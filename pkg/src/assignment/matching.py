"""One-to-one Hungarian matching and many-to-one simOTA matching."""
import logging
from dataclasses import dataclass
from typing import FrozenSet, List, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..core.errors import ShapeMismatchError
from .cost import CostMatrix

logger = logging.getLogger(__name__)

DEFAULT_SIMOTA_Q = 10


@dataclass(frozen=True)
class MatchResult:
    """pairs are (proposal, gt) sorted by proposal index."""

    pairs: Tuple[Tuple[int, int], ...]
    unmatched_proposals: FrozenSet[int]
    multiplicity: Tuple[int, ...]
    total_cost: float = 0.0
    mode: str = "one_to_one"

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    def gt_of(self) -> dict:
        return dict(self.pairs)


def _as_array(cost: Union[CostMatrix, np.ndarray]) -> np.ndarray:
    values = cost.total if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeMismatchError(f"Cost matrix must be 2-D, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("Cost matrix has non-finite entries")
    return values


def _result(pairs: List[Tuple[int, int]], n_props: int, n_gts: int, values: np.ndarray, mode: str) -> MatchResult:
    pairs = sorted(pairs)
    matched = {p for p, _ in pairs}
    counts = [0] * n_gts
    for _, g in pairs:
        counts[g] += 1
    total = float(sum(values[p, g] for p, g in pairs))
    return MatchResult(tuple(pairs), frozenset(set(range(n_props)) - matched), tuple(counts), total, mode)


def _lsap_value(values: np.ndarray) -> float:
    if values.shape[0] == 0 or values.shape[1] == 0:
        return 0.0
    rows, cols = linear_sum_assignment(values)
    return float(values[rows, cols].sum())


def hungarian(cost: Union[CostMatrix, np.ndarray]) -> MatchResult:
    """Minimum-cost one-to-one assignment of min(rows, cols) pairs.

    Among optimal assignments the one whose sorted pair list is
    lexicographically smallest is returned: pairs are fixed greedily in
    (row, col) order whenever the remaining sub-problem can still reach the
    optimum.
    """
    values = _as_array(cost)
    n, g = values.shape
    if n == 0 or g == 0:
        return _result([], n, g, values, "one_to_one")

    optimum = _lsap_value(values)
    tol = 1e-9 * max(1.0, abs(optimum))
    free_rows, free_cols = list(range(n)), list(range(g))
    fixed_cost = 0.0
    pairs: List[Tuple[int, int]] = []
    target = min(n, g)
    for r in range(n):
        if len(pairs) == target:
            break
        for c in range(g):
            if c not in free_cols:
                continue
            rest_rows = [x for x in free_rows if x != r]
            rest_cols = [x for x in free_cols if x != c]
            rest = _lsap_value(values[np.ix_(rest_rows, rest_cols)])
            if fixed_cost + values[r, c] + rest <= optimum + tol:
                pairs.append((r, c))
                fixed_cost += values[r, c]
                free_rows.remove(r)
                free_cols.remove(c)
                break
    return _result(pairs, n, g, values, "one_to_one")


def dynamic_k(ious: np.ndarray, q: int = DEFAULT_SIMOTA_Q) -> np.ndarray:
    """Per-gt budget max(1, floor(sum of the top-q IoUs)), capped at the proposal count."""
    n = ious.shape[0]
    if n == 0:
        return np.zeros(ious.shape[1], dtype=np.int64)
    pool = min(q, n)
    top = -np.sort(-ious, axis=0)[:pool]
    # small epsilon so exact sums such as 1.8 + 0.2 floor as expected
    k = np.floor(top.sum(axis=0) + 1e-9).astype(np.int64)
    return np.clip(k, 1, n)


def simota(cost: Union[CostMatrix, np.ndarray], ious: np.ndarray, q: int = DEFAULT_SIMOTA_Q) -> MatchResult:
    """Many-to-one assignment with dynamic-k candidate selection.

    Each gt takes its k lowest-cost proposals; a proposal claimed by several
    gts stays with its cheapest one. When there are at least as many
    proposals as gts, a gt left empty takes its cheapest free proposal, or
    otherwise its cheapest proposal held by a gt that has more than one.
    """
    values = _as_array(cost)
    ious = np.asarray(ious, dtype=np.float64)
    if ious.shape != values.shape:
        raise ShapeMismatchError(f"IoU matrix {ious.shape} does not match cost {values.shape}")
    n, g = values.shape
    if n == 0 or g == 0:
        return _result([], n, g, values, "many_to_one")

    ks = dynamic_k(ious, q)
    owner = np.full(n, -1, dtype=np.int64)
    for gt in range(g):
        order = np.argsort(values[:, gt], kind="stable")[: ks[gt]]
        for p in order:
            current = owner[p]
            if current < 0 or values[p, gt] < values[p, current] or (
                    values[p, gt] == values[p, current] and gt < current):
                owner[p] = gt

    if n >= g:
        for gt in range(g):
            if np.any(owner == gt):
                continue
            counts = np.bincount(owner[owner >= 0], minlength=g)
            order = np.argsort(values[:, gt], kind="stable")
            free = [p for p in order if owner[p] < 0]
            shared = [p for p in order if owner[p] >= 0 and counts[owner[p]] > 1]
            owner[(free or shared)[0]] = gt
    else:
        logger.debug(f"simOTA: {n} proposals for {g} ground truths, some stay unmatched")

    pairs = [(int(p), int(owner[p])) for p in range(n) if owner[p] >= 0]
    return _result(pairs, n, g, values, "many_to_one")
