"""Rank statistics and normalization kernels.

Self-contained on purpose: every number here is cross-checked against
brute-force oracles in the test suite, so the implementations stay small
and auditable. All tests are two-sided. Standard deviations are population
(divide by N) throughout.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConstantInput, DegenerateLabels, InsufficientData, LengthMismatch

# At or below this pooled size the U distribution is enumerated exactly.
EXACT_LIMIT = 12


def rankdata(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties assigned the average of their rank block."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError("rankdata expects a 1-d sequence")
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size, dtype=float)
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        # Positions i..j (0-based) share the average of ranks i+1..j+1.
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def _as_float_array(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-d")
    return arr


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation. Needs n >= 3 and non-constant inputs."""
    xa = _as_float_array(x, "x")
    ya = _as_float_array(y, "y")
    if xa.size != ya.size:
        raise LengthMismatch(f"pearson: {xa.size} vs {ya.size} observations")
    if xa.size < 3:
        raise InsufficientData(f"pearson needs at least 3 pairs, got {xa.size}")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    sx = math.sqrt(float(xc @ xc))
    sy = math.sqrt(float(yc @ yc))
    if sx == 0.0:
        raise ConstantInput("pearson: x is constant")
    if sy == 0.0:
        raise ConstantInput("pearson: y is constant")
    return float(xc @ yc) / (sx * sy)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman correlation: Pearson on average ranks."""
    xa = _as_float_array(x, "x")
    ya = _as_float_array(y, "y")
    if xa.size != ya.size:
        raise LengthMismatch(f"spearman: {xa.size} vs {ya.size} observations")
    return pearson(rankdata(xa), rankdata(ya))


class UMethod(enum.Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal"


@dataclass(frozen=True)
class UTestResult:
    u1: float
    z: float
    p_two_sided: float
    method: UMethod
    n1: int
    n2: int


def _tie_counts(pooled: np.ndarray) -> list[int]:
    _, counts = np.unique(pooled, return_counts=True)
    return [int(c) for c in counts if c > 1]


def _normal_two_sided_p(u1: float, n1: int, n2: int, pooled: np.ndarray) -> tuple[float, float]:
    """Tie-corrected normal approximation with a 0.5 continuity correction."""
    n = n1 + n2
    mu = n1 * n2 / 2.0
    tie_term = sum(t**3 - t for t in _tie_counts(pooled))
    var = (n1 * n2 / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0.0:
        # Every pooled value identical: U is deterministic.
        return 0.0, 1.0
    diff = u1 - mu
    adj = max(abs(diff) - 0.5, 0.0)
    z = math.copysign(adj, diff) / math.sqrt(var) if diff != 0.0 else 0.0
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return z, min(p, 1.0)


def _exact_two_sided_p(ranks: np.ndarray, n1: int) -> float:
    """Enumerate every assignment of n1 pooled ranks to group one.

    Ranks are half-integers, so rank sums and comparisons are float-exact;
    the p-value is a ratio of integer counts.
    """
    n = ranks.size
    base = n1 * (n1 + 1) / 2.0
    u_obs = float(ranks[:n1].sum()) - base
    rank_tuple = tuple(float(r) for r in ranks)
    at_or_below = 0
    at_or_above = 0
    total = 0
    for combo in itertools.combinations(range(n), n1):
        u = sum(rank_tuple[i] for i in combo) - base
        total += 1
        if u <= u_obs:
            at_or_below += 1
        if u >= u_obs:
            at_or_above += 1
    p = 2.0 * min(at_or_below, at_or_above) / total
    return min(p, 1.0)


def mann_whitney_u(
    a: Sequence[float],
    b: Sequence[float],
    method: Optional[UMethod] = None,
) -> UTestResult:
    """Two-sided Mann-Whitney U via average ranks.

    Exact when n1 + n2 <= EXACT_LIMIT (or forced), else the tie-corrected
    normal approximation. U1 counts pairs where a beats b, ties half.
    """
    aa = _as_float_array(a, "a")
    ba = _as_float_array(b, "b")
    n1, n2 = aa.size, ba.size
    if n1 == 0 or n2 == 0:
        raise InsufficientData("mann_whitney_u: both groups must be non-empty")
    pooled = np.concatenate([aa, ba])
    ranks = rankdata(pooled)
    u1 = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    z, p_normal = _normal_two_sided_p(u1, n1, n2, pooled)
    if method is None:
        method = UMethod.EXACT if n1 + n2 <= EXACT_LIMIT else UMethod.NORMAL_APPROX
    if method is UMethod.EXACT:
        p = _exact_two_sided_p(ranks, n1)
    else:
        p = p_normal
    # Two-sided p lives in (0, 1]: the observed table always counts itself.
    p = min(max(p, math.ulp(0.0)), 1.0)
    return UTestResult(u1=u1, z=z, p_two_sided=p, method=method, n1=n1, n2=n2)


def zscore(values: Sequence[float]) -> tuple[np.ndarray, bool]:
    """Population z-scores. Constant input yields zeros and a True flag.

    Constant means max == min: the computed sd of n identical values can
    land a few ulps above zero (the mean of n copies of v need not
    round-trip to v), which would otherwise standardize pure rounding
    noise into full-sized z-scores.
    """
    arr = _as_float_array(values, "values")
    if arr.size == 0:
        raise InsufficientData("zscore: empty input")
    if arr.max() == arr.min():
        return np.zeros_like(arr), True
    sd = float(arr.std())
    if sd == 0.0:
        return np.zeros_like(arr), True
    return (arr - arr.mean()) / sd, False


def auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Rank-based AUC: P(score_pos > score_neg) with ties counting half.

    Computed from the rank-sum form, so auc(s, l) + auc(s, ~l) == 1 exactly.
    """
    sa = _as_float_array(scores, "scores")
    la = np.asarray(labels, dtype=bool)
    if la.ndim != 1 or la.size != sa.size:
        raise LengthMismatch(f"auc: {sa.size} scores vs {la.size} labels")
    n1 = int(la.sum())
    n2 = la.size - n1
    if n1 == 0 or n2 == 0:
        raise DegenerateLabels("auc: labels contain a single class")
    ranks = rankdata(sa)
    u1 = float(ranks[la].sum()) - n1 * (n1 + 1) / 2.0
    return u1 / (n1 * n2)
