"""Compensated pathogenic deviations: pathogenic-in-human residues carried
as the normal state by another species.

A variant is CPD when at least one non-reference alignment row shows the
variant's mutant residue at the mapped column. Conservation windows around
the site sharpen the call: window k requires every existing neighbor
column within +-k to be identical and canonical across all rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .domain import AA_INDEX, GAP, VariantRecord
from .errors import EmptyGroup, LengthMismatch, PositionOutOfRange, ReferenceMismatch
from .parsers import Alignment
from .scoring import ScoredVariant
from .stats import UTestResult, mann_whitney_u

import logging

import numpy as np

logger = logging.getLogger(__name__)

MAX_WINDOW = 2


def map_alignment_columns(alignment: Alignment) -> dict[int, int]:
    """1-based reference positions to 1-based alignment columns.

    Position k maps to the column of the reference row's k-th non-gap
    character ('X' counts as a residue and keeps its position). An all-gap
    reference row maps nothing and is flagged, leaving every lookup against
    the map out of range.
    """
    mapping: dict[int, int] = {}
    pos = 0
    for col, letter in enumerate(alignment.human_row, start=1):
        if letter != GAP:
            pos += 1
            mapping[pos] = col
    if not mapping:
        logger.warning("reference row %r is all gaps; empty column map", alignment.human_id)
    return mapping


@dataclass(frozen=True)
class CpdStatus:
    variant: VariantRecord
    is_cpd: bool
    supporting_species: tuple[str, ...]
    window_conserved: dict[int, bool]


def _column_conserved(alignment: Alignment, col: int) -> bool:
    letters = {row[col - 1] for _, row in alignment.rows}
    if len(letters) != 1:
        return False
    return next(iter(letters)) in AA_INDEX


def detect_cpd(
    alignment: Alignment,
    variant: VariantRecord,
    max_window: int = MAX_WINDOW,
) -> CpdStatus:
    """CPD status for one variant against one alignment.

    The reference row must carry the variant's wild type at the mapped
    column. 'X' rows never support a call. Window flags are computed over
    neighbor positions that exist; a site at the terminus only has inward
    neighbors to satisfy.
    """
    mapping = map_alignment_columns(alignment)
    if variant.position not in mapping:
        raise PositionOutOfRange(
            f"{variant.label}: position {variant.position} outside 1..{len(mapping)}"
        )
    col = mapping[variant.position]
    human_letter = alignment.human_row[col - 1]
    if human_letter != variant.wt:
        raise ReferenceMismatch(
            f"{variant.label}: reference row has {human_letter} at position "
            f"{variant.position}, not {variant.wt}"
        )
    supporting = tuple(
        ident
        for ident, row in alignment.rows
        if ident != alignment.human_id and row[col - 1] == variant.mut
    )
    is_cpd = bool(supporting)
    length = len(mapping)
    window_conserved: dict[int, bool] = {}
    for k in range(1, max_window + 1):
        ok = is_cpd
        for offset in range(-k, k + 1):
            if not ok:
                break
            if offset == 0:
                continue
            neighbor = variant.position + offset
            if not (1 <= neighbor <= length):
                continue
            if not _column_conserved(alignment, mapping[neighbor]):
                ok = False
        window_conserved[k] = ok
    return CpdStatus(
        variant=variant,
        is_cpd=is_cpd,
        supporting_species=supporting,
        window_conserved=window_conserved,
    )


@dataclass(frozen=True)
class CpdComparison:
    window: int
    n_cpd: int
    n_non_cpd: int
    mean_cpd: float
    mean_non_cpd: float
    result: UTestResult


def cpd_score_comparison(
    scored: Sequence[ScoredVariant],
    statuses: Sequence[CpdStatus],
    window: int = 0,
) -> CpdComparison:
    """Normalized scores of CPD variants against non-CPD variants.

    window 0 takes every CPD call; window k keeps only CPD variants whose
    k-neighborhood is conserved. The non-CPD side is always the variants
    with no supporting species.
    """
    if window < 0 or window > MAX_WINDOW:
        raise ValueError(f"window must be in 0..{MAX_WINDOW}, got {window}")
    by_key = {status.variant.key: status for status in statuses}
    cpd_scores: list[float] = []
    non_cpd_scores: list[float] = []
    for sv in scored:
        status = by_key.get(sv.variant.key)
        if status is None:
            raise LengthMismatch(f"no CPD status for {sv.variant.label}")
        if status.is_cpd:
            if window == 0 or status.window_conserved.get(window, False):
                cpd_scores.append(sv.normalized_score)
        else:
            non_cpd_scores.append(sv.normalized_score)
    if not cpd_scores:
        raise EmptyGroup(f"no CPD variants at window {window}")
    if not non_cpd_scores:
        raise EmptyGroup("no non-CPD variants")
    return CpdComparison(
        window=window,
        n_cpd=len(cpd_scores),
        n_non_cpd=len(non_cpd_scores),
        mean_cpd=float(np.mean(cpd_scores)),
        mean_non_cpd=float(np.mean(non_cpd_scores)),
        result=mann_whitney_u(cpd_scores, non_cpd_scores),
    )
