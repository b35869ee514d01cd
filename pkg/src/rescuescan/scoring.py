"""Variant scoring against a logits matrix, plus the set-level analyses.

A variant's raw score is the log-probability gap between its mutant and
wild-type residue at its position, read from one unmasked pass over the
wild-type sequence. Normalized scores are population z-scores over
whatever set was scored together.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import (
    ClinicalSignificance,
    ProteinRecord,
    SequenceRecord,
    VariantRecord,
    aa_index,
)
from .errors import (
    ConstantInput,
    InsufficientData,
    PositionOutOfRange,
    ReferenceMismatch,
)
from .parsers import FrequencyTable
from .scorers import LogitsMatrix, Scorer, fetch_logits
from .stats import UTestResult, mann_whitney_u, pearson, spearman, zscore

logger = logging.getLogger(__name__)

DEFAULT_BIN_EDGES = (1e-5, 1e-4, 1e-3, 1e-2)
ABSENT_BIN = "absent"


def wt_marginal(logits: LogitsMatrix, position: int, wt: str, mut: str) -> float:
    """log p(mut) - log p(wt) at a 1-based position of the scored sequence.

    The stated wild type must match the sequence the logits came from.
    A synonymous substitution scores exactly 0.0.
    """
    if not (1 <= position <= logits.length):
        raise PositionOutOfRange(
            f"position {position} outside 1..{logits.length} for {logits.sequence_id!r}"
        )
    found = logits.source_sequence[position - 1]
    if found != wt:
        raise ReferenceMismatch(
            f"{logits.sequence_id!r} position {position}: sequence has {found}, not {wt}"
        )
    row = logits.logp[position - 1]
    return float(row[aa_index(mut)] - row[aa_index(wt)])


@dataclass(frozen=True)
class ScoredVariant:
    variant: VariantRecord
    raw_score: float
    normalized_score: float
    scorer_id: str


def _raw_scores(
    scorer: Scorer,
    protein: ProteinRecord,
    variants: Sequence[VariantRecord],
    cache_dir,
) -> list[float]:
    if protein.over_length_warning:
        logger.warning(
            "protein %s has %d residues; single-pass scorers may truncate",
            protein.id,
            protein.length,
        )
    record = SequenceRecord(id=protein.id, sequence=protein.sequence)
    logits = fetch_logits(scorer, record, cache_dir)
    return [wt_marginal(logits, v.position, v.wt, v.mut) for v in variants]


def _attach_normalized(
    scorer_id: str,
    variants: Sequence[VariantRecord],
    raw: Sequence[float],
) -> list[ScoredVariant]:
    normalized, constant = zscore(raw)
    if constant:
        logger.warning("all raw scores identical under %s; normalized scores set to 0", scorer_id)
    return [
        ScoredVariant(variant=v, raw_score=float(r), normalized_score=float(n), scorer_id=scorer_id)
        for v, r, n in zip(variants, raw, normalized)
    ]


def score_variant_set(
    scorer: Scorer,
    protein: ProteinRecord,
    variants: Sequence[VariantRecord],
    cache_dir=None,
) -> list[ScoredVariant]:
    """Score one protein's variants; normalized scores are z over this set."""
    if not variants:
        raise ValueError("no variants to score")
    raw = _raw_scores(scorer, protein, variants, cache_dir)
    return _attach_normalized(scorer.scorer_id, list(variants), raw)


def score_across_proteins(
    scorer: Scorer,
    items: Sequence[tuple[ProteinRecord, Sequence[VariantRecord]]],
    cache_dir=None,
    threads: int = 1,
) -> list[ScoredVariant]:
    """Score several proteins' variants and z-normalize across the union.

    Output order is the input order: proteins as given, variants as given
    inside each protein. Parallelism never changes the result.
    """
    items = [(p, list(vs)) for p, vs in items]
    if not items or all(not vs for _, vs in items):
        raise ValueError("no variants to score")
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            raw_per_protein = list(
                pool.map(lambda it: _raw_scores(scorer, it[0], it[1], cache_dir), items)
            )
    else:
        raw_per_protein = [_raw_scores(scorer, p, vs, cache_dir) for p, vs in items]
    variants = [v for _, vs in items for v in vs]
    raw = [r for rs in raw_per_protein for r in rs]
    return _attach_normalized(scorer.scorer_id, variants, raw)


# ---------------------------------------------------------------------------
# Frequency stratification


def _edge_text(edge: float) -> str:
    return format(edge, "g")


def frequency_bin_labels(edges: Sequence[float] = DEFAULT_BIN_EDGES) -> tuple[str, ...]:
    """Bin names: 'absent', then left-closed intervals over [0, 1]."""
    bounds = ["0", *(_edge_text(e) for e in edges), "1"]
    labels = [ABSENT_BIN]
    for i in range(len(bounds) - 1):
        closer = "]" if i == len(bounds) - 2 else ")"
        labels.append(f"[{bounds[i]},{bounds[i + 1]}{closer}")
    return tuple(labels)


def _validate_edges(edges: Sequence[float]) -> tuple[float, ...]:
    edges = tuple(float(e) for e in edges)
    if not edges:
        raise ValueError("at least one bin edge is required")
    if list(edges) != sorted(set(edges)):
        raise ValueError("bin edges must be strictly increasing")
    if edges[0] <= 0.0 or edges[-1] >= 1.0:
        raise ValueError("bin edges must lie strictly inside (0, 1)")
    return edges


def frequency_bin(af: Optional[float], edges: Sequence[float] = DEFAULT_BIN_EDGES) -> str:
    """The label of the bin an allele frequency falls in; None means absent."""
    edges = _validate_edges(edges)
    labels = frequency_bin_labels(edges)
    if af is None:
        return ABSENT_BIN
    idx = 0
    while idx < len(edges) and af >= edges[idx]:
        idx += 1
    return labels[idx + 1]


@dataclass(frozen=True)
class StratumCell:
    significance: ClinicalSignificance
    bin_label: str
    count: int
    mean: Optional[float]
    median: Optional[float]


@dataclass(frozen=True)
class FrequencyStrata:
    """Scored variants grouped by (frequency bin, clinical significance)."""

    bin_labels: tuple[str, ...]
    cells: dict[tuple[str, ClinicalSignificance], tuple[ScoredVariant, ...]]

    def members(self, bin_label: str, significance: ClinicalSignificance) -> tuple[ScoredVariant, ...]:
        return self.cells.get((bin_label, significance), ())

    def scores(self, bin_label: str, significance: ClinicalSignificance) -> list[float]:
        return [sv.normalized_score for sv in self.members(bin_label, significance)]

    def summary(self) -> list[StratumCell]:
        out = []
        for sig in ClinicalSignificance:
            for label in self.bin_labels:
                members = self.members(label, sig)
                values = [sv.normalized_score for sv in members]
                out.append(
                    StratumCell(
                        significance=sig,
                        bin_label=label,
                        count=len(values),
                        mean=float(np.mean(values)) if values else None,
                        median=float(np.median(values)) if values else None,
                    )
                )
        return out


def stratify_by_frequency(
    scored: Sequence[ScoredVariant],
    frequencies: Optional[FrequencyTable] = None,
    edges: Sequence[float] = DEFAULT_BIN_EDGES,
) -> FrequencyStrata:
    """Group scored variants into frequency bins within each significance.

    Frequency comes from the table when given, else from the variant's own
    annotation; variants with neither land in the 'absent' bin.
    """
    edges = _validate_edges(edges)
    labels = frequency_bin_labels(edges)
    cells: dict[tuple[str, ClinicalSignificance], list[ScoredVariant]] = {}
    for sv in scored:
        af = None
        if frequencies is not None:
            af = frequencies.lookup(sv.variant)
        if af is None:
            af = sv.variant.allele_frequency
        label = frequency_bin(af, edges)
        cells.setdefault((label, sv.variant.significance), []).append(sv)
    frozen = {key: tuple(members) for key, members in cells.items()}
    return FrequencyStrata(bin_labels=labels, cells=frozen)


# ---------------------------------------------------------------------------
# Group comparisons


ALL_BIN = "all"


@dataclass(frozen=True)
class GroupComparison:
    bin_label: str
    n_pathogenic: int
    n_benign: int
    mean_pathogenic: Optional[float]
    mean_benign: Optional[float]
    result: Optional[UTestResult]
    note: str = ""


def _compare_cell(bin_label: str, path_scores: list[float], benign_scores: list[float]) -> GroupComparison:
    mean_p = float(np.mean(path_scores)) if path_scores else None
    mean_b = float(np.mean(benign_scores)) if benign_scores else None
    if not path_scores or not benign_scores:
        return GroupComparison(
            bin_label=bin_label,
            n_pathogenic=len(path_scores),
            n_benign=len(benign_scores),
            mean_pathogenic=mean_p,
            mean_benign=mean_b,
            result=None,
            note="skipped: empty group",
        )
    return GroupComparison(
        bin_label=bin_label,
        n_pathogenic=len(path_scores),
        n_benign=len(benign_scores),
        mean_pathogenic=mean_p,
        mean_benign=mean_b,
        result=mann_whitney_u(path_scores, benign_scores),
    )


def compare_significance_groups(
    scored: Sequence[ScoredVariant],
    strata: Optional[FrequencyStrata] = None,
) -> list[GroupComparison]:
    """P/LP vs B/LB score separation, overall and per frequency bin.

    Cells missing one side are reported with a note instead of a test.
    """
    path_all = [sv.normalized_score for sv in scored if sv.variant.significance is ClinicalSignificance.PATHOGENIC]
    benign_all = [sv.normalized_score for sv in scored if sv.variant.significance is ClinicalSignificance.BENIGN]
    out = [_compare_cell(ALL_BIN, path_all, benign_all)]
    if strata is not None:
        for label in strata.bin_labels:
            out.append(
                _compare_cell(
                    label,
                    strata.scores(label, ClinicalSignificance.PATHOGENIC),
                    strata.scores(label, ClinicalSignificance.BENIGN),
                )
            )
    return out


# ---------------------------------------------------------------------------
# Cross-scorer agreement


@dataclass(frozen=True)
class AgreementReport:
    n: int
    n_only_a: int
    n_only_b: int
    pearson_normalized: Optional[float]
    spearman_raw: Optional[float]
    per_significance_normalized: dict[ClinicalSignificance, float]
    per_significance_raw: dict[ClinicalSignificance, float]


def compare_scorers(
    scored_a: Sequence[ScoredVariant],
    scored_b: Sequence[ScoredVariant],
) -> AgreementReport:
    """Agreement between two scorers on the variants they share.

    Variants are matched by (gene, position, wt, mut); unmatched ones are
    dropped but counted. Pearson runs on normalized scores, Spearman on
    raw. A correlation against a constant scorer is undefined and reported
    as None rather than failing the run. Per-significance Pearson is
    reported where defined (three or more pairs, non-constant).
    """
    index_b = {sv.variant.key: sv for sv in scored_b}
    pairs = [(sa, index_b[sa.variant.key]) for sa in scored_a if sa.variant.key in index_b]
    n = len(pairs)
    if n < 3:
        raise InsufficientData(f"only {n} variants shared between scorers; need 3")
    norm_a = [a.normalized_score for a, _ in pairs]
    norm_b = [b.normalized_score for _, b in pairs]
    raw_a = [a.raw_score for a, _ in pairs]
    raw_b = [b.raw_score for _, b in pairs]
    try:
        pearson_normalized = pearson(norm_a, norm_b)
    except ConstantInput:
        pearson_normalized = None
    try:
        spearman_raw = spearman(raw_a, raw_b)
    except ConstantInput:
        spearman_raw = None
    per_norm: dict[ClinicalSignificance, float] = {}
    per_raw: dict[ClinicalSignificance, float] = {}
    for sig in ClinicalSignificance:
        subset = [(a, b) for a, b in pairs if a.variant.significance is sig]
        try:
            r_norm = pearson(
                [a.normalized_score for a, _ in subset],
                [b.normalized_score for _, b in subset],
            )
            r_raw = pearson(
                [a.raw_score for a, _ in subset],
                [b.raw_score for _, b in subset],
            )
        except (InsufficientData, ConstantInput):
            continue
        per_norm[sig] = r_norm
        per_raw[sig] = r_raw
    return AgreementReport(
        n=n,
        n_only_a=len(scored_a) - n,
        n_only_b=len(scored_b) - n,
        pearson_normalized=pearson_normalized,
        spearman_raw=spearman_raw,
        per_significance_normalized=per_norm,
        per_significance_raw=per_raw,
    )
