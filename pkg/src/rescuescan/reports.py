"""Report writers for every CLI output, plus the scored-variants reader.

All floats are printed with 9 significant digits and -0.0 normalized, so
identical analyses produce identical bytes. Missing values print as NA.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .contacts import ConcordanceReport, ContactMap
from .cpd import CpdComparison, CpdStatus
from .domain import ClinicalSignificance, VariantRecord
from .errors import ParseError, RescuescanError
from .parsers import _as_text, _lines
from .rescue import RescueMatrix
from .scoring import AgreementReport, GroupComparison, ScoredVariant, StratumCell
from .stats import UTestResult

SCORED_COLUMNS = (
    "gene",
    "position",
    "wt",
    "mut",
    "significance",
    "allele_frequency",
    "raw_score",
    "normalized_score",
    "scorer_id",
)


def fmt(value: Optional[float]) -> str:
    """9-significant-digit float text; None becomes NA, -0.0 becomes 0."""
    if value is None:
        return "NA"
    value = float(value)
    if value == 0.0:
        value = 0.0
    return format(value, ".9g")


def _bool_text(flag: bool) -> str:
    return "1" if flag else "0"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["\t".join(header)]
    lines.extend("\t".join(row) for row in rows)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Scored variants


def scored_variants_tsv(scored: Sequence[ScoredVariant]) -> str:
    rows = []
    for sv in scored:
        v = sv.variant
        rows.append(
            (
                v.gene_symbol,
                str(v.position),
                v.wt,
                v.mut,
                v.significance.value,
                fmt(v.allele_frequency),
                fmt(sv.raw_score),
                fmt(sv.normalized_score),
                sv.scorer_id,
            )
        )
    return _table(SCORED_COLUMNS, rows)


def read_scored_variants(data) -> list[ScoredVariant]:
    """Parse a scored_variants.tsv back into records."""
    text = _as_text(data)
    lines = _lines(text)
    if tuple(lines[0].split("\t")) != SCORED_COLUMNS:
        raise ParseError(f"unexpected scored-variants header: {lines[0]!r}", line=1)
    out: list[ScoredVariant] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != len(SCORED_COLUMNS):
            raise ParseError(
                f"expected {len(SCORED_COLUMNS)} fields, got {len(fields)}", line=lineno
            )
        gene, pos_s, wt, mut, sig_s, af_s, raw_s, norm_s, scorer_id = fields
        try:
            variant = VariantRecord(
                gene_symbol=gene,
                position=int(pos_s),
                wt=wt,
                mut=mut,
                significance=ClinicalSignificance.from_label(sig_s),
                allele_frequency=None if af_s == "NA" else float(af_s),
            )
            out.append(
                ScoredVariant(
                    variant=variant,
                    raw_score=float(raw_s),
                    normalized_score=float(norm_s),
                    scorer_id=scorer_id,
                )
            )
        except (ValueError, RescuescanError) as exc:
            raise ParseError(str(exc), line=lineno) from None
    return out


# ---------------------------------------------------------------------------
# Stratification and group tests


def stratified_tsv(blocks: Sequence[tuple[str, Sequence[StratumCell]]]) -> str:
    header = ("scorer_id", "significance", "bin", "n", "mean_normalized", "median_normalized")
    rows = []
    for scorer_id, cells in blocks:
        for cell in cells:
            rows.append(
                (
                    scorer_id,
                    cell.significance.value,
                    cell.bin_label,
                    str(cell.count),
                    fmt(cell.mean),
                    fmt(cell.median),
                )
            )
    return _table(header, rows)


def _u_fields(result: Optional[UTestResult]) -> tuple[str, str, str, str]:
    if result is None:
        return ("NA", "NA", "NA", "NA")
    return (fmt(result.u1), fmt(result.z), fmt(result.p_two_sided), result.method.value)


def group_tests_tsv(blocks: Sequence[tuple[str, Sequence[GroupComparison]]]) -> str:
    header = (
        "scorer_id",
        "bin",
        "n_pathogenic",
        "n_benign",
        "mean_pathogenic",
        "mean_benign",
        "u",
        "z",
        "p",
        "method",
        "note",
    )
    rows = []
    for scorer_id, comparisons in blocks:
        for comparison in comparisons:
            rows.append(
                (
                    scorer_id,
                    comparison.bin_label,
                    str(comparison.n_pathogenic),
                    str(comparison.n_benign),
                    fmt(comparison.mean_pathogenic),
                    fmt(comparison.mean_benign),
                    *_u_fields(comparison.result),
                    comparison.note,
                )
            )
    return _table(header, rows)


# ---------------------------------------------------------------------------
# Agreement


def agreement_tsv(report: AgreementReport, scorer_a: str, scorer_b: str) -> str:
    rows = [
        ("scorer_a", scorer_a),
        ("scorer_b", scorer_b),
        ("n_matched", str(report.n)),
        ("n_only_a", str(report.n_only_a)),
        ("n_only_b", str(report.n_only_b)),
        ("pearson_normalized", fmt(report.pearson_normalized)),
        ("spearman_raw", fmt(report.spearman_raw)),
    ]
    for sig in ClinicalSignificance:
        r_norm = report.per_significance_normalized.get(sig)
        r_raw = report.per_significance_raw.get(sig)
        rows.append((f"pearson_normalized[{sig.value}]", fmt(r_norm)))
        rows.append((f"pearson_raw[{sig.value}]", fmt(r_raw)))
    return _table(("metric", "value"), rows)


# ---------------------------------------------------------------------------
# Rescue matrices


def rescue_matrix_tsv(matrix: RescueMatrix, which: str = "means") -> str:
    if which == "means":
        values = matrix.means
    elif which == "z":
        values = matrix.z
    else:
        raise ValueError(f"unknown matrix selector {which!r}")
    header = ("background", *(str(j) for j in range(1, matrix.length + 1)))
    rows = []
    for label, row in zip(matrix.row_labels, values):
        rows.append((label, *(fmt(v) for v in row)))
    return _table(header, rows)


# ---------------------------------------------------------------------------
# Contacts


def contact_map_tsv(cmap: ContactMap) -> str:
    header = ("pos", *(str(j) for j in range(1, cmap.size + 1)))
    rows = []
    for i in range(cmap.size):
        cells = []
        for j in range(cmap.size):
            if not (cmap.valid[i] and cmap.valid[j]):
                cells.append("NA")
            else:
                cells.append(_bool_text(bool(cmap.contacts[i, j])))
        rows.append((str(i + 1), *cells))
    return _table(header, rows)


def concordance_tsv(report: ConcordanceReport) -> str:
    header = (
        "auc",
        "u",
        "z",
        "p",
        "method",
        "n_pairs",
        "n_contact",
        "n_noncontact",
        "min_separation",
        "threshold",
    )
    row = (
        fmt(report.auc),
        *_u_fields(report.u_test),
        str(report.n_pairs),
        str(report.n_contact),
        str(report.n_noncontact),
        str(report.min_separation),
        fmt(report.threshold),
    )
    return _table(header, [row])


# ---------------------------------------------------------------------------
# CPD


def cpd_status_tsv(statuses: Sequence[CpdStatus]) -> str:
    header = (
        "gene",
        "position",
        "wt",
        "mut",
        "is_cpd",
        "cpd_plus1",
        "cpd_plus2",
        "supporting_species",
    )
    rows = []
    for status in statuses:
        v = status.variant
        rows.append(
            (
                v.gene_symbol,
                str(v.position),
                v.wt,
                v.mut,
                _bool_text(status.is_cpd),
                _bool_text(status.window_conserved.get(1, False)),
                _bool_text(status.window_conserved.get(2, False)),
                ",".join(status.supporting_species),
            )
        )
    return _table(header, rows)


def cpd_tests_tsv(blocks: Sequence[tuple[str, int, Optional[CpdComparison], str]]) -> str:
    """Rows of (scorer_id, window, comparison-or-None, note)."""
    header = (
        "scorer_id",
        "window",
        "n_cpd",
        "n_non_cpd",
        "mean_cpd",
        "mean_non_cpd",
        "u",
        "z",
        "p",
        "method",
        "note",
    )
    rows = []
    for scorer_id, window, comparison, note in blocks:
        if comparison is None:
            rows.append((scorer_id, str(window), "NA", "NA", "NA", "NA", "NA", "NA", "NA", "NA", note))
        else:
            rows.append(
                (
                    scorer_id,
                    str(window),
                    str(comparison.n_cpd),
                    str(comparison.n_non_cpd),
                    fmt(comparison.mean_cpd),
                    fmt(comparison.mean_non_cpd),
                    *_u_fields(comparison.result),
                    note,
                )
            )
    return _table(header, rows)
