"""Readers for the four input formats and exact-round-trip TSV writers.

All parsers take text (bytes are decoded as ASCII), report 1-based line
numbers in errors, and accept LF or CRLF endings.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

from .domain import (
    ALPHABET,
    AA_INDEX,
    GAP,
    UNKNOWN,
    ClinicalSignificance,
    SequenceRecord,
    VariantRecord,
)
from .errors import (
    AlignmentWidthMismatch,
    EmptyTrace,
    MissingReference,
    ParseError,
)

logger = logging.getLogger(__name__)

VARIANT_COLUMNS = ("gene", "position", "wt", "mut", "significance", "submission_count")
FREQUENCY_COLUMNS = ("gene", "position", "wt", "mut", "allele_frequency")

_SEQUENCE_LETTERS = frozenset(ALPHABET)
_ALIGNED_LETTERS = frozenset(ALPHABET + GAP + UNKNOWN)


def _as_text(data: Union[str, bytes]) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not ASCII: {exc}") from None
    return data


def _lines(text: str) -> list[str]:
    return text.replace("\r\n", "\n").split("\n")


# ---------------------------------------------------------------------------
# FASTA


def parse_fasta(
    data: Union[str, bytes],
    allowed: frozenset = _SEQUENCE_LETTERS,
) -> list[SequenceRecord]:
    """Parse multi-record FASTA. Residues are uppercased before validation.

    Record ids are the header token up to the first whitespace. Duplicate
    ids, empty records, and letters outside `allowed` are errors.
    """
    text = _as_text(data)
    records: list[SequenceRecord] = []
    seen: set[str] = set()
    current_id: Optional[str] = None
    current_line = 0
    parts: list[str] = []

    def flush():
        if current_id is None:
            return
        sequence = "".join(parts)
        if not sequence:
            raise ParseError(f"record {current_id!r} has no sequence", line=current_line)
        records.append(SequenceRecord(id=current_id, sequence=sequence))

    for lineno, raw in enumerate(_lines(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            flush()
            header = line[1:].strip()
            ident = header.split()[0] if header else ""
            if not ident:
                raise ParseError("record id is empty", line=lineno)
            if ident in seen:
                raise ParseError(f"duplicate record id {ident!r}", line=lineno)
            seen.add(ident)
            current_id = ident
            current_line = lineno
            parts = []
            continue
        if current_id is None:
            raise ParseError("sequence data before any '>' header", line=lineno)
        chunk = line.upper()
        for letter in chunk:
            if letter not in allowed:
                raise ParseError(
                    f"record {current_id!r}: invalid letter {letter!r}", line=lineno
                )
        parts.append(chunk)
    flush()
    if not records:
        raise ParseError("no FASTA records found")
    return records


def format_fasta(records: Sequence[SequenceRecord], width: int = 60) -> str:
    out: list[str] = []
    for rec in records:
        out.append(f">{rec.id}")
        seq = rec.sequence
        for start in range(0, len(seq), width):
            out.append(seq[start : start + width])
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Aligned FASTA


@dataclass(frozen=True)
class Alignment:
    """Equal-width aligned rows plus the id of the reference (human) row."""

    rows: tuple[tuple[str, str], ...]
    human_id: str

    @property
    def width(self) -> int:
        return len(self.rows[0][1])

    @property
    def row_ids(self) -> tuple[str, ...]:
        return tuple(ident for ident, _ in self.rows)

    @property
    def human_row(self) -> str:
        for ident, seq in self.rows:
            if ident == self.human_id:
                return seq
        raise MissingReference(f"reference row {self.human_id!r} not in alignment")

    def degapped_human(self) -> str:
        return self.human_row.replace(GAP, "")


def parse_msa(data: Union[str, bytes], human_id: str = "human") -> Alignment:
    """Parse an aligned FASTA where rows may carry '-' gaps and 'X'."""
    records = parse_fasta(data, allowed=_ALIGNED_LETTERS)
    width = len(records[0].sequence)
    for rec in records:
        if len(rec.sequence) != width:
            raise AlignmentWidthMismatch(
                f"row {rec.id!r} has width {len(rec.sequence)}, expected {width}"
            )
    ids = {rec.id for rec in records}
    if human_id not in ids:
        raise MissingReference(f"reference row {human_id!r} not in alignment")
    return Alignment(rows=tuple((r.id, r.sequence) for r in records), human_id=human_id)


# ---------------------------------------------------------------------------
# Variant table


def _split_row(raw: str, n_cols: int, lineno: int) -> list[str]:
    fields = raw.split("\t")
    if len(fields) != n_cols:
        raise ParseError(f"expected {n_cols} tab-separated fields, got {len(fields)}", line=lineno)
    return fields


def _check_header(raw: str, expected: tuple, lineno: int) -> None:
    fields = tuple(raw.split("\t"))
    if fields != expected:
        raise ParseError(
            f"header must be {chr(9).join(expected)!r}, got {raw!r}", line=lineno
        )


def _parse_position(text: str, lineno: int) -> int:
    try:
        pos = int(text)
    except ValueError:
        raise ParseError(f"position is not an integer: {text!r}", line=lineno) from None
    if pos < 1:
        raise ParseError(f"position must be >= 1, got {pos}", line=lineno)
    return pos


def _parse_residue(text: str, column: str, lineno: int) -> str:
    if len(text) != 1 or text not in AA_INDEX:
        raise ParseError(f"{column} is not a canonical residue: {text!r}", line=lineno)
    return text


def parse_variant_table(data: Union[str, bytes]) -> list[VariantRecord]:
    """Parse the variant TSV and collapse rows sharing (gene, pos, wt, mut).

    Conflicting significance labels are resolved by submission count: the
    max-count rows win when unanimous, otherwise the record becomes VUS.
    The result is sorted by key, so row order never matters.
    """
    text = _as_text(data)
    lines = _lines(text)
    _check_header(lines[0], VARIANT_COLUMNS, 1)
    groups: dict[tuple, list[tuple[ClinicalSignificance, int]]] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        gene, pos_s, wt_s, mut_s, sig_s, count_s = _split_row(raw, 6, lineno)
        if not gene:
            raise ParseError("gene is empty", line=lineno)
        pos = _parse_position(pos_s, lineno)
        wt = _parse_residue(wt_s, "wt", lineno)
        mut = _parse_residue(mut_s, "mut", lineno)
        if wt == mut:
            raise ParseError(f"wt and mut are identical: {wt}", line=lineno)
        try:
            sig = ClinicalSignificance.from_label(sig_s)
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        try:
            count = int(count_s)
        except ValueError:
            raise ParseError(f"submission_count is not an integer: {count_s!r}", line=lineno) from None
        if count < 0:
            raise ParseError(f"submission_count must be >= 0, got {count}", line=lineno)
        groups.setdefault((gene, pos, wt, mut), []).append((sig, count))

    out: list[VariantRecord] = []
    for key in sorted(groups):
        gene, pos, wt, mut = key
        entries = groups[key]
        top = max(count for _, count in entries)
        top_sigs = {sig for sig, count in entries if count == top}
        sig = top_sigs.pop() if len(top_sigs) == 1 else ClinicalSignificance.UNCERTAIN
        out.append(
            VariantRecord(
                gene_symbol=gene,
                position=pos,
                wt=wt,
                mut=mut,
                significance=sig,
                submission_count=top,
            )
        )
    return out


def format_variant_table(records: Sequence[VariantRecord]) -> str:
    lines = ["\t".join(VARIANT_COLUMNS)]
    for rec in records:
        lines.append(
            "\t".join(
                (
                    rec.gene_symbol,
                    str(rec.position),
                    rec.wt,
                    rec.mut,
                    rec.significance.value,
                    str(rec.submission_count),
                )
            )
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Frequency table


class FrequencyTable:
    """Lookup from (gene, position, wt, mut) to alternate allele frequency."""

    def __init__(self, entries: dict[tuple, float]):
        self._entries = dict(entries)

    def lookup(self, variant: VariantRecord) -> Optional[float]:
        return self._entries.get(variant.key)

    def get(self, key: tuple) -> Optional[float]:
        return self._entries.get(key)

    def items(self):
        return sorted(self._entries.items())

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: tuple) -> bool:
        return key in self._entries

    def __eq__(self, other) -> bool:
        return isinstance(other, FrequencyTable) and self._entries == other._entries


def parse_frequency_table(data: Union[str, bytes]) -> FrequencyTable:
    """Parse the allele-frequency TSV. Duplicate keys keep the max frequency."""
    text = _as_text(data)
    lines = _lines(text)
    _check_header(lines[0], FREQUENCY_COLUMNS, 1)
    entries: dict[tuple, float] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        gene, pos_s, wt_s, mut_s, af_s = _split_row(raw, 5, lineno)
        if not gene:
            raise ParseError("gene is empty", line=lineno)
        pos = _parse_position(pos_s, lineno)
        wt = _parse_residue(wt_s, "wt", lineno)
        mut = _parse_residue(mut_s, "mut", lineno)
        try:
            af = float(af_s)
        except ValueError:
            raise ParseError(f"allele_frequency is not a number: {af_s!r}", line=lineno) from None
        if not (0.0 <= af <= 1.0):
            raise ParseError(f"allele_frequency outside [0, 1]: {af_s}", line=lineno)
        key = (gene, pos, wt, mut)
        if key in entries:
            entries[key] = max(entries[key], af)
        else:
            entries[key] = af
    return FrequencyTable(entries)


def format_frequency_table(table: FrequencyTable) -> str:
    # repr() is the shortest exact round-trip form for a float.
    lines = ["\t".join(FREQUENCY_COLUMNS)]
    for (gene, pos, wt, mut), af in table.items():
        lines.append("\t".join((gene, str(pos), wt, mut, repr(af))))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# PDB CA trace


class ResidueCoord(NamedTuple):
    residue_number: int
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class CalphaTrace:
    """Ordered CA coordinates for one chain of one model."""

    chain: str
    entries: tuple[ResidueCoord, ...]

    def __post_init__(self):
        last = None
        for entry in self.entries:
            if last is not None and entry.residue_number <= last:
                raise ValueError("residue numbers must be strictly increasing")
            last = entry.residue_number

    def __len__(self) -> int:
        return len(self.entries)


def _pdb_float(line: str, start: int, end: int, what: str, lineno: int) -> float:
    text = line[start:end].strip()
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"malformed {what} field: {text!r}", line=lineno) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ParseError(f"{what} is not finite: {text!r}", line=lineno)
    return value


def parse_structure(data: Union[str, bytes], chain: str) -> CalphaTrace:
    """Extract the CA trace for one chain from the first model of a PDB file.

    Fixed-column format: atom name 13-16, chain 22, resSeq 23-26, x/y/z
    31-54 (1-based inclusive). The first CA seen for a residue number wins
    (alternate locations and insertion codes after it are dropped).
    """
    if len(chain) != 1:
        raise ValueError(f"chain id must be one character, got {chain!r}")
    text = _as_text(data)
    entries: list[ResidueCoord] = []
    seen_numbers: set[int] = set()
    last_number: Optional[int] = None
    models_seen = 0
    for lineno, line in enumerate(_lines(text), start=1):
        if line.startswith("MODEL"):
            models_seen += 1
            if models_seen > 1:
                break
            continue
        if not line.startswith("ATOM "):
            continue
        if len(line) < 54:
            raise ParseError("ATOM record shorter than 54 columns", line=lineno)
        if line[12:16].strip() != "CA":
            continue
        if line[21] != chain:
            continue
        res_text = line[22:26].strip()
        try:
            res_num = int(res_text)
        except ValueError:
            raise ParseError(f"malformed residue number: {res_text!r}", line=lineno) from None
        if res_num in seen_numbers:
            continue
        if last_number is not None and res_num < last_number:
            raise ParseError(
                f"residue numbers not increasing: {res_num} after {last_number}", line=lineno
            )
        x = _pdb_float(line, 30, 38, "x coordinate", lineno)
        y = _pdb_float(line, 38, 46, "y coordinate", lineno)
        z = _pdb_float(line, 46, 54, "z coordinate", lineno)
        entries.append(ResidueCoord(res_num, x, y, z))
        seen_numbers.add(res_num)
        last_number = res_num
    if not entries:
        raise EmptyTrace(f"no CA atoms for chain {chain!r}")
    return CalphaTrace(chain=chain, entries=tuple(entries))
