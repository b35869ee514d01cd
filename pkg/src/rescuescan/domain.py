"""Core value types: the residue alphabet, sequence records, and variants.

Positions are 1-based everywhere a human reads or writes them; the only
0-based indices live inside array code.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

from .errors import (
    EmptySequence,
    NonCanonicalResidue,
    PositionOutOfRange,
    ReferenceMismatch,
)

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
AA_INDEX = {aa: i for i, aa in enumerate(ALPHABET)}
NUM_AA = len(ALPHABET)

# Sequences at or beyond this length get flagged; transformer scorers
# typically cannot take them in one pass.
LENGTH_WARNING_THRESHOLD = 1024

# Alignment rows may carry gaps and unknown residues on top of the alphabet.
GAP = "-"
UNKNOWN = "X"


def aa_index(letter: str) -> int:
    """Index of a canonical residue letter in the fixed alphabet order."""
    try:
        return AA_INDEX[letter]
    except KeyError:
        raise NonCanonicalResidue(f"not a canonical residue: {letter!r}") from None


def validate_sequence(sequence: str, context: str = "sequence") -> None:
    """Reject empty sequences and any letter outside the canonical alphabet."""
    if not sequence:
        raise EmptySequence(f"{context} is empty")
    for pos, letter in enumerate(sequence, start=1):
        if letter not in AA_INDEX:
            raise NonCanonicalResidue(
                f"{context} position {pos}: not a canonical residue: {letter!r}"
            )


class ClinicalSignificance(enum.Enum):
    PATHOGENIC = "P/LP"
    BENIGN = "B/LB"
    UNCERTAIN = "VUS"

    @classmethod
    def from_label(cls, label: str) -> "ClinicalSignificance":
        for member in cls:
            if member.value == label:
                return member
        raise ValueError(f"unknown significance label: {label!r}")


@dataclass(frozen=True)
class SequenceRecord:
    """An identifier plus a residue string, as read from FASTA."""

    id: str
    sequence: str


@dataclass(frozen=True)
class ProteinRecord:
    """A validated canonical protein sequence tied to a gene symbol."""

    id: str
    gene_symbol: str
    sequence: str

    def __post_init__(self):
        validate_sequence(self.sequence, context=f"protein {self.id!r}")

    @property
    def length(self) -> int:
        return len(self.sequence)

    @property
    def over_length_warning(self) -> bool:
        return self.length >= LENGTH_WARNING_THRESHOLD

    @classmethod
    def from_record(cls, record: SequenceRecord, gene_symbol: Optional[str] = None) -> "ProteinRecord":
        return cls(id=record.id, gene_symbol=gene_symbol or record.id, sequence=record.sequence)


@dataclass(frozen=True)
class VariantRecord:
    """A single amino-acid substitution with its clinical annotations."""

    gene_symbol: str
    position: int
    wt: str
    mut: str
    significance: ClinicalSignificance
    submission_count: int = 0
    allele_frequency: Optional[float] = None

    def __post_init__(self):
        if len(self.wt) != 1 or self.wt not in AA_INDEX:
            raise NonCanonicalResidue(f"wt residue not canonical: {self.wt!r}")
        if len(self.mut) != 1 or self.mut not in AA_INDEX:
            raise NonCanonicalResidue(f"mut residue not canonical: {self.mut!r}")
        if self.wt == self.mut:
            raise ValueError(f"wt and mut are identical: {self.wt}")
        if self.position < 1:
            raise PositionOutOfRange(f"position must be >= 1, got {self.position}")
        if self.submission_count < 0:
            raise ValueError(f"submission_count must be >= 0, got {self.submission_count}")
        if self.allele_frequency is not None and not (0.0 <= self.allele_frequency <= 1.0):
            raise ValueError(f"allele_frequency outside [0, 1]: {self.allele_frequency}")

    @property
    def key(self) -> tuple:
        """Identity for dedup and cross-table joins."""
        return (self.gene_symbol, self.position, self.wt, self.mut)

    @property
    def label(self) -> str:
        """Compact human-readable form, e.g. LDLR:101G>D."""
        return f"{self.gene_symbol}:{self.position}{self.wt}>{self.mut}"

    def reversed(self) -> "VariantRecord":
        """The same substitution read in the opposite direction."""
        return replace(self, wt=self.mut, mut=self.wt)


def verify_reference(sequence: str, variant: VariantRecord) -> None:
    """Check the variant's position and stated wild type against a sequence."""
    if not (1 <= variant.position <= len(sequence)):
        raise PositionOutOfRange(
            f"{variant.label}: position {variant.position} outside 1..{len(sequence)}"
        )
    found = sequence[variant.position - 1]
    if found != variant.wt:
        raise ReferenceMismatch(
            f"{variant.label}: sequence has {found} at position {variant.position}, not {variant.wt}"
        )


def apply_mutation(sequence: str, variant: VariantRecord) -> str:
    """Return the sequence with the variant's substitution applied."""
    verify_reference(sequence, variant)
    i = variant.position - 1
    return sequence[:i] + variant.mut + sequence[i + 1 :]
