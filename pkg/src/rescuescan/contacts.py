"""Residue contact maps from CA traces and their concordance with rescue z.

A contact is a CA-CA Euclidean distance at or under the threshold.
Residues missing from the trace are invalid and excluded from every
downstream statistic rather than treated as non-contacts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabels, InsufficientData, LengthMismatch, TraceOutOfRange
from .parsers import CalphaTrace
from .rescue import RescueMatrix
from .stats import UTestResult, auc, mann_whitney_u

DEFAULT_CONTACT_THRESHOLD = 10.0
DEFAULT_MIN_SEPARATION = 6


@dataclass(frozen=True, eq=False)
class ContactMap:
    """Symmetric L x L contact booleans plus a per-residue validity mask."""

    contacts: np.ndarray
    valid: np.ndarray
    threshold: float

    def __post_init__(self):
        self.contacts.setflags(write=False)
        self.valid.setflags(write=False)

    @property
    def size(self) -> int:
        return self.contacts.shape[0]


def contact_map(trace: CalphaTrace, length: int, threshold: float = DEFAULT_CONTACT_THRESHOLD) -> ContactMap:
    """Build the contact map for a sequence of `length` residues.

    The threshold is inclusive: a pair at exactly the threshold distance is
    a contact. Distances are computed once and mirrored, so the map is
    symmetric by construction; diagonal entries of valid residues are true.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    numbers = np.array([e.residue_number for e in trace.entries], dtype=int)
    if numbers.min() < 1 or numbers.max() > length:
        bad = numbers[(numbers < 1) | (numbers > length)][0]
        raise TraceOutOfRange(f"residue number {bad} outside 1..{length}")
    coords = np.array([(e.x, e.y, e.z) for e in trace.entries], dtype=float)
    diff = coords[:, None, :] - coords[None, :, :]
    dist2 = (diff * diff).sum(axis=2)
    within = dist2 <= threshold * threshold
    valid = np.zeros(length, dtype=bool)
    valid[numbers - 1] = True
    contacts = np.zeros((length, length), dtype=bool)
    contacts[np.ix_(numbers - 1, numbers - 1)] = within
    return ContactMap(contacts=contacts, valid=valid, threshold=float(threshold))


@dataclass(frozen=True)
class ConcordanceReport:
    auc: float
    u_test: UTestResult
    n_pairs: int
    n_contact: int
    n_noncontact: int
    min_separation: int
    threshold: float


def concordance(
    rescue: RescueMatrix,
    cmap: ContactMap,
    min_separation: int = DEFAULT_MIN_SEPARATION,
    signed: bool = False,
) -> ConcordanceReport:
    """Do strong rescue responses cluster at the background's contacts?

    Pairs one (background, target position) score with the contact bit
    between the background's own position and the target. Pairs need both
    residues valid and a sequence separation of at least min_separation.
    Scores default to |z| so both directions of response count; signed=True
    keeps the sign. AUC is rank-based (ties 0.5) and the U test two-sided.
    """
    if rescue.length != cmap.size:
        raise LengthMismatch(
            f"rescue matrix covers {rescue.length} positions, contact map {cmap.size}"
        )
    if min_separation < 1:
        raise ValueError(f"min_separation must be >= 1, got {min_separation}")
    scores: list[float] = []
    labels: list[bool] = []
    for v, background in enumerate(rescue.backgrounds):
        p = background.position
        if not cmap.valid[p - 1]:
            continue
        for j in range(1, cmap.size + 1):
            if abs(p - j) < min_separation or not cmap.valid[j - 1]:
                continue
            value = rescue.z[v, j - 1]
            scores.append(float(value) if signed else abs(float(value)))
            labels.append(bool(cmap.contacts[p - 1, j - 1]))
    if not scores:
        raise InsufficientData("no scoreable pairs: nothing valid beyond the separation cutoff")
    n_contact = sum(labels)
    n_noncontact = len(labels) - n_contact
    if n_contact == 0 or n_noncontact == 0:
        raise DegenerateLabels("all pairs fall in one contact class")
    contact_scores = [s for s, l in zip(scores, labels) if l]
    noncontact_scores = [s for s, l in zip(scores, labels) if not l]
    return ConcordanceReport(
        auc=auc(scores, labels),
        u_test=mann_whitney_u(contact_scores, noncontact_scores),
        n_pairs=len(scores),
        n_contact=n_contact,
        n_noncontact=n_noncontact,
        min_separation=min_separation,
        threshold=cmap.threshold,
    )
