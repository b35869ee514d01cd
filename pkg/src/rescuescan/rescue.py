"""Exhaustive rescue scans: how every possible substitution scores on each
mutated background.

For a background variant, the protein is rebuilt with that substitution and
scored once; entry (j, b) of the secondary matrix is the log-probability
gap between residue b and the background sequence's own residue at j. The
per-position mean over the 19 non-self residues summarizes how tolerant a
position is to further change, and those summaries are z-scored into the
rescue matrix.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import AA_INDEX, NUM_AA, ProteinRecord, SequenceRecord, VariantRecord, apply_mutation
from .scorers import Scorer, fetch_logits
from .stats import zscore

logger = logging.getLogger(__name__)

Z_ACROSS_BACKGROUNDS = "background"
Z_ACROSS_POSITIONS = "position"
Z_AXES = (Z_ACROSS_BACKGROUNDS, Z_ACROSS_POSITIONS)


@dataclass(frozen=True, eq=False)
class SecondaryScoreMatrix:
    """L x 20 substitution scores on one mutated background sequence."""

    background: VariantRecord
    background_sequence: str
    scores: np.ndarray

    def __post_init__(self):
        self.scores.setflags(write=False)


def background_secondary_matrix(
    scorer: Scorer,
    protein: ProteinRecord,
    background: VariantRecord,
    cache_dir=None,
) -> SecondaryScoreMatrix:
    """Score every substitution against the background-mutated sequence.

    Entry (j, b) = log p(b at j) - log p(background residue at j), so the
    self column is exactly zero and the background position's reference is
    the mutant residue, not the wild type.
    """
    mutated = apply_mutation(protein.sequence, background)
    record = SequenceRecord(id=f"{protein.id}|{background.label}", sequence=mutated)
    logits = fetch_logits(scorer, record, cache_dir)
    ref = np.fromiter((AA_INDEX[c] for c in mutated), dtype=int, count=len(mutated))
    scores = logits.logp - logits.logp[np.arange(len(mutated)), ref][:, None]
    return SecondaryScoreMatrix(
        background=background, background_sequence=mutated, scores=scores
    )


def position_summary(matrix: SecondaryScoreMatrix) -> np.ndarray:
    """Mean substitution score per position over the 19 non-self residues.

    The self entry is exactly zero, so the row sum divided by 19 is that
    mean without ever indexing the self column.
    """
    return matrix.scores.sum(axis=1) / (NUM_AA - 1)


@dataclass(frozen=True, eq=False)
class RescueMatrix:
    """V backgrounds x L positions of summaries, plus their z-scores."""

    backgrounds: tuple[VariantRecord, ...]
    means: np.ndarray
    z: np.ndarray
    z_axis: str

    def __post_init__(self):
        self.means.setflags(write=False)
        self.z.setflags(write=False)

    @property
    def n_backgrounds(self) -> int:
        return self.means.shape[0]

    @property
    def length(self) -> int:
        return self.means.shape[1]

    @property
    def row_labels(self) -> tuple[str, ...]:
        return tuple(v.label for v in self.backgrounds)


def _zscore_matrix(means: np.ndarray, z_axis: str) -> np.ndarray:
    if z_axis == Z_ACROSS_BACKGROUNDS:
        cols = [zscore(means[:, j])[0] for j in range(means.shape[1])]
        return np.stack(cols, axis=1)
    if z_axis == Z_ACROSS_POSITIONS:
        rows = [zscore(means[v, :])[0] for v in range(means.shape[0])]
        return np.stack(rows, axis=0)
    raise ValueError(f"unknown z axis {z_axis!r}; expected one of {Z_AXES}")


def build_rescue_matrix(
    scorer: Scorer,
    protein: ProteinRecord,
    backgrounds: Sequence[VariantRecord],
    z_axis: str = Z_ACROSS_BACKGROUNDS,
    cache_dir=None,
    threads: int = 1,
) -> RescueMatrix:
    """One scorer call per background; rows keep the input order.

    z_axis="background" (default) z-scores each position column across the
    backgrounds; z_axis="position" z-scores each background row across
    positions. Constant slices z to zero. Duplicated backgrounds are scored
    independently and give identical rows, and the thread count never
    changes the result.
    """
    backgrounds = list(backgrounds)
    if not backgrounds:
        raise ValueError("empty background set: nothing to scan")
    if z_axis not in Z_AXES:
        raise ValueError(f"unknown z axis {z_axis!r}; expected one of {Z_AXES}")

    def one(background: VariantRecord) -> np.ndarray:
        matrix = background_secondary_matrix(scorer, protein, background, cache_dir)
        return position_summary(matrix)

    if threads > 1 and len(backgrounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            summaries = list(pool.map(one, backgrounds))
    else:
        summaries = [one(b) for b in backgrounds]
    means = np.stack(summaries, axis=0)
    if means.shape[0] == 1 and z_axis == Z_ACROSS_BACKGROUNDS:
        logger.warning("single background: every across-background z is 0")
    z = _zscore_matrix(means, z_axis)
    return RescueMatrix(
        backgrounds=tuple(backgrounds), means=means, z=z, z_axis=z_axis
    )
