"""Per-position log-probability matrices and the scorers that produce them.

Three scorer families share one interface: a uniform baseline, an
alignment-derived PSSM, and external processes spoken to through a
file-based request/response protocol. A content-addressed cache sits in
front of all of them.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import os
import subprocess
import tempfile
import threading
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .domain import (
    ALPHABET,
    AA_INDEX,
    GAP,
    NUM_AA,
    SequenceRecord,
    validate_sequence,
)
from .errors import (
    IncompleteResponse,
    LengthMismatch,
    ParseError,
    ReferenceMismatch,
    ScorerFailed,
)
from .parsers import Alignment, format_fasta

logger = logging.getLogger(__name__)

# Row-sum deviation from 1 (in probability space, before renormalization).
ROW_SUM_WARN = 1e-3
ROW_SUM_ERROR = 0.5

_ALPHABET_LINE = f"#alphabet {ALPHABET}"


def _format_float(x: float) -> str:
    if x == 0.0:
        x = 0.0  # normalize -0.0
    return format(float(x), ".9g")


@dataclass(frozen=True, eq=False)
class LogitsMatrix:
    """L x 20 natural-log probabilities over the canonical alphabet.

    Always renormalized at construction; rows exponentiate to 1 within
    1e-6 and no entry exceeds 0 by more than 1e-9. The array is read-only.
    """

    sequence_id: str
    source_sequence: str
    logp: np.ndarray

    def __post_init__(self):
        if self.logp.shape != (len(self.source_sequence), NUM_AA):
            raise LengthMismatch(
                f"logits shape {self.logp.shape} does not match "
                f"sequence length {len(self.source_sequence)}"
            )
        self.logp.setflags(write=False)

    @property
    def length(self) -> int:
        return len(self.source_sequence)

    def with_id(self, sequence_id: str) -> "LogitsMatrix":
        return replace(self, sequence_id=sequence_id)

    @classmethod
    def from_raw(
        cls,
        sequence_id: str,
        source_sequence: str,
        raw: np.ndarray,
        context: str = "logits",
    ) -> "LogitsMatrix":
        """Validate raw per-position log values and renormalize each row."""
        validate_sequence(source_sequence, context=f"{context} source sequence")
        arr = np.asarray(raw, dtype=float)
        if arr.shape != (len(source_sequence), NUM_AA):
            raise LengthMismatch(
                f"{context}: shape {arr.shape}, expected ({len(source_sequence)}, {NUM_AA})"
            )
        if not np.all(np.isfinite(arr)):
            raise ParseError(f"{context}: non-finite log-probability")
        row_sums = np.exp(arr).sum(axis=1)
        worst = float(np.max(np.abs(row_sums - 1.0)))
        if worst > ROW_SUM_ERROR:
            bad = int(np.argmax(np.abs(row_sums - 1.0)))
            raise ParseError(
                f"{context}: row {bad + 1} probability sum {row_sums[bad]:.6g} "
                f"deviates from 1 by more than {ROW_SUM_ERROR}"
            )
        if worst > ROW_SUM_WARN:
            logger.warning(
                "%s: worst row probability sum deviates from 1 by %.3g; renormalizing",
                context,
                worst,
            )
        # log-sum-exp per row, stabilized by the row max.
        high = arr.max(axis=1, keepdims=True)
        norm = high + np.log(np.exp(arr - high).sum(axis=1, keepdims=True))
        logp = arr - norm
        return cls(sequence_id=sequence_id, source_sequence=source_sequence, logp=logp)


# ---------------------------------------------------------------------------
# Response format


def format_response_block(matrix: LogitsMatrix) -> str:
    """One response block: #id, #alphabet, then one row per position."""
    lines = [f"#id {matrix.sequence_id}", _ALPHABET_LINE]
    for i, wt in enumerate(matrix.source_sequence):
        values = "\t".join(_format_float(v) for v in matrix.logp[i])
        lines.append(f"{i + 1}\t{wt}\t{values}")
    return "\n".join(lines) + "\n"


def format_response(matrices: Sequence[LogitsMatrix]) -> str:
    return "".join(format_response_block(m) for m in matrices)


def parse_response(data: Union[str, bytes]) -> dict[str, LogitsMatrix]:
    """Parse scorer response text into matrices keyed by sequence id.

    Rows must arrive in position order 1..L with no gaps; each block's
    matrix is renormalized on ingest.
    """
    if isinstance(data, bytes):
        data = data.decode("ascii")
    out: dict[str, LogitsMatrix] = {}
    current_id: Optional[str] = None
    saw_alphabet = False
    wt_letters: list[str] = []
    rows: list[list[float]] = []

    def flush():
        nonlocal current_id, saw_alphabet, wt_letters, rows
        if current_id is None:
            return
        if not saw_alphabet:
            raise ParseError(f"block {current_id!r} has no #alphabet line")
        if not rows:
            raise ParseError(f"block {current_id!r} has no positions")
        matrix = LogitsMatrix.from_raw(
            current_id,
            "".join(wt_letters),
            np.asarray(rows, dtype=float),
            context=f"response block {current_id!r}",
        )
        out[current_id] = matrix
        current_id = None
        saw_alphabet = False
        wt_letters = []
        rows = []

    for lineno, raw in enumerate(data.replace("\r\n", "\n").split("\n"), start=1):
        line = raw.rstrip()
        if not line:
            continue
        if line.startswith("#id "):
            flush()
            ident = line[4:].strip()
            if not ident:
                raise ParseError("empty sequence id", line=lineno)
            if ident in out:
                raise ParseError(f"duplicate response block {ident!r}", line=lineno)
            current_id = ident
            continue
        if line.startswith("#alphabet"):
            if current_id is None:
                raise ParseError("#alphabet before any #id", line=lineno)
            declared = line.split(None, 1)[1] if len(line.split(None, 1)) > 1 else ""
            if declared != ALPHABET:
                raise ParseError(f"unexpected alphabet {declared!r}", line=lineno)
            saw_alphabet = True
            continue
        if current_id is None:
            raise ParseError("data row before any #id", line=lineno)
        fields = line.split("\t")
        if len(fields) != 2 + NUM_AA:
            raise ParseError(
                f"expected {2 + NUM_AA} tab-separated fields, got {len(fields)}", line=lineno
            )
        try:
            position = int(fields[0])
        except ValueError:
            raise ParseError(f"malformed position {fields[0]!r}", line=lineno) from None
        if position != len(rows) + 1:
            raise ParseError(
                f"position {position} out of order, expected {len(rows) + 1}", line=lineno
            )
        wt = fields[1]
        if len(wt) != 1 or wt not in AA_INDEX:
            raise ParseError(f"wt residue not canonical: {wt!r}", line=lineno)
        try:
            values = [float(v) for v in fields[2:]]
        except ValueError:
            raise ParseError("malformed log-probability", line=lineno) from None
        wt_letters.append(wt)
        rows.append(values)
    flush()
    if not out:
        raise ParseError("response contains no blocks")
    return out


# ---------------------------------------------------------------------------
# Scorer specs


class ScorerKind(enum.Enum):
    UNIFORM = "uniform"
    PSSM = "pssm"
    EXTERNAL = "external"
    ENSEMBLE = "ensemble"


@dataclass(frozen=True)
class ScorerSpec:
    """Everything needed to build a scorer; scorer_id is its cache namespace."""

    kind: ScorerKind
    scorer_id: str
    command_template: str = ""
    msa_path: Optional[Path] = None
    msa_reference: str = "human"
    pseudocount: float = 1.0

    def __post_init__(self):
        if not self.scorer_id:
            raise ValueError("scorer_id must be non-empty")
        if self.kind is ScorerKind.EXTERNAL:
            for placeholder in ("{request}", "{response}"):
                if placeholder not in self.command_template:
                    raise ValueError(f"command template lacks {placeholder}")
        if self.kind is ScorerKind.PSSM and self.pseudocount <= 0:
            raise ValueError(f"pseudocount must be > 0, got {self.pseudocount}")


# ---------------------------------------------------------------------------
# Scorers


class Scorer:
    """Produces a LogitsMatrix per sequence and counts every sequence scored."""

    def __init__(self, spec: ScorerSpec):
        self.spec = spec
        self._lock = threading.Lock()
        self._invocations = 0

    @property
    def scorer_id(self) -> str:
        return self.spec.scorer_id

    @property
    def invocations(self) -> int:
        with self._lock:
            return self._invocations

    def _count(self, n: int) -> None:
        with self._lock:
            self._invocations += n

    def compute(self, record: SequenceRecord) -> LogitsMatrix:
        return self.compute_batch([record])[0]

    def compute_batch(self, records: Sequence[SequenceRecord]) -> list[LogitsMatrix]:
        raise NotImplementedError


class UniformScorer(Scorer):
    """Every residue equally likely at every position."""

    def compute_batch(self, records: Sequence[SequenceRecord]) -> list[LogitsMatrix]:
        out = []
        for record in records:
            validate_sequence(record.sequence, context=f"sequence {record.id!r}")
            raw = np.full((len(record.sequence), NUM_AA), -np.log(NUM_AA))
            out.append(LogitsMatrix.from_raw(record.id, record.sequence, raw))
        self._count(len(records))
        return out


def pssm_column_logp(alignment: Alignment, pseudocount: float = 1.0) -> np.ndarray:
    """Per-column log-probabilities at the reference row's residue positions.

    Column c maps to the k-th non-gap character of the reference row.
    Counts include every row; gaps and 'X' are excluded from both the
    counts and the valid-row total. p = (count + a) / (n_valid + 20a).
    """
    if pseudocount <= 0:
        raise ValueError(f"pseudocount must be > 0, got {pseudocount}")
    human = alignment.human_row
    columns = [c for c, letter in enumerate(human) if letter != GAP]
    logp = np.empty((len(columns), NUM_AA))
    for k, c in enumerate(columns):
        counts = np.zeros(NUM_AA)
        n_valid = 0
        for _, row in alignment.rows:
            letter = row[c]
            if letter in AA_INDEX:
                counts[AA_INDEX[letter]] += 1
                n_valid += 1
        logp[k] = np.log((counts + pseudocount) / (n_valid + NUM_AA * pseudocount))
    return logp


def pssm_logits(
    alignment: Alignment,
    sequence: str,
    pseudocount: float = 1.0,
    sequence_id: str = "",
) -> LogitsMatrix:
    """PSSM logits for the reference sequence itself.

    The de-gapped reference row must equal `sequence` exactly; use a
    PssmScorer when scoring mutated forms of the reference.
    """
    validate_sequence(sequence)
    degapped = alignment.degapped_human()
    if degapped != sequence:
        raise ReferenceMismatch(
            "de-gapped reference row does not match the sequence "
            f"({len(degapped)} vs {len(sequence)} residues)"
            if len(degapped) != len(sequence)
            else "de-gapped reference row does not match the sequence"
        )
    raw = pssm_column_logp(alignment, pseudocount)
    return LogitsMatrix.from_raw(sequence_id or alignment.human_id, sequence, raw)


class PssmScorer(Scorer):
    """Alignment-column scorer; positions score the same whatever the input.

    Input sequences only need the reference length: the columns are a
    function of the alignment alone, which is what lets mutated forms of
    the reference be scored for rescue scans.
    """

    def __init__(self, spec: ScorerSpec, alignment: Alignment):
        super().__init__(spec)
        self.alignment = alignment
        self._column_logp = pssm_column_logp(alignment, spec.pseudocount)

    def compute_batch(self, records: Sequence[SequenceRecord]) -> list[LogitsMatrix]:
        out = []
        for record in records:
            validate_sequence(record.sequence, context=f"sequence {record.id!r}")
            if len(record.sequence) != self._column_logp.shape[0]:
                raise LengthMismatch(
                    f"sequence {record.id!r} has {len(record.sequence)} residues; "
                    f"alignment reference has {self._column_logp.shape[0]}"
                )
            out.append(
                LogitsMatrix.from_raw(record.id, record.sequence, self._column_logp)
            )
        self._count(len(records))
        return out


class ExternalScorer(Scorer):
    """Runs a command template with {request} and {response} placeholders.

    The request is a multi-record FASTA; the response must contain one
    block per requested id with wt letters matching the request sequence.
    Exit status zero is the only success signal.
    """

    def compute_batch(self, records: Sequence[SequenceRecord]) -> list[LogitsMatrix]:
        if not records:
            raise ValueError("no sequences to score")
        for record in records:
            validate_sequence(record.sequence, context=f"sequence {record.id!r}")
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sequence ids in one request")
        with tempfile.TemporaryDirectory(prefix="rescuescan-scorer-") as tmp:
            request_path = Path(tmp) / "request.fasta"
            response_path = Path(tmp) / "response.tsv"
            request_path.write_text(format_fasta(records))
            command = self.spec.command_template.replace(
                "{request}", str(request_path)
            ).replace("{response}", str(response_path))
            proc = subprocess.run(
                command, shell=True, capture_output=True, text=True
            )
            if proc.returncode != 0:
                tail = proc.stderr.strip().splitlines()[-3:]
                raise ScorerFailed(
                    f"scorer exited with status {proc.returncode}"
                    + (f": {' | '.join(tail)}" if tail else "")
                )
            if not response_path.exists():
                raise IncompleteResponse("scorer wrote no response file")
            blocks = parse_response(response_path.read_bytes())
        out = []
        for record in records:
            block = blocks.get(record.id)
            if block is None:
                raise IncompleteResponse(f"response lacks a block for {record.id!r}")
            if block.source_sequence != record.sequence:
                raise ReferenceMismatch(
                    f"response wt letters for {record.id!r} do not match the request sequence"
                )
            out.append(block)
        self._count(len(records))
        return out


def invoke_external_scorer(
    spec: ScorerSpec, records: Sequence[SequenceRecord]
) -> list[LogitsMatrix]:
    """One-shot batched call to an external scorer, results in request order."""
    return ExternalScorer(spec).compute_batch(records)


# ---------------------------------------------------------------------------
# Averaging across scorers


def average_logits(
    matrices: Sequence[LogitsMatrix], space: str = "log"
) -> LogitsMatrix:
    """Average several logits matrices for the same sequence.

    space="log" averages log-probabilities (geometric mean of the
    distributions), space="prob" averages probabilities; both results are
    renormalized.
    """
    if not matrices:
        raise ValueError("nothing to average")
    first = matrices[0]
    for m in matrices[1:]:
        if m.source_sequence != first.source_sequence:
            raise LengthMismatch("cannot average logits for different sequences")
    if space == "log":
        raw = np.mean([m.logp for m in matrices], axis=0)
    elif space == "prob":
        raw = np.log(np.mean([np.exp(m.logp) for m in matrices], axis=0))
    else:
        raise ValueError(f"unknown averaging space {space!r}")
    return LogitsMatrix.from_raw(first.sequence_id, first.source_sequence, raw)


class EnsembleScorer(Scorer):
    """Averages the outputs of member scorers in log or probability space."""

    def __init__(self, spec: ScorerSpec, members: Sequence[Scorer], space: str = "log"):
        if not members:
            raise ValueError("ensemble needs at least one member")
        if space not in ("log", "prob"):
            raise ValueError(f"unknown averaging space {space!r}")
        super().__init__(spec)
        self.members = list(members)
        self.space = space

    def compute_batch(self, records: Sequence[SequenceRecord]) -> list[LogitsMatrix]:
        per_member = [m.compute_batch(records) for m in self.members]
        out = []
        for i, record in enumerate(records):
            averaged = average_logits([batch[i] for batch in per_member], self.space)
            out.append(averaged.with_id(record.id))
        self._count(len(records))
        return out


# ---------------------------------------------------------------------------
# Content-addressed cache


def cache_key(scorer_id: str, sequence: str) -> str:
    digest = hashlib.sha256()
    digest.update(scorer_id.encode("ascii"))
    digest.update(b"\x00")
    digest.update(sequence.encode("ascii"))
    return digest.hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.{uuid.uuid4().hex}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def cached_logits(
    scorer: Scorer, record: SequenceRecord, cache_dir: Union[str, Path]
) -> LogitsMatrix:
    """Serve a matrix from the cache, computing and storing it on a miss.

    The key is SHA-256 over (scorer_id, 0x00, sequence); the entry is a
    single response block. Both hit and miss return a matrix parsed from
    the cached bytes, so repeated calls are bit-identical. Unreadable
    entries are discarded and recomputed with a warning.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"{cache_key(scorer.scorer_id, record.sequence)}.tsv"
    if path.exists():
        try:
            blocks = parse_response(path.read_bytes())
            if len(blocks) != 1:
                raise ParseError(f"expected one block, found {len(blocks)}")
            matrix = next(iter(blocks.values()))
            if matrix.source_sequence != record.sequence:
                raise ParseError("cached sequence does not match the request")
            return matrix.with_id(record.id)
        except ParseError as exc:
            logger.warning("discarding corrupt cache entry %s: %s", path.name, exc)
            path.unlink(missing_ok=True)
    matrix = scorer.compute(record)
    block = format_response_block(matrix)
    _atomic_write(path, block)
    reparsed = next(iter(parse_response(block).values()))
    return reparsed.with_id(record.id)


def fetch_logits(
    scorer: Scorer, record: SequenceRecord, cache_dir: Optional[Union[str, Path]]
) -> LogitsMatrix:
    """cached_logits when a cache directory is configured, else a direct call."""
    if cache_dir is None:
        return scorer.compute(record)
    return cached_logits(scorer, record, cache_dir)
