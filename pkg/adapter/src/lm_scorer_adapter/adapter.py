"""Masked protein language models served over the external-scorer file protocol.

The adapter reads a multi-FASTA request, runs one unmasked forward pass per
sequence through a masked LM, restricts each position's distribution to the
twenty canonical residues, renormalizes, and writes the response blocks the
pipeline's parser expects. All I/O goes through the two named files; stdout
and stdin stay untouched.
"""

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
NUM_AA = len(ALPHABET)

# Residues per sequence the adapter accepts by default: a 1024-token model
# window minus the two special tokens framing the sequence.
DEFAULT_MAX_LENGTH = 1022
DEFAULT_BATCH_SIZE = 8


class AdapterError(Exception):
    """Base for adapter failures; carries the process exit status."""

    exit_status = 1


class RequestError(AdapterError):
    """The request file is missing, empty, malformed, or over-length."""

    exit_status = 1


class ModelLoadError(AdapterError):
    """The model or tokenizer could not be loaded onto the device."""

    exit_status = 2


@dataclass(frozen=True)
class AdapterConfig:
    """How to load and drive the model."""

    model: str
    device: str = "cpu"
    batch_size: int = DEFAULT_BATCH_SIZE
    max_length: int = DEFAULT_MAX_LENGTH

    def __post_init__(self):
        if not self.model:
            raise ValueError("model identifier is empty")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.max_length < 1:
            raise ValueError(f"max_length must be positive, got {self.max_length}")


# ---------------------------------------------------------------------------
# Request parsing


def parse_request(data: Union[str, bytes]) -> list[tuple[str, str]]:
    """Parse the multi-FASTA request into (id, sequence) pairs.

    Every record needs a non-empty id, a non-empty sequence, and only
    canonical residue letters; ids must be unique. Anything else raises
    RequestError naming the offending record.
    """
    if isinstance(data, bytes):
        data = data.decode("ascii")
    records: list[tuple[str, str]] = []
    seen: set[str] = set()
    current_id = None
    chunks: list[str] = []

    def flush():
        nonlocal current_id, chunks
        if current_id is None:
            return
        sequence = "".join(chunks)
        if not sequence:
            raise RequestError(f"record {current_id!r} has no sequence")
        for letter in sequence:
            if letter not in ALPHABET:
                raise RequestError(
                    f"record {current_id!r} has non-canonical residue {letter!r}"
                )
        records.append((current_id, sequence))
        current_id = None
        chunks = []

    for raw in data.replace("\r\n", "\n").split("\n"):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(">"):
            flush()
            ident = line[1:].strip()
            if not ident:
                raise RequestError("record with empty id")
            if ident in seen:
                raise RequestError(f"duplicate record id {ident!r}")
            seen.add(ident)
            current_id = ident
        else:
            if current_id is None:
                raise RequestError("sequence data before any record header")
            chunks.append(line)
    flush()
    if not records:
        raise RequestError("request contains no sequences")
    return records


def check_lengths(records: Sequence[tuple[str, str]], max_length: int) -> None:
    for ident, sequence in records:
        if len(sequence) > max_length:
            raise RequestError(
                f"record {ident!r} has {len(sequence)} residues, limit is {max_length}"
            )


# ---------------------------------------------------------------------------
# Model


class MaskedLmScorer:
    """A loaded masked LM plus the bookkeeping to read out residue logits."""

    def __init__(self, config: AdapterConfig):
        try:
            import torch
            from transformers import AutoModelForMaskedLM, AutoTokenizer
            from transformers.utils import logging as hf_logging

            hf_logging.set_verbosity_error()
            hf_logging.disable_progress_bar()
            self._torch = torch
            self._tokenizer = AutoTokenizer.from_pretrained(config.model)
            self._model = AutoModelForMaskedLM.from_pretrained(config.model)
            self._device = torch.device(config.device)
            self._model.to(self._device)
            self._model.eval()
        except Exception as exc:
            raise ModelLoadError(f"cannot load model {config.model!r}: {exc}") from exc
        self._batch_size = config.batch_size
        ids = self._tokenizer.convert_tokens_to_ids(list(ALPHABET))
        unk = self._tokenizer.unk_token_id
        for letter, token_id in zip(ALPHABET, ids):
            if token_id is None or token_id == unk:
                raise ModelLoadError(
                    f"model {config.model!r} vocabulary lacks residue {letter!r}"
                )
        self._letter_ids = list(ids)

    def score(self, sequences: Sequence[str]) -> list[np.ndarray]:
        """Log-probability matrices (L x 20, float64) for each sequence.

        One unmasked forward pass per sequence; each position's logits are
        restricted to the canonical letters and renormalized in float64, so
        every row's probabilities sum to 1 up to rounding.
        """
        out: list[np.ndarray] = []
        torch = self._torch
        for start in range(0, len(sequences), self._batch_size):
            chunk = list(sequences[start : start + self._batch_size])
            encoded = self._tokenizer(chunk, padding=True, return_tensors="pt")
            encoded = {k: v.to(self._device) for k, v in encoded.items()}
            with torch.no_grad():
                logits = self._model(**encoded).logits
            for row, sequence in enumerate(chunk):
                # Token 0 is the leading special token; residues follow it.
                selected = logits[row, 1 : 1 + len(sequence), self._letter_ids]
                raw = selected.double().cpu().numpy()
                norms = np.logaddexp.reduce(raw, axis=1, keepdims=True)
                out.append(raw - norms)
        return out


# ---------------------------------------------------------------------------
# Response format


def _format_float(x: float) -> str:
    if x == 0.0:
        x = 0.0  # normalize -0.0
    return format(float(x), ".9g")


def format_response_block(ident: str, sequence: str, logp: np.ndarray) -> str:
    """One response block: #id, #alphabet, then one row per position."""
    if logp.shape != (len(sequence), NUM_AA):
        raise ValueError(
            f"matrix for {ident!r} has shape {logp.shape}, "
            f"expected ({len(sequence)}, {NUM_AA})"
        )
    lines = [f"#id {ident}", f"#alphabet {ALPHABET}"]
    for i, wt in enumerate(sequence):
        values = "\t".join(_format_float(v) for v in logp[i])
        lines.append(f"{i + 1}\t{wt}\t{values}")
    return "\n".join(lines) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# Entry point


def serve_request(request: Path, response: Path, config: AdapterConfig) -> int:
    """Score every request record and write the response file atomically.

    The request is parsed and validated before the model is touched, so a
    bad request never pays for a model load. Returns 0; failures raise
    RequestError or ModelLoadError, whose exit_status the CLI reports.
    """
    try:
        data = Path(request).read_text()
    except OSError as exc:
        raise RequestError(f"cannot read request {request}: {exc}") from exc
    records = parse_request(data)
    check_lengths(records, config.max_length)

    scorer = MaskedLmScorer(config)
    matrices = scorer.score([sequence for _, sequence in records])
    blocks = [
        format_response_block(ident, sequence, logp)
        for (ident, sequence), logp in zip(records, matrices)
    ]
    _write_atomic(Path(response), "".join(blocks))
    return 0
