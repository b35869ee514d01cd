"""Masked protein language models behind the external-scorer file protocol."""

from .adapter import (
    ALPHABET,
    DEFAULT_BATCH_SIZE,
    DEFAULT_MAX_LENGTH,
    AdapterConfig,
    AdapterError,
    MaskedLmScorer,
    ModelLoadError,
    RequestError,
    check_lengths,
    format_response_block,
    parse_request,
    serve_request,
)

__version__ = "0.1.0"

__all__ = [
    "ALPHABET",
    "AdapterConfig",
    "AdapterError",
    "DEFAULT_BATCH_SIZE",
    "DEFAULT_MAX_LENGTH",
    "MaskedLmScorer",
    "ModelLoadError",
    "RequestError",
    "check_lengths",
    "format_response_block",
    "parse_request",
    "serve_request",
]
