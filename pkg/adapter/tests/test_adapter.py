import numpy as np
import pytest

from lm_scorer_adapter import (
    ALPHABET,
    AdapterConfig,
    MaskedLmScorer,
    ModelLoadError,
    RequestError,
    check_lengths,
    format_response_block,
    parse_request,
    serve_request,
)


# ---------------------------------------------------------------------------
# Config


def test_config_defaults():
    config = AdapterConfig(model="m")
    assert config.device == "cpu"
    assert config.batch_size == 8
    assert config.max_length == 1022


@pytest.mark.parametrize(
    "kwargs",
    [
        {"model": ""},
        {"model": "m", "batch_size": 0},
        {"model": "m", "batch_size": -2},
        {"model": "m", "max_length": 0},
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        AdapterConfig(**kwargs)


# ---------------------------------------------------------------------------
# Request parsing


def test_parse_request_multi_record():
    text = ">a\nACDE\nFGHI\n\n>b\nWYWY\n"
    assert parse_request(text) == [("a", "ACDEFGHI"), ("b", "WYWY")]


def test_parse_request_accepts_bytes():
    assert parse_request(b">a\nAC\n") == [("a", "AC")]


@pytest.mark.parametrize(
    "text,needle",
    [
        ("", "no sequences"),
        ("\n  \n", "no sequences"),
        (">a\n", "'a' has no sequence"),
        (">a\nAC\n>a\nGG\n", "duplicate record id 'a'"),
        (">\nAC\n", "empty id"),
        ("ACDE\n", "before any record header"),
        (">a\nACXE\n", "'a' has non-canonical residue 'X'"),
        (">a\nacde\n", "'a' has non-canonical residue 'a'"),
    ],
)
def test_parse_request_rejects_malformed(text, needle):
    with pytest.raises(RequestError, match=needle):
        parse_request(text)


def test_check_lengths_names_the_record():
    records = [("ok", "ACD"), ("long", "A" * 11)]
    check_lengths(records, 11)
    with pytest.raises(RequestError, match="'long' has 11 residues, limit is 10"):
        check_lengths(records, 10)


# ---------------------------------------------------------------------------
# Response formatting


def test_format_response_block_layout():
    logp = np.full((2, 20), np.log(0.05))
    logp[1, 0] = -0.0
    block = format_response_block("seq1", "AC", logp)
    lines = block.splitlines()
    assert lines[0] == "#id seq1"
    assert lines[1] == f"#alphabet {ALPHABET}"
    assert len(lines) == 4
    first = lines[2].split("\t")
    assert first[:2] == ["1", "A"]
    assert len(first) == 22
    assert float(first[2]) == pytest.approx(np.log(0.05))
    assert lines[3].split("\t")[2] == "0"  # negative zero normalized


def test_format_response_block_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        format_response_block("s", "ACD", np.zeros((2, 20)))


# ---------------------------------------------------------------------------
# Model scoring


def test_rows_renormalize_to_one(checkpoint):
    scorer = MaskedLmScorer(AdapterConfig(model=checkpoint))
    (logp,) = scorer.score(["ACDEFGHIKL"])
    assert logp.shape == (10, 20)
    assert logp.dtype == np.float64
    sums = np.exp(logp).sum(axis=1)
    assert np.abs(sums - 1).max() < 1e-12


def test_score_matches_manual_readout(checkpoint):
    import torch
    from transformers import AutoModelForMaskedLM, AutoTokenizer

    sequence = "MKTAYIAKQR"
    scorer = MaskedLmScorer(AdapterConfig(model=checkpoint))
    (got,) = scorer.score([sequence])

    tokenizer = AutoTokenizer.from_pretrained(checkpoint)
    model = AutoModelForMaskedLM.from_pretrained(checkpoint)
    model.eval()
    encoded = tokenizer(sequence, return_tensors="pt")
    with torch.no_grad():
        logits = model(**encoded).logits[0]
    ids = tokenizer.convert_tokens_to_ids(list(ALPHABET))
    raw = logits[1 : 1 + len(sequence), ids].double().numpy()
    want = raw - np.logaddexp.reduce(raw, axis=1, keepdims=True)
    assert np.allclose(got, want, rtol=0, atol=1e-12)


def test_batched_and_single_scores_agree(checkpoint):
    sequences = ["ACDEFG", "WYWYWYWYWYWY", "MKT"]
    batched = MaskedLmScorer(AdapterConfig(model=checkpoint, batch_size=3))
    singly = MaskedLmScorer(AdapterConfig(model=checkpoint, batch_size=1))
    got = batched.score(sequences)
    want = singly.score(sequences)
    for a, b in zip(got, want):
        assert np.allclose(a, b, atol=1e-4)


def test_missing_checkpoint_is_a_load_error(tmp_path):
    empty = tmp_path / "not_a_model"
    empty.mkdir()
    with pytest.raises(ModelLoadError, match="cannot load model"):
        MaskedLmScorer(AdapterConfig(model=str(empty)))


# ---------------------------------------------------------------------------
# serve_request


def test_serve_request_validates_before_loading(tmp_path):
    request = tmp_path / "req.fasta"
    request.write_text(">a\nAC\n>b\n" + "A" * 30 + "\n")
    response = tmp_path / "resp.tsv"
    config = AdapterConfig(model=str(tmp_path / "never_loaded"), max_length=20)
    with pytest.raises(RequestError, match="'b' has 30 residues"):
        serve_request(request, response, config)
    assert not response.exists()


def test_serve_request_unreadable_request(tmp_path, checkpoint):
    config = AdapterConfig(model=checkpoint)
    with pytest.raises(RequestError, match="cannot read request"):
        serve_request(tmp_path / "missing.fasta", tmp_path / "resp.tsv", config)


def test_serve_request_writes_blocks_in_request_order(tmp_path, checkpoint):
    request = tmp_path / "req.fasta"
    request.write_text(">later\nWYWY\n>earlier\nACDE\n")
    response = tmp_path / "resp.tsv"
    assert serve_request(request, response, AdapterConfig(model=checkpoint)) == 0
    ids = [line for line in response.read_text().splitlines() if line.startswith("#id ")]
    assert ids == ["#id later", "#id earlier"]
