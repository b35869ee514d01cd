import logging
import math
import sys

import numpy as np
import pytest

from rescuescan.domain import ALPHABET, NUM_AA, SequenceRecord
from rescuescan.errors import (
    EmptySequence,
    IncompleteResponse,
    LengthMismatch,
    ParseError,
    ReferenceMismatch,
    ScorerFailed,
)
from rescuescan.parsers import parse_msa
from rescuescan.scorers import (
    EnsembleScorer,
    ExternalScorer,
    LogitsMatrix,
    PssmScorer,
    ScorerKind,
    ScorerSpec,
    UniformScorer,
    average_logits,
    cache_key,
    cached_logits,
    format_response,
    format_response_block,
    invoke_external_scorer,
    parse_response,
    pssm_logits,
)

UNIFORM = ScorerSpec(ScorerKind.UNIFORM, "uniform")


def external_spec(cmd: str, scorer_id: str = "external:test") -> ScorerSpec:
    return ScorerSpec(ScorerKind.EXTERNAL, scorer_id, command_template=cmd)


def pssm_spec(scorer_id: str = "pssm:test", alpha: float = 1.0) -> ScorerSpec:
    return ScorerSpec(ScorerKind.PSSM, scorer_id, pseudocount=alpha)


# ---------------------------------------------------------------------------
# LogitsMatrix


def test_logits_matrix_renormalizes_rows():
    raw = np.zeros((2, NUM_AA))  # exp-sums of 20, well inside the error bound? no: 20 > 1.5
    # zeros exponentiate to row sums of 20, which must be rejected
    with pytest.raises(ParseError, match="deviates"):
        LogitsMatrix.from_raw("s", "AC", raw)


def test_logits_matrix_accepts_small_deviation_and_normalizes():
    base = np.full((1, NUM_AA), -math.log(NUM_AA))
    shifted = base + math.log(1.3)  # rows sum to 1.3: warn, renormalize
    matrix = LogitsMatrix.from_raw("s", "A", shifted)
    assert np.exp(matrix.logp).sum(axis=1) == pytest.approx([1.0], abs=1e-9)
    assert np.allclose(matrix.logp, base)


def test_logits_matrix_rejects_shape_and_nonfinite():
    with pytest.raises(LengthMismatch):
        LogitsMatrix.from_raw("s", "AC", np.zeros((3, NUM_AA)))
    bad = np.full((1, NUM_AA), -math.log(NUM_AA))
    bad[0, 0] = np.nan
    with pytest.raises(ParseError, match="finite"):
        LogitsMatrix.from_raw("s", "A", bad)


def test_logits_matrix_is_immutable():
    matrix = UniformScorer(UNIFORM).compute(SequenceRecord("s", "ACD"))
    with pytest.raises(ValueError):
        matrix.logp[0, 0] = 0.0


# ---------------------------------------------------------------------------
# Uniform scorer


def test_uniform_scorer_values_and_row_sums():
    matrix = UniformScorer(UNIFORM).compute(SequenceRecord("s", "ACD"))
    assert matrix.logp.shape == (3, NUM_AA)
    assert np.allclose(matrix.logp, math.log(1 / 20), atol=1e-12)
    sums = np.exp(matrix.logp).sum(axis=1)
    assert np.abs(sums - 1.0).max() < 1e-12


def test_uniform_scorer_rejects_empty_and_noncanonical():
    scorer = UniformScorer(UNIFORM)
    with pytest.raises(EmptySequence):
        scorer.compute(SequenceRecord("s", ""))
    with pytest.raises(Exception):
        scorer.compute(SequenceRecord("s", "ACX"))


# ---------------------------------------------------------------------------
# PSSM


def test_pssm_three_identical_rows():
    # Column of three A's, alpha 1: p(A) = 4/23, others 1/23.
    aln = parse_msa(">human\nA\n>mouse\nA\n>fly\nA\n")
    matrix = pssm_logits(aln, "A")
    probs = np.exp(matrix.logp[0])
    assert probs[0] == pytest.approx(4 / 23, abs=1e-12)
    assert probs[1] == pytest.approx(1 / 23, abs=1e-12)
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_pssm_x_and_gap_excluded_from_counts():
    # Rows A, A, X: n_valid 2, p(A) = 3/22. Gap behaves the same.
    aln = parse_msa(">human\nA\n>mouse\nA\n>fly\nX\n")
    assert np.exp(pssm_logits(aln, "A").logp[0, 0]) == pytest.approx(3 / 22, abs=1e-12)
    aln2 = parse_msa(">human\nA\n>mouse\nA\n>fly\n-\n")
    assert np.exp(pssm_logits(aln2, "A").logp[0, 0]) == pytest.approx(3 / 22, abs=1e-12)


def test_pssm_single_row_alignment():
    aln = parse_msa(">human\nAC\n")
    probs = np.exp(pssm_logits(aln, "AC").logp)
    assert probs[0, 0] == pytest.approx(2 / 21, abs=1e-12)
    assert probs[1, 1] == pytest.approx(2 / 21, abs=1e-12)
    assert probs[0, 1] == pytest.approx(1 / 21, abs=1e-12)


def test_pssm_gap_columns_skipped():
    # Human row AC-D: the all-gap human column never maps to a position.
    aln = parse_msa(">human\nAC-D\n>mouse\nACGD\n")
    matrix = pssm_logits(aln, "ACD")
    assert matrix.logp.shape == (3, NUM_AA)


def test_pssm_requires_reference_equality():
    aln = parse_msa(">human\nAC-D\n>mouse\nACGD\n")
    with pytest.raises(ReferenceMismatch):
        pssm_logits(aln, "ACE")
    with pytest.raises(ReferenceMismatch):
        pssm_logits(aln, "ACDE")


def test_pssm_row_order_invariance():
    a = parse_msa(">human\nAC\n>mouse\nGC\n>fly\nAT\n")
    b = parse_msa(">mouse\nGC\n>fly\nAT\n>human\nAC\n")
    assert np.array_equal(pssm_logits(a, "AC").logp, pssm_logits(b, "AC").logp)


def test_pssm_scorer_accepts_mutated_sequences():
    aln = parse_msa(">human\nAC\n>mouse\nAC\n")
    scorer = PssmScorer(pssm_spec(), aln)
    wild = scorer.compute(SequenceRecord("wt", "AC"))
    mutated = scorer.compute(SequenceRecord("mut", "CC"))
    # Position-independent: same columns whatever the input letters.
    assert np.array_equal(wild.logp, mutated.logp)
    with pytest.raises(LengthMismatch):
        scorer.compute(SequenceRecord("wrong", "ACC"))


def test_pssm_pseudocount_scales():
    aln = parse_msa(">human\nA\n>mouse\nA\n")
    heavy = PssmScorer(pssm_spec(alpha=10.0), aln).compute(SequenceRecord("s", "A"))
    assert np.exp(heavy.logp[0, 0]) == pytest.approx(12 / 202, abs=1e-12)


# ---------------------------------------------------------------------------
# Response format


def test_response_roundtrip():
    scorer = UniformScorer(UNIFORM)
    matrices = scorer.compute_batch(
        [SequenceRecord("a", "ACD"), SequenceRecord("b", "WY")]
    )
    text = format_response(matrices)
    parsed = parse_response(text)
    assert list(parsed) == ["a", "b"]
    for original, name in zip(matrices, ("a", "b")):
        got = parsed[name]
        assert got.source_sequence == original.source_sequence
        assert np.abs(got.logp - original.logp).max() < 1e-9


def test_response_format_shape():
    matrix = UniformScorer(UNIFORM).compute(SequenceRecord("a", "AC"))
    lines = format_response_block(matrix).splitlines()
    assert lines[0] == "#id a"
    assert lines[1] == f"#alphabet {ALPHABET}"
    first = lines[2].split("\t")
    assert first[0] == "1" and first[1] == "A" and len(first) == 22


@pytest.mark.parametrize(
    "text,match",
    [
        ("#id a\n1\tA\t" + "\t".join(["-3.0"] * 20), "alphabet"),
        ("#id a\n#alphabet ACDEFGHIKLMNPQRSTVWY\n", "no positions"),
        ("#alphabet ACDEFGHIKLMNPQRSTVWY\n", "before any"),
        ("#id a\n#alphabet WRONG\n1\tA\t" + "\t".join(["-3.0"] * 20), "alphabet"),
        ("#id a\n#alphabet ACDEFGHIKLMNPQRSTVWY\n2\tA\t" + "\t".join(["-3.0"] * 20), "out of order"),
        ("#id a\n#alphabet ACDEFGHIKLMNPQRSTVWY\n1\tA\t-3.0", "fields"),
        ("#id a\n#alphabet ACDEFGHIKLMNPQRSTVWY\n1\tB\t" + "\t".join(["-3.0"] * 20), "canonical"),
    ],
)
def test_response_malformed_blocks(text, match):
    with pytest.raises(ParseError, match=match):
        parse_response(text)


def test_response_row_sum_error_names_row():
    matrix = UniformScorer(UNIFORM).compute(SequenceRecord("a", "AC"))
    shifted = np.array(matrix.logp)
    shifted[1] += 5.0
    text = format_response_block(
        LogitsMatrix(sequence_id="a", source_sequence="AC", logp=shifted)
    )
    with pytest.raises(ParseError, match="row 2"):
        parse_response(text)


# ---------------------------------------------------------------------------
# External scorer


def test_external_scorer_roundtrip(fake_scorer_cmd):
    scorer = ExternalScorer(external_spec(fake_scorer_cmd))
    records = [SequenceRecord("a", "ACDEFG"), SequenceRecord("b", "WYWYWY")]
    first = scorer.compute_batch(records)
    second = scorer.compute_batch(records)
    assert [m.sequence_id for m in first] == ["a", "b"]
    for m1, m2 in zip(first, second):
        assert np.array_equal(m1.logp, m2.logp)
        assert np.abs(np.exp(m1.logp).sum(axis=1) - 1.0).max() < 1e-6
    assert scorer.invocations == 4


def test_external_scorer_shift_invariance_after_renormalization(fake_scorer_path, caplog):
    base = ExternalScorer(
        external_spec(f"{sys.executable} {fake_scorer_path} {{request}} {{response}}")
    )
    shifted = ExternalScorer(
        external_spec(
            f"{sys.executable} {fake_scorer_path} --shift {math.log(1.3)} {{request}} {{response}}"
        )
    )
    record = SequenceRecord("a", "ACDEFGHIK")
    with caplog.at_level(logging.WARNING):
        m_base = base.compute(record)
        m_shift = shifted.compute(record)
    assert np.abs(m_base.logp - m_shift.logp).max() < 1e-8
    assert any("renormalizing" in r.message for r in caplog.records)


def test_external_scorer_failure_modes(fake_scorer_path):
    prefix = f"{sys.executable} {fake_scorer_path}"
    record = SequenceRecord("a", "ACD")
    with pytest.raises(ScorerFailed, match="status 3"):
        ExternalScorer(
            external_spec(f"{prefix} --exit-code 3 {{request}} {{response}}")
        ).compute(record)
    with pytest.raises(IncompleteResponse, match="'a'"):
        ExternalScorer(
            external_spec(f"{prefix} --drop-id a {{request}} {{response}}")
        ).compute_batch([record, SequenceRecord("b", "WYV")])
    with pytest.raises(ParseError, match="row 1"):
        ExternalScorer(
            external_spec(f"{prefix} --garbage-row {{request}} {{response}}")
        ).compute(record)


def test_external_scorer_requires_placeholders():
    with pytest.raises(ValueError, match="request"):
        external_spec("scorer --in foo --out bar")


def test_invoke_external_scorer_order_and_empty(fake_scorer_cmd):
    records = [SequenceRecord(f"s{i}", "ACDEFG") for i in range(5)]
    out = invoke_external_scorer(external_spec(fake_scorer_cmd), records)
    assert [m.sequence_id for m in out] == [r.id for r in records]
    with pytest.raises(ValueError):
        invoke_external_scorer(external_spec(fake_scorer_cmd), [])


# ---------------------------------------------------------------------------
# Averaging


def test_average_logits_log_space_of_identical_is_identity():
    m = UniformScorer(UNIFORM).compute(SequenceRecord("a", "ACD"))
    avg = average_logits([m, m], space="log")
    assert np.abs(avg.logp - m.logp).max() < 1e-12


def test_average_logits_prob_space():
    aln1 = parse_msa(">human\nA\n>mouse\nA\n")
    aln2 = parse_msa(">human\nA\n>mouse\nC\n")
    m1 = PssmScorer(pssm_spec("p1"), aln1).compute(SequenceRecord("s", "A"))
    m2 = PssmScorer(pssm_spec("p2"), aln2).compute(SequenceRecord("s", "A"))
    avg = average_logits([m1, m2], space="prob")
    expected = (np.exp(m1.logp) + np.exp(m2.logp)) / 2
    assert np.abs(np.exp(avg.logp) - expected).max() < 1e-12


def test_ensemble_scorer_counts_and_matches_average(fake_scorer_cmd):
    aln = parse_msa(">human\nACDEF\n>mouse\nACDEF\n")
    members = [
        PssmScorer(pssm_spec("p1"), aln),
        ExternalScorer(external_spec(fake_scorer_cmd)),
    ]
    ens = EnsembleScorer(
        ScorerSpec(ScorerKind.ENSEMBLE, "ensemble:test"), members, space="log"
    )
    record = SequenceRecord("s", "ACDEF")
    got = ens.compute(record)
    want = average_logits([m.compute(record) for m in members], space="log")
    assert np.abs(got.logp - want.logp).max() < 1e-9
    assert got.sequence_id == "s"
    assert ens.invocations == 1


def test_average_logits_rejects_mixed_sequences():
    u = UniformScorer(UNIFORM)
    with pytest.raises(LengthMismatch):
        average_logits(
            [u.compute(SequenceRecord("a", "ACD")), u.compute(SequenceRecord("b", "ACC"))]
        )


# ---------------------------------------------------------------------------
# Cache


def test_cache_key_separates_scorers_and_sequences():
    assert cache_key("s1", "ACD") != cache_key("s2", "ACD")
    assert cache_key("s1", "ACD") != cache_key("s1", "ACC")
    assert cache_key("s1", "ACD") == cache_key("s1", "ACD")


def test_cached_logits_hit_skips_invocation(tmp_path, fake_scorer_cmd):
    scorer = ExternalScorer(external_spec(fake_scorer_cmd))
    record = SequenceRecord("a", "ACDEFGHIK")
    first = cached_logits(scorer, record, tmp_path)
    assert scorer.invocations == 1
    second = cached_logits(scorer, record, tmp_path)
    assert scorer.invocations == 1
    assert np.array_equal(first.logp, second.logp)
    assert first.source_sequence == second.source_sequence


def test_cached_logits_bit_identical_across_ids(tmp_path):
    scorer = UniformScorer(UNIFORM)
    a = cached_logits(scorer, SequenceRecord("first", "ACD"), tmp_path)
    b = cached_logits(scorer, SequenceRecord("second", "ACD"), tmp_path)
    assert np.array_equal(a.logp, b.logp)
    assert a.sequence_id == "first" and b.sequence_id == "second"


def test_cached_logits_distinct_scorer_namespaces(tmp_path, fake_scorer_cmd):
    record = SequenceRecord("a", "ACDEF")
    uniform = UniformScorer(UNIFORM)
    external = ExternalScorer(external_spec(fake_scorer_cmd))
    m_uniform = cached_logits(uniform, record, tmp_path)
    m_external = cached_logits(external, record, tmp_path)
    assert not np.array_equal(m_uniform.logp, m_external.logp)
    assert len(list(tmp_path.glob("*.tsv"))) == 2


def test_cached_logits_recovers_from_corrupt_entry(tmp_path, caplog):
    scorer = UniformScorer(UNIFORM)
    record = SequenceRecord("a", "ACD")
    cached_logits(scorer, record, tmp_path)
    entry = next(tmp_path.glob("*.tsv"))
    entry.write_text("#id a\ntruncated garbage\n")
    with caplog.at_level(logging.WARNING):
        matrix = cached_logits(scorer, record, tmp_path)
    assert any("corrupt" in r.message for r in caplog.records)
    assert np.abs(np.exp(matrix.logp).sum(axis=1) - 1.0).max() < 1e-6
    # The entry was rewritten and now parses cleanly.
    assert parse_response(entry.read_bytes())


def test_cache_file_bytes_stable_across_calls(tmp_path):
    scorer = UniformScorer(UNIFORM)
    record = SequenceRecord("a", "ACD")
    cached_logits(scorer, record, tmp_path)
    entry = next(tmp_path.glob("*.tsv"))
    before = entry.read_bytes()
    cached_logits(scorer, record, tmp_path)
    assert entry.read_bytes() == before
