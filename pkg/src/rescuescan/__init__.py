"""Batch scoring of clinical protein variants, rescue-mutation scans, and
the structural and evolutionary checks that go with them."""

from .contacts import ConcordanceReport, ContactMap, concordance, contact_map
from .cpd import CpdComparison, CpdStatus, cpd_score_comparison, detect_cpd, map_alignment_columns
from .domain import (
    ALPHABET,
    ClinicalSignificance,
    ProteinRecord,
    SequenceRecord,
    VariantRecord,
    apply_mutation,
)
from .parsers import (
    Alignment,
    CalphaTrace,
    FrequencyTable,
    parse_fasta,
    parse_frequency_table,
    parse_msa,
    parse_structure,
    parse_variant_table,
)
from .rescue import (
    RescueMatrix,
    SecondaryScoreMatrix,
    background_secondary_matrix,
    build_rescue_matrix,
    position_summary,
)
from .scorers import (
    EnsembleScorer,
    ExternalScorer,
    LogitsMatrix,
    PssmScorer,
    Scorer,
    ScorerKind,
    ScorerSpec,
    UniformScorer,
    average_logits,
    cached_logits,
    invoke_external_scorer,
    parse_response,
    pssm_logits,
)
from .scoring import (
    AgreementReport,
    FrequencyStrata,
    ScoredVariant,
    compare_scorers,
    compare_significance_groups,
    score_variant_set,
    stratify_by_frequency,
    wt_marginal,
)
from .stats import UTestResult, auc, mann_whitney_u, pearson, spearman, zscore

__version__ = "0.1.0"

__all__ = [
    "ALPHABET",
    "AgreementReport",
    "Alignment",
    "CalphaTrace",
    "ClinicalSignificance",
    "ConcordanceReport",
    "ContactMap",
    "CpdComparison",
    "CpdStatus",
    "EnsembleScorer",
    "ExternalScorer",
    "FrequencyStrata",
    "FrequencyTable",
    "LogitsMatrix",
    "ProteinRecord",
    "PssmScorer",
    "RescueMatrix",
    "ScoredVariant",
    "Scorer",
    "ScorerKind",
    "ScorerSpec",
    "SecondaryScoreMatrix",
    "SequenceRecord",
    "UTestResult",
    "UniformScorer",
    "VariantRecord",
    "apply_mutation",
    "auc",
    "average_logits",
    "background_secondary_matrix",
    "build_rescue_matrix",
    "cached_logits",
    "compare_scorers",
    "compare_significance_groups",
    "concordance",
    "contact_map",
    "cpd_score_comparison",
    "detect_cpd",
    "invoke_external_scorer",
    "mann_whitney_u",
    "map_alignment_columns",
    "parse_fasta",
    "parse_frequency_table",
    "parse_msa",
    "parse_response",
    "parse_structure",
    "parse_variant_table",
    "pearson",
    "position_summary",
    "pssm_logits",
    "score_variant_set",
    "spearman",
    "stratify_by_frequency",
    "wt_marginal",
    "zscore",
]
