"""Command-line entry points.

Every subcommand writes its declared files into --out and exits 0 only
when all of them exist non-empty. Any failure prints one machine-parsable
line (error<TAB>type<TAB>message) to stderr, removes partial outputs, and
exits 1.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from .contacts import DEFAULT_CONTACT_THRESHOLD, DEFAULT_MIN_SEPARATION, concordance, contact_map
from .cpd import cpd_score_comparison, detect_cpd
from .domain import ClinicalSignificance, ProteinRecord, VariantRecord
from .errors import EmptyGroup, RescuescanError
from .heatmap import render_heatmap
from .parsers import parse_fasta, parse_frequency_table, parse_msa, parse_structure, parse_variant_table
from .reports import (
    agreement_tsv,
    concordance_tsv,
    contact_map_tsv,
    cpd_status_tsv,
    cpd_tests_tsv,
    group_tests_tsv,
    read_scored_variants,
    rescue_matrix_tsv,
    scored_variants_tsv,
    stratified_tsv,
)
from .rescue import Z_ACROSS_BACKGROUNDS, Z_AXES, build_rescue_matrix
from .scorers import (
    EnsembleScorer,
    ExternalScorer,
    PssmScorer,
    Scorer,
    ScorerKind,
    ScorerSpec,
    UniformScorer,
)
from .scoring import (
    DEFAULT_BIN_EDGES,
    compare_scorers,
    compare_significance_groups,
    score_across_proteins,
    stratify_by_frequency,
)

logger = logging.getLogger(__name__)

CACHE_ENV = "RESCUESCAN_CACHE"
THREADS_ENV = "RESCUESCAN_THREADS"


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation needs, resolved from flags and environment."""

    command: str
    out_dir: Path
    cache_dir: Optional[Path] = None
    threads: int = 1
    scorers: tuple[str, ...] = ()
    msa_reference: str = "human"
    pssm_alpha: float = 1.0
    ensemble: bool = False
    ensemble_space: str = "log"
    sequences: Optional[Path] = None
    variants: Optional[Path] = None
    frequencies: Optional[Path] = None
    bin_edges: tuple[float, ...] = DEFAULT_BIN_EDGES
    gene: Optional[str] = None
    background_set: str = "plp"
    z_axis: str = Z_ACROSS_BACKGROUNDS
    structure: Optional[Path] = None
    chain: str = "A"
    contact_threshold: float = DEFAULT_CONTACT_THRESHOLD
    min_separation: int = DEFAULT_MIN_SEPARATION
    signed: bool = False
    length: Optional[int] = None
    msa: Optional[Path] = None
    scores: Optional[Path] = None
    scores_a: Optional[Path] = None
    scores_b: Optional[Path] = None


class OutputWriter:
    """Atomic writes into the output directory, with all-or-nothing cleanup."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self._written: list[Path] = []

    def write(self, name: str, text: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        tmp = path.with_name(f".{name}.{uuid.uuid4().hex}.tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
        self._written.append(path)
        return path

    def finalize(self) -> None:
        if not self._written:
            raise RescuescanError("command declared no outputs")
        for path in self._written:
            if not path.exists() or path.stat().st_size == 0:
                raise RescuescanError(f"declared output missing or empty: {path}")

    def cleanup(self) -> None:
        for path in self._written:
            path.unlink(missing_ok=True)


def _env_threads() -> int:
    value = os.environ.get(THREADS_ENV, "").strip()
    if not value:
        return 1
    try:
        n = int(value)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be >= 1, got {n}")
    return n


def _env_cache() -> Optional[Path]:
    value = os.environ.get(CACHE_ENV, "").strip()
    return Path(value) if value else None


def _read(path: Optional[Path], what: str) -> bytes:
    if path is None:
        raise ValueError(f"{what} file is required")
    path = Path(path)
    if not path.is_file():
        raise RescuescanError(f"{what} file not found: {path}")
    return path.read_bytes()


# ---------------------------------------------------------------------------
# Scorer construction


def _derive_scorer(arg: str, config: RunConfig) -> Scorer:
    if arg == "uniform":
        return UniformScorer(ScorerSpec(ScorerKind.UNIFORM, "uniform"))
    if arg.startswith("pssm:"):
        path = Path(arg[len("pssm:") :])
        alignment = parse_msa(_read(path, "MSA"), config.msa_reference)
        scorer_id = f"pssm:{path.stem}:{config.msa_reference}:a{config.pssm_alpha:g}"
        spec = ScorerSpec(
            ScorerKind.PSSM,
            scorer_id,
            msa_path=path,
            msa_reference=config.msa_reference,
            pseudocount=config.pssm_alpha,
        )
        return PssmScorer(spec, alignment)
    if arg.startswith("external:"):
        template = arg[len("external:") :]
        digest = hashlib.sha256(template.encode("utf-8")).hexdigest()[:12]
        spec = ScorerSpec(ScorerKind.EXTERNAL, f"external:{digest}", command_template=template)
        return ExternalScorer(spec)
    raise ValueError(
        f"unknown scorer {arg!r}; expected uniform, pssm:<msa-path>, or external:<command>"
    )


def build_scorers(config: RunConfig) -> list[Scorer]:
    if not config.scorers:
        raise ValueError("at least one --scorer is required")
    members = [_derive_scorer(arg, config) for arg in config.scorers]
    if config.ensemble:
        if len(members) < 2:
            raise ValueError("--ensemble needs at least two --scorer values")
        joined = "+".join(m.scorer_id for m in members)
        spec = ScorerSpec(ScorerKind.ENSEMBLE, f"ensemble[{joined}]:{config.ensemble_space}")
        return [EnsembleScorer(spec, members, config.ensemble_space)]
    return members


# ---------------------------------------------------------------------------
# Shared input plumbing


def _load_proteins(config: RunConfig) -> list[ProteinRecord]:
    records = parse_fasta(_read(config.sequences, "sequences"))
    return [ProteinRecord.from_record(r) for r in records]


def _pick_protein(proteins: list[ProteinRecord], gene: Optional[str]) -> ProteinRecord:
    if gene is not None:
        for protein in proteins:
            if protein.gene_symbol == gene:
                return protein
        raise RescuescanError(f"no sequence for gene {gene!r}")
    if len(proteins) == 1:
        return proteins[0]
    raise ValueError(f"{len(proteins)} sequences given; pick one with --gene")


def _load_variants(config: RunConfig) -> list[VariantRecord]:
    variants = parse_variant_table(_read(config.variants, "variants"))
    if config.frequencies is not None:
        table = parse_frequency_table(_read(config.frequencies, "frequencies"))
        variants = [
            replace(v, allele_frequency=table.lookup(v))
            if table.lookup(v) is not None
            else v
            for v in variants
        ]
    return variants


# ---------------------------------------------------------------------------
# Subcommands


def cmd_score_variants(config: RunConfig, writer: OutputWriter) -> None:
    proteins = _load_proteins(config)
    by_gene = {p.gene_symbol: p for p in proteins}
    variants = _load_variants(config)
    wanted: dict[str, list[VariantRecord]] = {}
    for v in variants:
        wanted.setdefault(v.gene_symbol, []).append(v)
    unknown = sorted(set(wanted) - set(by_gene))
    if unknown:
        raise RescuescanError(f"no sequence for gene(s): {', '.join(unknown)}")
    items = [(p, wanted[p.gene_symbol]) for p in proteins if p.gene_symbol in wanted]

    scorers = build_scorers(config)
    scored_per_scorer = [
        score_across_proteins(s, items, cache_dir=config.cache_dir, threads=config.threads)
        for s in scorers
    ]
    all_rows = [sv for scored in scored_per_scorer for sv in scored]
    writer.write("scored_variants.tsv", scored_variants_tsv(all_rows))

    strata_blocks = []
    test_blocks = []
    for scorer, scored in zip(scorers, scored_per_scorer):
        strata = stratify_by_frequency(scored, None, config.bin_edges)
        strata_blocks.append((scorer.scorer_id, strata.summary()))
        test_blocks.append((scorer.scorer_id, compare_significance_groups(scored, strata)))
    writer.write("stratified_comparison.tsv", stratified_tsv(strata_blocks))
    writer.write("group_tests.tsv", group_tests_tsv(test_blocks))

    if len(scorers) == 2:
        report = compare_scorers(scored_per_scorer[0], scored_per_scorer[1])
        writer.write(
            "agreement.tsv",
            agreement_tsv(report, scorers[0].scorer_id, scorers[1].scorer_id),
        )


def cmd_rescue_scan(config: RunConfig, writer: OutputWriter) -> None:
    protein = _pick_protein(_load_proteins(config), config.gene)
    variants = [v for v in _load_variants(config) if v.gene_symbol == protein.gene_symbol]
    if config.background_set == "plp":
        backgrounds = [
            v for v in variants if v.significance is ClinicalSignificance.PATHOGENIC
        ]
    else:
        backgrounds = variants
    if not backgrounds:
        raise ValueError(f"empty background set for gene {protein.gene_symbol!r}")

    scorers = build_scorers(config)
    if len(scorers) != 1:
        raise ValueError("rescue-scan takes one scorer; combine several with --ensemble")
    matrix = build_rescue_matrix(
        scorers[0],
        protein,
        backgrounds,
        z_axis=config.z_axis,
        cache_dir=config.cache_dir,
        threads=config.threads,
    )
    writer.write("rescue_matrix.tsv", rescue_matrix_tsv(matrix, "means"))
    writer.write("rescue_zscores.tsv", rescue_matrix_tsv(matrix, "z"))
    writer.write("rescue_heatmap.svg", render_heatmap(matrix.z, row_labels=matrix.row_labels))

    if config.structure is not None:
        trace = parse_structure(_read(config.structure, "structure"), config.chain)
        cmap = contact_map(trace, protein.length, config.contact_threshold)
        writer.write("contact_map.tsv", contact_map_tsv(cmap))
        report = concordance(matrix, cmap, config.min_separation, config.signed)
        writer.write("concordance.tsv", concordance_tsv(report))


def cmd_contacts(config: RunConfig, writer: OutputWriter) -> None:
    if config.length is not None:
        length = config.length
    else:
        length = _pick_protein(_load_proteins(config), config.gene).length
    trace = parse_structure(_read(config.structure, "structure"), config.chain)
    cmap = contact_map(trace, length, config.contact_threshold)
    writer.write("contact_map.tsv", contact_map_tsv(cmap))


def cmd_cpd(config: RunConfig, writer: OutputWriter) -> None:
    alignment = parse_msa(_read(config.msa, "MSA"), config.msa_reference)
    variants = parse_variant_table(_read(config.variants, "variants"))
    if config.gene is not None:
        variants = [v for v in variants if v.gene_symbol == config.gene]
    if not variants:
        raise ValueError("no variants to analyze")
    statuses = [detect_cpd(alignment, v) for v in variants]
    writer.write("cpd_status.tsv", cpd_status_tsv(statuses))

    if config.scores is not None:
        scored = read_scored_variants(_read(config.scores, "scores"))
        keys = {status.variant.key for status in statuses}
        by_scorer: dict[str, list] = {}
        for sv in scored:
            if sv.variant.key in keys:
                by_scorer.setdefault(sv.scorer_id, []).append(sv)
        if not by_scorer:
            raise ValueError("scores file shares no variants with the analyzed set")
        blocks = []
        for scorer_id in by_scorer:
            for window in range(0, 3):
                try:
                    comp = cpd_score_comparison(by_scorer[scorer_id], statuses, window)
                    blocks.append((scorer_id, window, comp, ""))
                except EmptyGroup as exc:
                    blocks.append((scorer_id, window, None, f"skipped: {exc}"))
        writer.write("cpd_tests.tsv", cpd_tests_tsv(blocks))


def cmd_agreement(config: RunConfig, writer: OutputWriter) -> None:
    scored_a = read_scored_variants(_read(config.scores_a, "scores-a"))
    scored_b = read_scored_variants(_read(config.scores_b, "scores-b"))
    ids_a = sorted({sv.scorer_id for sv in scored_a})
    ids_b = sorted({sv.scorer_id for sv in scored_b})
    if len(ids_a) != 1 or len(ids_b) != 1:
        raise ValueError(
            "each scores file must carry exactly one scorer "
            f"(found {len(ids_a)} and {len(ids_b)})"
        )
    report = compare_scorers(scored_a, scored_b)
    writer.write("agreement.tsv", agreement_tsv(report, ids_a[0], ids_b[0]))


COMMANDS = {
    "score-variants": cmd_score_variants,
    "rescue-scan": cmd_rescue_scan,
    "contacts": cmd_contacts,
    "cpd": cmd_cpd,
    "agreement": cmd_agreement,
}


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(sub: argparse.ArgumentParser, scorer: bool = True) -> None:
    sub.add_argument("--out", required=True, type=Path, help="output directory")
    sub.add_argument(
        "--cache",
        type=Path,
        default=None,
        help=f"logits cache directory (default: ${CACHE_ENV} when set)",
    )
    sub.add_argument(
        "--threads",
        type=int,
        default=None,
        help=f"worker threads (default: ${THREADS_ENV} or 1)",
    )
    if scorer:
        sub.add_argument(
            "--scorer",
            action="append",
            default=[],
            metavar="SPEC",
            help="uniform | pssm:<msa-path> | external:<command with {request} {response}>; repeatable",
        )
        sub.add_argument("--msa-reference", default="human", help="reference row id for pssm scorers")
        sub.add_argument("--pssm-alpha", type=float, default=1.0, help="PSSM pseudocount")
        sub.add_argument("--ensemble", action="store_true", help="average the given scorers into one")
        sub.add_argument(
            "--ensemble-space",
            choices=("log", "prob"),
            default="log",
            help="average in log-probability or probability space",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rescuescan",
        description="Score clinical protein variants and scan for rescue mutations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score-variants", help="wild-type marginal scores for a variant table")
    _add_common(p)
    p.add_argument("--sequences", required=True, type=Path, help="FASTA of protein sequences (ids are gene symbols)")
    p.add_argument("--variants", required=True, type=Path, help="variant TSV")
    p.add_argument("--frequencies", type=Path, default=None, help="allele-frequency TSV")
    p.add_argument(
        "--bin-edges",
        default=None,
        help="comma-separated frequency bin edges inside (0,1); default 1e-5,1e-4,1e-3,1e-2",
    )

    p = sub.add_parser("rescue-scan", help="exhaustive secondary-substitution scan over backgrounds")
    _add_common(p)
    p.add_argument("--sequences", required=True, type=Path)
    p.add_argument("--variants", required=True, type=Path)
    p.add_argument("--gene", default=None, help="gene to scan when the FASTA has several")
    p.add_argument(
        "--backgrounds",
        choices=("plp", "all"),
        default="plp",
        dest="background_set",
        help="which variants become scan backgrounds (default: P/LP only)",
    )
    p.add_argument(
        "--z-axis",
        choices=Z_AXES,
        default=Z_ACROSS_BACKGROUNDS,
        help="background: z each position column across backgrounds (default); "
        "position: z each background row across positions",
    )
    p.add_argument("--structure", type=Path, default=None, help="PDB file for contact concordance")
    p.add_argument("--chain", default="A", help="PDB chain id (default A)")
    p.add_argument("--contact-threshold", type=float, default=DEFAULT_CONTACT_THRESHOLD)
    p.add_argument("--min-separation", type=int, default=DEFAULT_MIN_SEPARATION)
    p.add_argument("--signed", action="store_true", help="use signed z instead of |z| for concordance")

    p = sub.add_parser("contacts", help="CA contact map from a PDB chain")
    _add_common(p, scorer=False)
    p.add_argument("--structure", required=True, type=Path)
    p.add_argument("--chain", default="A")
    p.add_argument("--length", type=int, default=None, help="sequence length; or give --sequences")
    p.add_argument("--sequences", type=Path, default=None)
    p.add_argument("--gene", default=None)
    p.add_argument("--contact-threshold", type=float, default=DEFAULT_CONTACT_THRESHOLD)

    p = sub.add_parser("cpd", help="compensated pathogenic deviation calls from an alignment")
    _add_common(p, scorer=False)
    p.add_argument("--msa", required=True, type=Path, help="aligned FASTA")
    p.add_argument("--msa-reference", default="human", help="reference row id")
    p.add_argument("--variants", required=True, type=Path)
    p.add_argument("--gene", default=None)
    p.add_argument("--scores", type=Path, default=None, help="scored_variants.tsv to test CPD separation on")

    p = sub.add_parser("agreement", help="correlation between two scored_variants.tsv files")
    _add_common(p, scorer=False)
    p.add_argument("--scores-a", required=True, type=Path)
    p.add_argument("--scores-b", required=True, type=Path)

    return parser


def _parse_bin_edges(text: Optional[str]) -> tuple[float, ...]:
    if text is None:
        return DEFAULT_BIN_EDGES
    try:
        edges = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ValueError(f"--bin-edges must be comma-separated numbers, got {text!r}") from None
    return edges


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    threads = args.threads if args.threads is not None else _env_threads()
    if threads < 1:
        raise ValueError(f"--threads must be >= 1, got {threads}")
    cache_dir = args.cache if args.cache is not None else _env_cache()
    get = lambda name, fallback: getattr(args, name, fallback)
    return RunConfig(
        command=args.command,
        out_dir=args.out,
        cache_dir=cache_dir,
        threads=threads,
        scorers=tuple(get("scorer", ()) or ()),
        msa_reference=get("msa_reference", "human"),
        pssm_alpha=get("pssm_alpha", 1.0),
        ensemble=get("ensemble", False),
        ensemble_space=get("ensemble_space", "log"),
        sequences=get("sequences", None),
        variants=get("variants", None),
        frequencies=get("frequencies", None),
        bin_edges=_parse_bin_edges(get("bin_edges", None)),
        gene=get("gene", None),
        background_set=get("background_set", "plp"),
        z_axis=get("z_axis", Z_ACROSS_BACKGROUNDS),
        structure=get("structure", None),
        chain=get("chain", "A"),
        contact_threshold=get("contact_threshold", DEFAULT_CONTACT_THRESHOLD),
        min_separation=get("min_separation", DEFAULT_MIN_SEPARATION),
        signed=get("signed", False),
        length=get("length", None),
        msa=get("msa", None),
        scores=get("scores", None),
        scores_a=get("scores_a", None),
        scores_b=get("scores_b", None),
    )


def _fail(exc: BaseException) -> None:
    message = " ".join(str(exc).split()) or type(exc).__name__
    print(f"error\t{type(exc).__name__}\t{message}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
    except (RescuescanError, ValueError, OSError) as exc:
        _fail(exc)
        return 1
    writer = OutputWriter(config.out_dir)
    try:
        COMMANDS[config.command](config, writer)
        writer.finalize()
    except (RescuescanError, ValueError, OSError) as exc:
        writer.cleanup()
        _fail(exc)
        return 1
    return 0


def run() -> None:
    sys.exit(main())
