"""
Command-line entry point.
"""
import argparse
import json
import logging
import sys
import traceback
from pathlib import Path
from typing import Any, Optional, Sequence

from podtopics import __version__
from podtopics.config import get_settings
from podtopics.database import get_db, init_db
from podtopics.exceptions import ConfigError, PodtopicsError
from podtopics.models.run import RepresentationKind
from podtopics.schemas.pipeline import InitMethod, PipelineConfig
from podtopics.schemas.synth import SynthOptions
from podtopics.services import pipeline, registry, synth
from podtopics.services.coherence import report_json
from podtopics.services.factorization import save_model
from podtopics.services.representation import dump_representation

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"

# Flag destination -> PipelineConfig field
OVERRIDES = {
    "corpus": "corpus_path",
    "annotations": "annotations_path",
    "embeddings": "embeddings_path",
    "stopwords": "stopwords_path",
    "names": "names_path",
    "reference": "reference_path",
    "output_dir": "output_dir",
    "representation": "representation",
    "alpha_word": "alpha_word",
    "alpha_ent": "alpha_ent",
    "alpha_word_grid": "alpha_word_grid",
    "alpha_ent_grid": "alpha_ent_grid",
    "n_topics": "n_topics",
    "k_values": "k_values",
    "n_top_words": "n_top_words",
    "min_term_freq": "min_term_freq",
    "min_confidence": "min_confidence",
    "window_size": "window_size",
    "workers": "workers",
    "seed": "nmf.seed",
    "max_iter": "nmf.max_iter",
    "tol": "nmf.tol",
    "init": "nmf.init",
}


def _config_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, help="TOML config file or run manifest.json")
    parent.add_argument("--corpus", type=Path)
    parent.add_argument("--annotations", type=Path)
    parent.add_argument("--embeddings", type=Path)
    parent.add_argument("--stopwords", type=Path)
    parent.add_argument("--names", type=Path)
    parent.add_argument("--reference", type=Path)
    parent.add_argument("--output-dir", type=Path)
    parent.add_argument("--representation", choices=[k.value for k in RepresentationKind])
    parent.add_argument("--alpha-word", type=float)
    parent.add_argument("--alpha-ent", type=float)
    parent.add_argument("--alpha-word-grid", type=float, nargs="+")
    parent.add_argument("--alpha-ent-grid", type=float, nargs="+")
    parent.add_argument("--n-topics", type=int)
    parent.add_argument("--k-values", type=int, nargs="+")
    parent.add_argument("--n-top-words", type=int)
    parent.add_argument("--min-term-freq", type=int)
    parent.add_argument("--min-confidence", type=float)
    parent.add_argument("--window-size", type=int)
    parent.add_argument("--workers", type=int)
    parent.add_argument("--seed", type=int)
    parent.add_argument("--max-iter", type=int)
    parent.add_argument("--tol", type=float)
    parent.add_argument("--init", choices=[m.value for m in InitMethod if m is not InitMethod.CUSTOM])
    parent.add_argument("--no-cache", action="store_true", help="Skip the stage cache and the run registry")
    return parent


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline operation."""
    parser = argparse.ArgumentParser(
        prog="podtopics",
        description="Short-text topic modeling with CluWords/NEiCE representations and C_V coherence",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="Overrides LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True)
    parent = _config_parent()

    ingest = commands.add_parser("ingest", parents=[parent], help="Write vocabulary, entities and BoW matrix")
    ingest.add_argument("--out", type=Path, required=True)
    commands.add_parser("stats", parents=[parent], help="Print dataset statistics")
    represent = commands.add_parser("represent", parents=[parent], help="Dump the weighted document-term matrix")
    represent.add_argument("--out", type=Path, required=True)
    factorize = commands.add_parser("factorize", parents=[parent], help="Fit NMF and write topics and model")
    factorize.add_argument("--out", type=Path, required=True)
    score = commands.add_parser("score", parents=[parent], help="Score a topics.json against the reference")
    score.add_argument("--topics", type=Path, required=True)
    score.add_argument("--out", type=Path)
    commands.add_parser("run", parents=[parent], help="Run one grid point end to end")
    sweep = commands.add_parser("sweep", parents=[parent], help="Run the alpha x K grid")
    sweep.add_argument("--name", help="Sweep label in the registry")

    synth_cmd = commands.add_parser("synth", help="Generate a planted-topic corpus")
    synth_cmd.add_argument("--out", type=Path, required=True)
    for name, info in SynthOptions.model_fields.items():
        synth_cmd.add_argument(f"--{name.replace('_', '-')}", dest=name, type=type(info.default), default=None)
    synth_cmd.add_argument("--entity-prefix", default="ENTITY/")

    config_cmd = commands.add_parser("config", help="Configuration commands")
    config_commands = config_cmd.add_subparsers(dest="config_command", required=True)
    config_commands.add_parser("show", parents=[parent], help="Print every resolved setting")

    history = commands.add_parser("history", help="List recent runs from the registry")
    history.add_argument("--limit", type=int, default=20)
    history.add_argument("--sweep-id", type=int)
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file values overridden by flags."""
    overrides: dict[str, Any] = {}
    for dest, key in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    return PipelineConfig.load(args.config, overrides)


def _print_json(payload: Any) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_ingest(args: argparse.Namespace) -> None:
    config = load_config(args)
    ws = pipeline.prepare_workspace(config, use_cache=not args.no_cache, with_index=False)
    pipeline.write_ingest_outputs(ws.corpus, args.out)
    (args.out / "stats.json").write_text(ws.stats.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote ingestion outputs to %s", args.out)


def cmd_stats(args: argparse.Namespace) -> None:
    config = load_config(args)
    ws = pipeline.prepare_workspace(config, use_cache=False, with_index=False)
    _print_json(ws.stats.model_dump(mode="json"))


def cmd_represent(args: argparse.Namespace) -> None:
    config = load_config(args)
    _, representation = pipeline.represent(config, use_cache=not args.no_cache)
    dump_representation(representation, args.out)
    (args.out / "vocabulary.txt").write_text("".join(f"{t}\n" for t in representation.terms), encoding="utf-8")
    logger.info("Wrote %s matrix to %s", representation.kind.value, args.out)


def cmd_factorize(args: argparse.Namespace) -> None:
    config = load_config(args)
    model, topics = pipeline.factorize(config, use_cache=not args.no_cache)
    save_model(model, args.out / "model")
    (args.out / "topics.txt").write_text(pipeline.topics_text(topics), encoding="utf-8")
    (args.out / "topics.json").write_text(
        json.dumps([t.model_dump(mode="json") for t in topics], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    print(pipeline.topics_text(topics), end="")


def cmd_score(args: argparse.Namespace) -> None:
    config = load_config(args)
    topics = pipeline.read_topics(args.topics)
    report = pipeline.score_topics(config, topics, use_cache=not args.no_cache)
    if args.out:
        args.out.write_text(report_json(report), encoding="utf-8")
    print(f"mean C_V: {report.mean_cv:.4f}")


def cmd_run(args: argparse.Namespace) -> None:
    config = load_config(args)
    record = pipeline.run_pipeline(config, use_cache=not args.no_cache)
    print(pipeline.topics_text(record.topics), end="")
    print(f"mean C_V: {record.coherence.mean_cv:.4f} ({record.output_dir})")


def cmd_sweep(args: argparse.Namespace) -> None:
    config = load_config(args)
    result = pipeline.sweep(config, use_cache=not args.no_cache, name=args.name)
    print(pipeline.sweep_table(result), end="")
    failed = sum(1 for r in result.records if r.error)
    if failed:
        logger.warning("%d of %d grid points failed", failed, len(result.records))


def cmd_synth(args: argparse.Namespace) -> None:
    values = {name: getattr(args, name) for name in SynthOptions.model_fields if getattr(args, name) is not None}
    try:
        options = SynthOptions(**values)
    except ValueError as exc:
        raise ConfigError(f"invalid synth options: {exc}") from exc
    paths = synth.write_synthetic(synth.generate(options), args.out, entity_prefix=args.entity_prefix)
    for role, path in paths.items():
        print(f"{role}\t{path}")


def cmd_config(args: argparse.Namespace) -> None:
    if args.config is None and args.corpus is None:
        # Defaults only; the corpus path has none
        _print_json(PipelineConfig.model_construct(corpus_path=None).snapshot())
        return
    _print_json(load_config(args).snapshot())


def cmd_history(args: argparse.Namespace) -> None:
    init_db()
    with get_db() as db:
        runs = registry.list_runs(db, limit=args.limit, sweep_id=args.sweep_id)
        for run in runs:
            mean_cv = "-" if run.mean_cv is None else f"{run.mean_cv:.4f}"
            print("\t".join([
                str(run.id),
                run.created_at.isoformat() if run.created_at else "-",
                run.representation.value,
                "-" if run.alpha_word is None else f"{run.alpha_word:g}",
                "-" if run.alpha_ent is None else f"{run.alpha_ent:g}",
                str(run.n_topics),
                run.status.value,
                mean_cv,
                run.output_dir or "-",
            ]))


COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "represent": cmd_represent,
    "factorize": cmd_factorize,
    "score": cmd_score,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "config": cmd_config,
    "history": cmd_history,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run the subcommand and map errors to exit codes.

    Returns:
        0 on success, 1 for usage or configuration errors, 2 for data errors,
        3 for numerical failures
    """
    settings = get_settings()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=(args.log_level or settings.LOG_LEVEL).upper(), format=LOG_FORMAT)

    try:
        COMMANDS[args.command](args)
    except PodtopicsError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        if settings.DEBUG:
            traceback.print_exc()
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
