"""Command-line entry point: ``scenecraft <command> [flags]``.

Exit codes: 0 success, 1 other failure, 2 configuration or usage error,
3 backend failure, 4 corrupted run directory, 5 incomplete run. Any
nonzero exit writes exactly one JSON line to stderr with the code, error
kind and message (plus the pipeline stage when known).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ._util import atomic_write_text, write_json
from .analysis import (
    ablation_table,
    assign_tiers,
    bias_gap,
    emit_report,
    load_corpus,
    stratified_summary,
)
from .backends import BackendSet
from .backends.config import backend_configs
from .errors import (
    BackendError,
    ConfigError,
    CorruptedClipError,
    CorruptedRunError,
    IncompleteRunError,
    InvalidInputError,
    PipelineError,
    ScenecraftError,
)
from .evaluation import REPORT_FILE, evaluate_ablation, evaluate_run
from .orchestrator import (
    RunConfig,
    load_config_file,
    read_run_config,
    run_ablation_batch,
    run_pipeline,
)

log = logging.getLogger("scenecraft")

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_BACKEND, EXIT_CORRUPTED, EXIT_INCOMPLETE = 0, 1, 2, 3, 4, 5

DEMO_THEMES = {
    ("western", "fantasy"): (
        "a knight and a dragon share a lantern-lit tavern",
        "an elven archer races a storm across misty highlands",
        "a wizard's apprentice loses a spellbook in a frozen castle",
        "a pirate crew hunts a glowing whale off a rocky coast",
    ),
    ("indian", "realistic"): (
        "a chai seller and a schoolgirl chase a kite through a Varanasi ghat",
        "a fisherman mends nets at dawn in a Kerala backwater village",
        "two sisters prepare rangoli before Diwali in a Jaipur courtyard",
        "a rickshaw driver guides a lost tourist through a Kolkata market",
    ),
}
DEMO_SCENE_SECONDS = 2.0


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, CliError):
        return exc.code
    if isinstance(exc, IncompleteRunError):
        return EXIT_INCOMPLETE
    if isinstance(exc, (CorruptedRunError, CorruptedClipError)):
        return EXIT_CORRUPTED
    if isinstance(exc, (PipelineError, BackendError)):
        return EXIT_BACKEND
    if isinstance(exc, (ConfigError, InvalidInputError)):
        return EXIT_CONFIG
    return EXIT_FAILURE


def _error_line(code: int, exc: BaseException) -> str:
    doc = {"code": code, "error": type(exc).__name__, "message": str(exc)}
    stage = getattr(exc, "stage", None)
    if stage is not None:
        doc["stage"] = stage
    scene = getattr(exc, "scene_index", None)
    if scene is not None:
        doc["scene"] = scene
    return json.dumps(doc, ensure_ascii=False)


# -- commands ----------------------------------------------------------------------

def _ablation_flag(value: str) -> str:
    return value.replace("-", "_")


def cmd_generate(args) -> int:
    data = load_config_file(args.config)
    config = RunConfig.from_dict(
        data, user_prompt=args.prompt, output_dir=str(args.out), ablation=args.ablation, seed=args.seed
    )
    state = run_pipeline(config)
    log.info("run finished at stage %s", state.describe())
    print(Path(args.out))
    return EXIT_OK


def _evaluation_backends(config_path, seed=None) -> BackendSet:
    data = load_config_file(config_path)
    return BackendSet(backend_configs(data.get("backends"), seed=seed))


def cmd_evaluate(args) -> int:
    if args.frames_per_scene is not None and args.frames_per_scene < 1:
        raise ConfigError("--frames-per-scene must be >= 1")
    read_run_config(args.run)
    backends = _evaluation_backends(args.config)
    evaluate_run(args.run, backends, frames_per_scene=args.frames_per_scene)
    print(Path(args.run) / REPORT_FILE)
    return EXIT_OK


def _write_analysis(out_dir: Path, name: str, reports, **tables) -> Path:
    target = out_dir / "analysis"
    atomic_write_text(target / f"{name}.json", emit_report(reports, "json", **tables))
    atomic_write_text(target / f"{name}.md", emit_report(reports, "markdown", **tables))
    return target / f"{name}.json"


def cmd_ablate(args) -> int:
    data = load_config_file(args.config)
    config = RunConfig.from_dict(data, user_prompt=args.prompt, output_dir=str(args.out))
    backends = BackendSet(config.backends)
    run_ablation_batch(config, args.out, backends)
    reports = evaluate_ablation(args.out, backends)
    table = ablation_table([reports["full"]], [reports["no_character_viz"]], [reports["no_seed_frame"]])
    path = _write_analysis(Path(args.out), "ablation", list(reports.values()), ablation=table)
    print(path)
    return EXIT_OK


def _tag_pair(value: str) -> tuple[str, str]:
    parts = [p.strip() for p in value.replace(":", ",").split(",")]
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected two tags as 'a,b'")
    return parts[0], parts[1]


def cmd_report(args) -> int:
    tag_a, tag_b = args.group_by
    corpus = load_corpus(args.corpus)
    if not corpus:
        raise ConfigError("corpus manifest lists no videos")
    for tag in (tag_a, tag_b):
        if not any(tag in e.tags for e in corpus):
            raise ConfigError(f"no corpus entry is tagged {tag!r}")
    corpus = assign_tiers(corpus)
    bias = bias_gap(corpus, tag_a, tag_b)
    strat = stratified_summary(corpus, tag_a, tag_b)
    path = _write_analysis(Path(args.out), f"bias_{tag_a}_vs_{tag_b}", [e.report for e in corpus],
                           bias=bias, stratified=strat)
    print(path)
    return EXIT_OK


def demo_prompts(size: int, seed: int) -> list[tuple[str, list[str]]]:
    """``size`` prompts alternating between the two demo tag groups."""
    groups = list(DEMO_THEMES.items())
    out = []
    for i in range(size):
        tags, prompts = groups[i % 2]
        j = (i // 2 + seed) % len(prompts)
        out.append((f"{prompts[j]} (take {i // 2 + 1})", list(tags)))
    return out


def cmd_demo_corpus(args) -> int:
    if args.size < 1:
        raise ConfigError("--size must be >= 1")
    out = Path(args.out)
    backends_spec = {"default": {"kind": "mock", "mock_seed": args.seed}}
    manifest = []
    for i, (prompt, tags) in enumerate(demo_prompts(args.size, args.seed)):
        video_id = f"video_{i:03d}"
        rel = f"runs/{video_id}"
        config = RunConfig.from_dict(
            {"backends": backends_spec, "max_scene_seconds": DEMO_SCENE_SECONDS},
            user_prompt=prompt, output_dir=str(out / rel), corpus_tags=tags,
        )
        run_pipeline(config)
        evaluate_run(out / rel, video_id=video_id)
        manifest.append({"video_id": video_id, "run_dir": rel, "tags": tags})
    write_json(out / "corpus.json", manifest)
    print(out / "corpus.json")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_CONFIG, f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scenecraft", description="Blueprint-driven multi-scene video pipeline and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="run the pipeline for one prompt")
    p.add_argument("--prompt", required=True)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--ablation", type=_ablation_flag, choices=["full", "no_character_viz", "no_seed_frame"],
                   help="full | no-character-viz | no-seed-frame")
    p.add_argument("--seed", type=int, help="override every mock backend seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score a finished run")
    p.add_argument("--run", required=True, type=Path)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--frames-per-scene", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run and score all three configurations on one blueprint")
    p.add_argument("--prompt", required=True)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="group gap and motion-stratified tables for a corpus")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--group-by", required=True, type=_tag_pair, help="two tags, 'a,b'; gaps are b minus a")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("demo-corpus", help="generate and score a small tagged mock corpus")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--size", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo_corpus)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        logging.captureWarnings(True)
        return args.func(args)
    except (CliError, ScenecraftError) as exc:
        code = _exit_code(exc)
        print(_error_line(code, exc), file=sys.stderr)
        return code
    except OSError as exc:
        print(_error_line(EXIT_FAILURE, exc), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
