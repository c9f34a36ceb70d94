"""Command-line interface: one subcommand per pipeline stage.

Subcommands are thin adapters over module functions; running a stage here is
byte-identical to calling the module API with the same settings. Config
precedence is flags > environment > config file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .answers import answers_equal, normalize_answer
from .augment import AugConfig, AugTemplate, iterate
from .backtranslate import backtranslate
from .config import Settings
from .corpus import (
    NLSolution,
    Question,
    Verdict,
    load_records,
    save_records,
)
from .gateway import GatewayError
from .inference import InferenceConfig, Strategy, evaluate, render_sweep_table, sweep
from .metrics import render_metrics_table, tally
from .mockdata import load_gold
from .pipeline import (
    build_executor_config,
    build_filter_config,
    build_gateway,
    build_solve_config,
    run_pipeline,
)
from .solver import generate_solution
from .verify import filter_dataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BAD_INPUT = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_BAD_INPUT) -> None:
        super().__init__(message)
        self.code = code


def _require_file(path: str | Path) -> Path:
    resolved = Path(path)
    if not resolved.exists():
        raise CliError(f"input file not found: {resolved}")
    return resolved


def _settings_from(args: argparse.Namespace) -> Settings:
    config_path = getattr(args, "config", None)
    if config_path is not None:
        _require_file(config_path)
    overrides = {}
    for key in ("backend", "parallelism", "rounds", "fan_out", "n_candidates"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    # `augment` uses --seed for the seed-solutions path; its RNG seed flag
    # is --rng-seed (stored as seed_value).
    if getattr(args, "seed_flag_is_path", False):
        overrides["seed"] = getattr(args, "seed_value", None)
    else:
        overrides["seed"] = getattr(args, "seed", None)
    if getattr(args, "consistency", None):
        overrides["consistency_mode"] = args.consistency
    try:
        return Settings.resolve(config_path, overrides)
    except (ValueError, OSError) as exc:
        raise CliError(f"bad config: {exc}")


def _load_solutions(path: str | Path) -> list[NLSolution]:
    records = load_records(_require_file(path))
    solutions = [r for r in records if isinstance(r, NLSolution)]
    if not solutions:
        raise CliError(f"no solutions found in {path}")
    return solutions


def _load_questions(path: str | Path) -> list[Question]:
    records = load_records(_require_file(path))
    questions = [r for r in records if isinstance(r, Question)]
    if not questions:
        raise CliError(f"no questions found in {path}")
    return questions


def _parse_strategy(spec: str) -> InferenceConfig:
    name, _, arg = spec.partition(":")
    if name == "greedy":
        return InferenceConfig(strategy=Strategy.GREEDY)
    if name == "vote":
        return InferenceConfig(strategy=Strategy.VOTING, k_paths=int(arg or "3"))
    if name == "verify":
        return InferenceConfig(strategy=Strategy.VERIFIED, max_verify_rounds=int(arg or "2"))
    raise CliError(f"unknown strategy {spec!r} (expected greedy, vote:k, or verify:k)")


# -- subcommand handlers -----------------------------------------------------


def cmd_augment(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    seeds = _load_solutions(args.seed)
    if any(s.round != 0 for s in seeds):
        raise CliError(f"{args.seed} must contain round-0 solutions only")
    gateway = build_gateway(settings)
    if args.templates:
        templates = tuple(AugTemplate(t) for t in args.templates.split(","))
    elif settings.templates:
        templates = tuple(AugTemplate(t) for t in settings.templates)
    else:
        templates = tuple(AugTemplate)
    config = AugConfig(
        rounds=settings.rounds,
        templates=templates,
        fan_out=settings.fan_out,
        temperature=settings.augment_temperature,
        seed=settings.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def persist(round_number: int, solutions: list[NLSolution]) -> None:
        save_records(out / f"s{round_number}.jsonl", solutions)

    union = iterate(seeds, config, gateway, on_round=persist)
    count = save_records(out / "s_aug.jsonl", union)
    print(f"augmented union: {count} solutions -> {out / 's_aug.jsonl'}")
    return EXIT_OK


def cmd_backtranslate(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    solutions = _load_solutions(args.solutions)
    gateway = build_gateway(settings)
    result = backtranslate(
        solutions, gateway, temperature=settings.backtranslate_temperature
    )
    count = save_records(args.out, result.questions)
    print(
        f"back-translated {count} questions -> {args.out} "
        f"({result.lenient_count} lenient, {result.skipped} skipped)"
    )
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    questions = _load_questions(args.questions)
    gateway = build_gateway(settings)
    solve_config = build_solve_config(settings)
    executor_config = build_executor_config(settings)
    solutions = []
    for question in questions:
        for sample_index in range(args.n):
            temperature = settings.solve_temperature if args.n > 1 else 0.0
            solutions.append(
                generate_solution(
                    question,
                    gateway,
                    solve_config,
                    executor_config,
                    temperature=temperature,
                    sample_index=sample_index,
                )
            )
    count = save_records(args.out, solutions)
    print(f"solved {len(questions)} questions, {count} solutions -> {args.out}")
    return EXIT_OK


def cmd_filter(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    questions = _load_questions(args.questions)
    gateway = build_gateway(settings)
    outcome = filter_dataset(
        questions,
        gateway,
        build_filter_config(settings),
        build_solve_config(settings),
        build_executor_config(settings),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_records(out / "augdata_questions.jsonl", outcome.retained_questions())
    save_records(out / "augdata.jsonl", [s for _, s in outcome.pairs])
    save_records(out / "verifications.jsonl", outcome.records)
    outcome.manifest.write(out / "manifest.json")
    print(f"retained {len(outcome.pairs)} verified pairs -> {out}")
    return EXIT_OK


def _load_eval_dataset(
    questions_path: str | Path, gold_path: str | Path
) -> list[tuple[Question, str]]:
    questions = _load_questions(questions_path)
    gold = load_gold(_require_file(gold_path))
    dataset = []
    for question in questions:
        if question.id not in gold:
            logger.warning("no gold answer for %s; excluded", question.id)
            continue
        dataset.append((question, gold[question.id]))
    if not dataset:
        raise CliError(f"no (question, gold) pairs between {questions_path} and {gold_path}")
    return dataset


def _write_report(reports, path: str | Path) -> None:
    payload = {"strategies": [r.to_dict() for r in reports]}
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def cmd_infer(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    dataset = _load_eval_dataset(args.questions, args.gold)
    gateway = build_gateway(settings)
    config = _parse_strategy(args.strategy)
    report = evaluate(
        dataset,
        config,
        gateway,
        build_solve_config(settings),
        build_executor_config(settings),
    )
    if args.report:
        _write_report([report], args.report)
    if args.trace:
        with Path(args.trace).open("w", encoding="utf-8") as handle:
            for trace in report.traces:
                row = {
                    "question_id": trace.question_id,
                    "dataset_tag": trace.dataset_tag,
                    "predicted": trace.predicted.display() if trace.predicted else None,
                    "gold": trace.gold.display(),
                    "correct": trace.correct,
                    "generations": trace.generations,
                }
                handle.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(render_sweep_table([report]))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    dataset = _load_eval_dataset(args.questions, args.gold)
    gateway = build_gateway(settings)
    configs = [_parse_strategy(s) for s in args.strategies.split(",")]
    reports = sweep(
        dataset,
        configs,
        gateway,
        build_solve_config(settings),
        build_executor_config(settings),
    )
    if args.report:
        _write_report(reports, args.report)
    print(render_sweep_table(reports))
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    gold = load_gold(_require_file(args.gold))
    per_tag: dict[str, list[tuple[Verdict, bool]]] = {}
    indeterminate = 0
    missing_gold = 0
    with _require_file(args.verdicts).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                verdict = Verdict(row["verdict"])
                question_id = row["question_id"]
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise CliError(f"{args.verdicts}: bad row on line {lineno}: {exc}")
            if verdict is Verdict.INDETERMINATE:
                indeterminate += 1
                continue
            if question_id not in gold:
                missing_gold += 1
                continue
            predicted = normalize_answer(str(row.get("predicted_answer", "")))
            actual = answers_equal(predicted, normalize_answer(gold[question_id]))
            tag = row.get("dataset_tag", "other")
            per_tag.setdefault(tag, []).append((verdict, actual))
    counts = {tag: tally(rows) for tag, rows in sorted(per_tag.items())}
    if not counts:
        raise CliError("no scorable verdict rows found")
    table = render_metrics_table(counts)
    print(table)
    if indeterminate or missing_gold:
        print(f"(excluded: {indeterminate} indeterminate, {missing_gold} without gold)")
    if args.report:
        payload = {
            tag: {
                "tp": c.tp,
                "fp": c.fp,
                "tn": c.tn,
                "fn": c.fn,
            }
            for tag, c in counts.items()
        }
        Path(args.report).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    settings = _settings_from(args)
    seed_solutions = _require_file(args.seed_solutions)
    manifest = run_pipeline(seed_solutions, args.out, settings)
    retained = manifest.stage_counts.get("verified_pairs", 0)
    print(f"pipeline complete: {retained} verified pairs -> {args.out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--backend", choices=["mock", "http"], help="generation backend")
    parser.add_argument("--parallelism", type=int, help="max in-flight generations")
    parser.add_argument("-v", "--verbose", action="store_true", help="verbose logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mathsynth",
        description="Synthetic math data pipeline: augment, back-translate, solve, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="iteratively augment round-0 solutions")
    p.add_argument("--seed", required=True, help="JSONL of round-0 seed solutions")
    p.add_argument("--rounds", type=int, help="augmentation rounds")
    p.add_argument("--templates", help="comma-separated template subset")
    p.add_argument("--fan-out", dest="fan_out", type=int, help="templates per solution per round")
    p.add_argument("--rng-seed", dest="seed_value", type=int, help="RNG seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_augment, seed_flag_is_path=True)

    p = sub.add_parser("backtranslate", help="turn solutions into new questions")
    p.add_argument("--solutions", required=True, help="JSONL of augmented solutions")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--out", required=True, help="output questions JSONL")
    p.set_defaults(func=cmd_backtranslate)

    p = sub.add_parser("solve", help="generate code-integrated solutions")
    p.add_argument("--questions", required=True, help="questions JSONL")
    p.add_argument("--n", type=int, default=1, help="samples per question")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--out", required=True, help="output solutions JSONL")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("filter", help="consistency + verification filtering")
    p.add_argument("--questions", required=True, help="questions JSONL")
    p.add_argument("--candidates", dest="n_candidates", type=int, help="candidates per question")
    p.add_argument(
        "--consistency", choices=["strict", "majority"], help="consistency filter mode"
    )
    p.add_argument(
        "--strict",
        action="store_const",
        const="strict",
        dest="consistency",
        help="shorthand for --consistency strict",
    )
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("infer", help="run one inference strategy with gold scoring")
    p.add_argument("--strategy", required=True, help="greedy, vote:k, or verify:k")
    p.add_argument("--questions", required=True, help="questions JSONL")
    p.add_argument("--gold", required=True, help="gold answers JSONL")
    p.add_argument("--report", help="write report JSON here")
    p.add_argument("--trace", help="write per-question trace JSONL here")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="compare several strategies on one dataset")
    p.add_argument(
        "--strategies",
        required=True,
        help="comma-separated strategy specs, e.g. greedy,vote:3,verify:2",
    )
    p.add_argument("--questions", required=True, help="questions JSONL")
    p.add_argument("--gold", required=True, help="gold answers JSONL")
    p.add_argument("--report", help="write report JSON here")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="verification-quality metrics table")
    p.add_argument("--verdicts", required=True, help="verdict rows JSONL")
    p.add_argument("--gold", required=True, help="gold answers JSONL")
    p.add_argument("--report", help="write raw confusion counts JSON here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pipeline", help="run augment -> backtranslate -> solve -> filter")
    p.add_argument("--seed-solutions", required=True, help="JSONL of round-0 seed solutions")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--rounds", type=int, help="augmentation rounds")
    p.add_argument("--fan-out", dest="fan_out", type=int, help="templates per solution per round")
    p.add_argument("--candidates", dest="n_candidates", type=int, help="candidates per question")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)

    for sub_parser in sub.choices.values():
        _add_common(sub_parser)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except GatewayError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
