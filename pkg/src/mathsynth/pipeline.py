"""End-to-end data-synthesis run: augment, back-translate, solve, filter.

Produces a fresh output tree per run:

    s1.jsonl .. sK.jsonl      per-round augmented solutions
    s_aug.jsonl               deduplicated union of all rounds
    q_aug.jsonl               back-translated questions
    augdata.jsonl             retained (question, solution) pairs
    verifications.jsonl       verification records with verdicts
    manifest.json             stage counts and drop reasons

With the mock backend and a fixed seed the whole tree is byte-reproducible.
"""

from __future__ import annotations

import logging
from pathlib import Path

from .augment import AugConfig, AugTemplate, iterate
from .backtranslate import backtranslate
from .config import Settings
from .corpus import (
    DatasetManifest,
    DatasetTag,
    NLSolution,
    load_records,
    save_records,
)
from .executor import ExecutorConfig
from .gateway import Gateway, HttpBackend, RetryPolicy
from .mockmodel import PipelineMockModel
from .solver import SolveConfig
from .verify import ConsistencyMode, FilterConfig, filter_dataset

logger = logging.getLogger(__name__)


def build_gateway(settings: Settings) -> Gateway:
    gateway = Gateway(
        parallelism=settings.parallelism,
        retry=RetryPolicy(
            max_retries=settings.max_retries, base_delay=settings.retry_base_delay
        ),
    )
    if settings.backend == "mock":
        gateway.bind_all(PipelineMockModel(seed=settings.seed))
    elif settings.backend == "http":
        if not settings.endpoint:
            raise ValueError("http backend requires an endpoint")
        gateway.bind_all(
            HttpBackend(
                endpoint=settings.endpoint,
                model=settings.model or "default",
                api_token=settings.api_token or None,
            )
        )
    else:
        raise ValueError(f"unknown backend {settings.backend!r}")
    return gateway


def build_aug_config(settings: Settings) -> AugConfig:
    templates = (
        tuple(AugTemplate(t) for t in settings.templates)
        if settings.templates
        else tuple(AugTemplate)
    )
    return AugConfig(
        rounds=settings.rounds,
        templates=templates,
        fan_out=settings.fan_out,
        temperature=settings.augment_temperature,
        seed=settings.seed,
    )


def build_solve_config(settings: Settings) -> SolveConfig:
    return SolveConfig(
        max_cells=settings.max_cells,
        max_calls=settings.max_calls,
        temperature=settings.solve_temperature,
        max_tokens=settings.max_tokens,
    )


def build_executor_config(settings: Settings) -> ExecutorConfig:
    return ExecutorConfig(
        cell_timeout=settings.cell_timeout,
        session_budget=settings.session_budget,
        output_cap=settings.output_cap,
    )


def build_filter_config(settings: Settings) -> FilterConfig:
    return FilterConfig(
        n_candidates=settings.n_candidates,
        consistency_mode=ConsistencyMode(settings.consistency_mode),
        require_rederived_match=settings.require_rederived_match,
        temperature=settings.solve_temperature,
    )


def run_pipeline(
    seed_solutions_path: str | Path,
    out_dir: str | Path,
    settings: Settings,
    dataset_tag: DatasetTag = DatasetTag.OTHER,
) -> DatasetManifest:
    """Chain augmentation, back-translation, solving, and filtering."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gateway = build_gateway(settings)

    seeds = [r for r in load_records(seed_solutions_path) if isinstance(r, NLSolution)]
    if not seeds:
        raise ValueError(f"no seed solutions found in {seed_solutions_path}")
    logger.info("loaded %d seed solutions", len(seeds))

    round_counts: dict[int, int] = {}

    def persist_round(round_number: int, solutions: list[NLSolution]) -> None:
        round_counts[round_number] = len(solutions)
        save_records(out / f"s{round_number}.jsonl", solutions)

    aug_config = build_aug_config(settings)
    augmented = iterate(seeds, aug_config, gateway, on_round=persist_round)
    save_records(out / "s_aug.jsonl", augmented)
    logger.info("augmented union: %d solutions", len(augmented))

    bt = backtranslate(
        augmented,
        gateway,
        temperature=settings.backtranslate_temperature,
        dataset_tag=dataset_tag,
    )
    save_records(out / "q_aug.jsonl", bt.questions)
    logger.info(
        "back-translated %d questions (%d lenient parses, %d skipped)",
        len(bt.questions),
        bt.lenient_count,
        bt.skipped,
    )

    outcome = filter_dataset(
        bt.questions,
        gateway,
        build_filter_config(settings),
        build_solve_config(settings),
        build_executor_config(settings),
    )
    save_records(out / "augdata_questions.jsonl", outcome.retained_questions())
    save_records(out / "augdata.jsonl", [s for _, s in outcome.pairs])
    save_records(out / "verifications.jsonl", outcome.records)

    manifest = outcome.manifest
    manifest.record_stage("seed_solutions", len(seeds))
    for round_number, count in round_counts.items():
        manifest.record_stage(f"augment_round_{round_number}", count)
    manifest.record_stage("augmented_union", len(augmented))
    manifest.record_stage("backtranslated_questions", len(bt.questions))
    if bt.lenient_count:
        manifest.record_note("lenient_problem_parses", bt.lenient_count)
    if bt.skipped:
        manifest.record_note("backtranslation_skips", bt.skipped)
    manifest.write(out / "manifest.json")
    logger.info("retained %d verified pairs", len(outcome.pairs))
    return manifest
