import hashlib
import random

import pytest

from mathsynth.augment import (
    AugConfig,
    AugTemplate,
    augment_round,
    iterate,
    render_aug_prompt,
)
from mathsynth.corpus import NLSolution, normalized_text_key
from mathsynth.gateway import GenerationRequest, RetryPolicy
from mathsynth.mockmodel import MockBackend

from conftest import make_gateway


SEED_SOLUTION = NLSolution.seed("A pays $2 for each of 3 apples, so A pays $6 in total.")


def test_change_numbers_prompt_surface():
    prompt = render_aug_prompt(SEED_SOLUTION, AugTemplate.CHANGE_NUMBERS)
    assert prompt.startswith("Change the numbers in Solution.\nSolution:\n\n")
    assert SEED_SOLUTION.text in prompt
    assert prompt.count(SEED_SOLUTION.text) == 1
    assert prompt.endswith("You must change the numbers in the Solution to create a new solution.")


def test_all_templates_render_and_embed_once():
    expected_heads = {
        AugTemplate.REPLACE_OBJECTS_VERBS: "Replace the objects and verbs in Solution.",
        AugTemplate.ADD_EXTRA_STEP: (
            "Add an extra step to the solution so that it is more complicated."
        ),
        AugTemplate.CHANGE_NUMBERS: "Change the numbers in Solution.",
        AugTemplate.REPLACE_NUMBERS_VARIABLES: (
            "Replace the numbers and variables in Solution with different variables "
            "and numbers you pick randomly."
        ),
    }
    for template, head in expected_heads.items():
        prompt = render_aug_prompt(SEED_SOLUTION, template)
        assert prompt.splitlines()[0] == head
        assert prompt.count(SEED_SOLUTION.text) == 1


def test_empty_solution_rejected():
    with pytest.raises(ValueError):
        render_aug_prompt(NLSolution.seed("   "), AugTemplate.CHANGE_NUMBERS)


def test_substitution_is_single_pass():
    tricky = NLSolution.seed("contains the literal {solution} token")
    prompt = render_aug_prompt(tricky, AugTemplate.ADD_EXTRA_STEP)
    # The embedded "{solution}" from the solution text must not be re-expanded.
    assert prompt.count(tricky.text) == 1


def echo_backend(transform=None) -> MockBackend:
    def handler(request: GenerationRequest) -> str:
        source = request.prompt.partition("Solution:\n\n")[2].rsplit("\n\nYou must", 1)[0]
        return transform(request, source) if transform else source

    return MockBackend(handler=handler)


def marked_backend() -> MockBackend:
    """Appends a template+content marker so every rewrite is distinct."""

    def transform(request: GenerationRequest, source: str) -> str:
        tag = hashlib.blake2b(request.prompt.encode(), digest_size=4).hexdigest()
        return f"{source} [{tag}]"

    return echo_backend(transform)


def seeds(n: int) -> list[NLSolution]:
    return [NLSolution.seed(f"seed solution number {i}.") for i in range(n)]


def test_round_counts_and_provenance():
    gateway = make_gateway(marked_backend())
    prev = seeds(2)
    produced = augment_round(prev, AugConfig(rounds=1), gateway)
    assert len(produced) == 8  # 2 solutions x 4 templates
    parent_ids = {s.id for s in prev}
    for solution in produced:
        assert solution.round == 1
        assert solution.parent_solution_id in parent_ids
        assert solution.template_id in {t.value for t in AugTemplate}


def test_mixed_round_input_rejected():
    gateway = make_gateway(marked_backend())
    mixed = [seeds(1)[0], NLSolution.derived("x", 1, "p", "change_numbers")]
    with pytest.raises(ValueError, match="single input round"):
        augment_round(mixed, AugConfig(), gateway)


def test_failed_item_skipped():
    backend = marked_backend()
    prev = seeds(2)
    failing_prompt = render_aug_prompt(prev[0], AugTemplate.CHANGE_NUMBERS)
    backend.fail_first = {failing_prompt: 1}
    gateway = make_gateway(backend, retry=RetryPolicy(max_retries=0, sleep=lambda _: None))
    produced = augment_round(prev, AugConfig(), gateway)
    assert len(produced) == 7  # one skip, run continues


def test_iterate_single_round_is_dedup_of_round_one():
    gateway = make_gateway(marked_backend())
    s0 = seeds(3)
    union = iterate(s0, AugConfig(rounds=1), gateway)
    direct = augment_round(s0, AugConfig(rounds=1), gateway)
    assert [s.text for s in union] == [s.text for s in direct]


def test_echoing_mock_keeps_round_one_copies():
    gateway = make_gateway(echo_backend())
    s0 = seeds(2)
    union = iterate(s0, AugConfig(rounds=2), gateway)
    assert all(s.round == 1 for s in union)


def test_provenance_chain_reaches_seed_in_round_steps():
    gateway = make_gateway(marked_backend())
    s0 = seeds(2)
    rounds: dict[int, list[NLSolution]] = {0: s0}
    union = iterate(
        s0, AugConfig(rounds=3), gateway, on_round=lambda r, sols: rounds.__setitem__(r, sols)
    )
    by_id = {s.id: s for level in rounds.values() for s in level}
    for solution in union:
        steps = 0
        cursor = solution
        while cursor.parent_solution_id is not None:
            cursor = by_id[cursor.parent_solution_id]
            steps += 1
        assert steps == solution.round
        assert cursor.round == 0


def test_rounds_textually_distinct_marker_mock():
    def transform(request: GenerationRequest, source: str) -> str:
        return source + " >"

    gateway = make_gateway(echo_backend(transform))
    s0 = seeds(1)
    per_round: dict[int, list[str]] = {}
    iterate(
        s0,
        AugConfig(rounds=3, templates=(AugTemplate.CHANGE_NUMBERS,)),
        gateway,
        on_round=lambda r, sols: per_round.__setitem__(r, [s.text for s in sols]),
    )
    assert per_round[1][0] != s0[0].text
    assert per_round[2][0] != per_round[1][0]
    assert per_round[3][0] != per_round[2][0]


def test_fan_out_subsets_templates_deterministically():
    gateway = make_gateway(marked_backend())
    s0 = seeds(4)
    config = AugConfig(rounds=1, fan_out=2, seed=3)
    first = [s.text for s in augment_round(s0, config, gateway)]
    second = [s.text for s in augment_round(s0, config, gateway)]
    assert first == second
    assert len(first) == 8  # 4 solutions x fan_out 2


def test_total_round_failure_raises():
    backend = marked_backend()
    prev = seeds(1)
    for template in AugTemplate:
        backend.fail_first[render_aug_prompt(prev[0], template)] = 1
    gateway = make_gateway(backend, retry=RetryPolicy(max_retries=0, sleep=lambda _: None))
    with pytest.raises(RuntimeError, match="round 1 failed entirely"):
        iterate(prev, AugConfig(rounds=2), gateway)


def test_iterate_empty_seeds_yield_empty_union():
    assert iterate([], AugConfig(rounds=2), make_gateway(marked_backend())) == []


def brute_force_union(
    seed_texts: list[str], transform, rounds: int, templates: list[str]
) -> list[str]:
    """Independent union/dedup oracle over raw texts."""
    per_round: list[list[str]] = [list(seed_texts)]
    for _ in range(rounds):
        prev = per_round[-1]
        per_round.append([transform(text, t) for text in prev for t in templates])
    seen = set()
    union = []
    for level in per_round[1:]:
        for text in level:
            key = normalized_text_key(text)
            if key not in seen:
                seen.add(key)
                union.append(text)
    return union


def test_union_equals_brute_force_randomized():
    rng = random.Random(424242)
    template_pool = list(AugTemplate)
    for trial in range(20):
        n_seeds = rng.randint(1, 4)
        chosen = rng.sample(template_pool, rng.randint(1, 4))

        def transform(text: str, template_name: str, _trial=trial) -> str:
            digest = hashlib.blake2b(
                f"{_trial}|{template_name}|{text}".encode(), digest_size=3
            ).hexdigest()
            # Coarse buckets force cross-round duplicate collisions.
            return f"rewritten {int(digest, 16) % 19}"

        def handler(request: GenerationRequest) -> str:
            head = request.prompt.splitlines()[0]
            matching = [
                t for t in AugTemplate if request.prompt.startswith(t.prompt_template[:20])
            ]
            assert matching, head
            source = request.prompt.partition("Solution:\n\n")[2].rsplit("\n\nYou must", 1)[0]
            return transform(source, matching[0].value)

        gateway = make_gateway(MockBackend(handler=handler))
        s0 = [NLSolution.seed(f"trial {trial} seed {i}") for i in range(n_seeds)]
        union = iterate(s0, AugConfig(rounds=3, templates=tuple(chosen)), gateway)
        expected = brute_force_union(
            [s.text for s in s0], transform, 3, [t.value for t in chosen]
        )
        assert [s.text for s in union] == expected
