import logging
import random
from fractions import Fraction

import pytest

from mathsynth.answers import NormalizedAnswer, normalize_answer
from mathsynth.corpus import Question, QuestionOrigin, Verdict
from mathsynth.gateway import GenerationRequest
from mathsynth.inference import (
    CostLedger,
    InferenceConfig,
    Strategy,
    TieBreak,
    evaluate,
    majority_answer,
    majority_vote,
    render_sweep_table,
    run_verified_episode,
    solve_greedy,
    sweep,
    verified_inference,
)
from mathsynth.mockmodel import MockBackend
from conftest import make_gateway, text_solver_backend


def ans(raw: str) -> NormalizedAnswer:
    return normalize_answer(raw)


# -- majority answer core -------------------------------------------------------


def test_majority_simple():
    assert majority_answer([ans("4"), ans("4"), ans("7")]).value == Fraction(4)


def test_tie_first_seen():
    assert majority_answer([ans("4"), ans("7")]).value == Fraction(4)


def test_tie_lexicographic():
    result = majority_answer([ans("7"), ans("4")], TieBreak.LEXICOGRAPHIC)
    assert result.value == Fraction(4)


def test_majority_ignores_missing_answers():
    assert majority_answer([None, ans("9"), None]).value == Fraction(9)
    assert majority_answer([None, None]) is None


def test_majority_groups_by_equality_not_identity():
    # 0.5 and 1/2 belong to the same group.
    result = majority_answer([ans("0.5"), ans("1/2"), ans("3")])
    assert result is not None
    assert float(result.value) == pytest.approx(0.5)


# -- episode core ----------------------------------------------------------------


def test_episode_correct_first_round():
    answer, generations = run_verified_episode(
        solve=lambda attempt: ans("5"),
        verify=lambda a, r: Verdict.CORRECT,
        max_rounds=2,
    )
    assert answer.value == Fraction(5)
    assert generations == 2  # 1 solve + 1 verify


def test_episode_wrong_then_correct():
    answers = [ans("3"), ans("5")]
    verdicts = [Verdict.WRONG, Verdict.CORRECT]
    answer, generations = run_verified_episode(
        solve=lambda attempt: answers[attempt],
        verify=lambda a, r: verdicts[r],
        max_rounds=2,
    )
    assert answer.value == Fraction(5)
    assert generations == 4  # solve, verify, solve, verify


def test_episode_exhausts_budget_with_final_resolve():
    calls = {"solves": 0, "verifies": 0}

    def solve(attempt: int):
        calls["solves"] += 1
        return ans(str(attempt))

    def verify(a, r):
        calls["verifies"] += 1
        return Verdict.WRONG

    answer, generations = run_verified_episode(solve, verify, max_rounds=2)
    assert calls == {"solves": 3, "verifies": 2}
    assert generations == 5
    assert answer.value == Fraction(2)  # the final, unverified attempt


def test_episode_indeterminate_stops():
    answer, generations = run_verified_episode(
        solve=lambda attempt: ans("8"),
        verify=lambda a, r: Verdict.INDETERMINATE,
        max_rounds=5,
    )
    assert answer.value == Fraction(8)
    assert generations == 2


# -- gateway-facing strategies ----------------------------------------------------


def question_with_token(i: int) -> Question:
    return Question.make(f"Q[{i}] scenario {i}?", QuestionOrigin.SEED)


def test_greedy_deterministic_and_unit_cost():
    backend = text_solver_backend({"0": ["5"]})
    gateway = make_gateway(backend)
    question = question_with_token(0)
    first = solve_greedy(question, gateway)
    second = solve_greedy(question, gateway)
    assert first.answer.value == second.answer.value == Fraction(5)
    assert first.generations == 1


def test_greedy_ledger_n_times_exactly_one():
    backend = text_solver_backend({str(i): ["7"] for i in range(10)})
    gateway = make_gateway(backend)
    ledger = CostLedger()
    for i in range(10):
        outcome = solve_greedy(question_with_token(i), gateway)
        ledger.merge(outcome.ledger)
    assert ledger.n_times() == 1.0
    assert ledger.total == backend.call_count == 10


def test_greedy_incomplete_has_no_answer():
    backend = MockBackend(handler=lambda r: "no numerals at all\n")
    outcome = solve_greedy(question_with_token(0), make_gateway(backend))
    assert outcome.answer is None


def test_vote_counts_k_generations():
    backend = text_solver_backend({"0": ["4", "4", "7"]})
    gateway = make_gateway(backend)
    outcome = majority_vote(question_with_token(0), 3, gateway)
    assert outcome.answer.value == Fraction(4)
    assert outcome.generations == 3
    assert backend.call_count == 3


def test_vote_k1_equals_single_sample():
    backend = text_solver_backend({"0": ["4", "9"]})
    gateway = make_gateway(backend)
    vote = majority_vote(question_with_token(0), 1, gateway)
    assert vote.answer.value == Fraction(4)  # sample_index 0 either way
    assert vote.generations == 1


def test_vote_all_incomplete():
    backend = MockBackend(handler=lambda r: "nothing here\n")
    outcome = majority_vote(question_with_token(0), 3, make_gateway(backend))
    assert outcome.answer is None
    assert outcome.generations == 3


def verified_backend(solve_answers: list[str], verdict_texts: list[str]) -> MockBackend:
    """Solve answers indexed by sample; verify responses indexed by sample."""

    def handler(request: GenerationRequest) -> str:
        if request.prompt.startswith("**Question**:"):
            text = verdict_texts[min(request.sample_index, len(verdict_texts) - 1)]
            return text
        answer = solve_answers[min(request.sample_index, len(solve_answers) - 1)]
        return f"The answer is $\\boxed{{{answer}}}$.\n"

    return MockBackend(handler=handler)


CORRECT_TEXT = "Thus, our answer is verified and correct.\n"
WRONG_TEXT = "It seems there was an error in our calculations.\n"


def test_verified_inference_floor_case():
    backend = verified_backend(["5"], [CORRECT_TEXT])
    outcome = verified_inference(question_with_token(0), 2, make_gateway(backend))
    assert outcome.answer.value == Fraction(5)
    assert outcome.generations == 2
    assert backend.call_count == 2


def test_verified_inference_wrong_then_correct():
    backend = verified_backend(["3", "5"], [WRONG_TEXT, CORRECT_TEXT])
    outcome = verified_inference(question_with_token(0), 2, make_gateway(backend))
    assert outcome.answer.value == Fraction(5)
    assert outcome.generations == 4
    assert backend.call_count == 4


def test_verified_inference_always_correct_matches_greedy():
    questions = [question_with_token(i) for i in range(6)]
    answers = {str(i): [str(10 + i)] for i in range(6)}
    greedy_gateway = make_gateway(text_solver_backend(answers))
    greedy = [solve_greedy(q, greedy_gateway).answer for q in questions]

    def handler(request: GenerationRequest) -> str:
        if request.prompt.startswith("**Question**:"):
            return CORRECT_TEXT
        import re

        qid = re.search(r"Q\[(\d+)\]", request.prompt).group(1)
        return f"The answer is $\\boxed{{{answers[qid][0]}}}$.\n"

    backend = MockBackend(handler=handler)
    gateway = make_gateway(backend)
    ledger = CostLedger()
    verified = []
    for question in questions:
        outcome = verified_inference(question, 2, gateway)
        verified.append(outcome.answer)
        ledger.merge(outcome.ledger)
    assert [a.value for a in verified] == [a.value for a in greedy]
    assert ledger.n_times() == 2.0  # fixed 1 solve + 1 verify offset


def test_verified_inference_gateway_error_is_indeterminate(no_sleep_retry):
    # Every verify call dies in transport; solve succeeds. The failed
    # verification reads as Indeterminate: keep the answer, stop the loop.
    def handler(request: GenerationRequest) -> str:
        return "The answer is $\\boxed{5}$.\n"

    class FailingVerify(MockBackend):
        def complete(self, request):
            if request.prompt.startswith("**Question**:"):
                from mathsynth.gateway import TransientBackendError

                raise TransientBackendError("verifier offline")
            return super().complete(request)

    gateway = make_gateway(FailingVerify(handler=handler), retry=no_sleep_retry)
    outcome = verified_inference(question_with_token(0), 2, gateway)
    assert outcome.answer.value == Fraction(5)
    assert outcome.generations == 2


# -- Monte Carlo / enumeration oracles ---------------------------------------------


def test_vote_accuracy_matches_closed_form_mid_scale():
    # Synthetic solver: correct w.p. 0.6, distinct wrong answers; ties must
    # not land on the correct answer, so the correct value sorts last.
    rng = random.Random(97)
    p = 0.6
    k = 3
    n = 20000
    correct = ans("999999")
    hits = 0
    for _ in range(n):
        answers = []
        for _ in range(k):
            if rng.random() < p:
                answers.append(correct)
            else:
                answers.append(ans(str(rng.randint(100000, 899999))))
        winner = majority_answer(answers, TieBreak.LEXICOGRAPHIC)
        if winner is not None and winner.value == correct.value:
            hits += 1
    closed_form = p**3 + 3 * p**2 * (1 - p)
    assert hits / n == pytest.approx(closed_form, abs=0.015)


def enumerate_episode(p: float, max_rounds: int) -> tuple[float, float]:
    """Exhaustive episode-tree enumeration: (accuracy, expected generations).

    Independent oracle: walks every correct/wrong attempt sequence with its
    probability instead of running the episode loop.
    """

    def walk(round_number: int, prob: float, answer_correct: bool, gens: int):
        if round_number > max_rounds:
            return [(prob, answer_correct, gens)]
        leaves = []
        # Verify the current answer (perfect verifier): +1 generation.
        if answer_correct:
            leaves.append((prob, True, gens + 1))
        else:
            # Wrong verdict: re-solve (+1) and recurse into the next round.
            for correct_next in (True, False):
                branch = prob * (p if correct_next else 1 - p)
                leaves.extend(walk(round_number + 1, branch, correct_next, gens + 2))
        return leaves

    leaves = []
    for first_correct in (True, False):
        prob = p if first_correct else 1 - p
        leaves.extend(walk(1, prob, first_correct, 1))
    accuracy = sum(prob for prob, ok, _ in leaves if ok)
    expected_gens = sum(prob * gens for prob, _, gens in leaves)
    assert sum(prob for prob, _, _ in leaves) == pytest.approx(1.0)
    return accuracy, expected_gens


def test_episode_enumeration_against_closed_form():
    accuracy, gens = enumerate_episode(0.5, 2)
    assert accuracy == pytest.approx(1 - 0.5**3)
    assert gens == pytest.approx(0.5 * 2 + 0.25 * 4 + 0.25 * 5)


def test_verified_episode_monte_carlo_mid_scale():
    rng = random.Random(31)
    p = 0.5
    n = 20000
    expected_accuracy, expected_gens = enumerate_episode(p, 2)
    hits = 0
    total_gens = 0
    for _ in range(n):
        outcomes = [rng.random() < p for _ in range(4)]

        def solve(attempt: int):
            return ans("1") if outcomes[attempt] else ans("0")

        def verify(answer, round_number):
            return Verdict.CORRECT if answer.value == Fraction(1) else Verdict.WRONG

        answer, gens = run_verified_episode(solve, verify, max_rounds=2)
        hits += answer.value == Fraction(1)
        total_gens += gens
    assert hits / n == pytest.approx(expected_accuracy, abs=0.015)
    assert total_gens / n == pytest.approx(expected_gens, abs=0.03)


# -- evaluate ----------------------------------------------------------------------


def test_evaluate_all_correct():
    backend = text_solver_backend({str(i): ["3"] for i in range(5)})
    dataset = [(question_with_token(i), "3") for i in range(5)]
    report = evaluate(dataset, InferenceConfig(), make_gateway(backend))
    assert report.accuracy == 1.0
    assert report.n_times == 1.0


def test_evaluate_no_answers():
    backend = MockBackend(handler=lambda r: "nothing\n")
    dataset = [(question_with_token(i), "3") for i in range(4)]
    report = evaluate(dataset, InferenceConfig(), make_gateway(backend))
    assert report.accuracy == 0.0


def test_evaluate_skips_unparseable_gold(caplog):
    backend = text_solver_backend({"0": ["3"], "1": ["3"]})
    dataset = [(question_with_token(0), "3"), (question_with_token(1), "   ")]
    with caplog.at_level(logging.WARNING):
        report = evaluate(dataset, InferenceConfig(), make_gateway(backend))
    assert report.skipped == 1
    assert len(report.traces) == 1
    assert "unparseable gold" in caplog.text


def test_sweep_table_shape():
    backend = text_solver_backend({str(i): ["3"] for i in range(3)})
    dataset = [(question_with_token(i), "3") for i in range(3)]
    configs = [
        InferenceConfig(strategy=Strategy.GREEDY),
        InferenceConfig(strategy=Strategy.VOTING, k_paths=3),
    ]
    reports = sweep(dataset, configs, make_gateway(backend))
    table = render_sweep_table(reports)
    assert "greedy" in table and "vote:3" in table
    assert reports[0].n_times == 1.0
    assert reports[1].n_times == 3.0


def test_full_stack_voting_tracks_closed_form():
    # Drives majority_vote end to end (gateway, solve loop, extraction) with
    # a Bernoulli(p) synthetic solver whose wrong answers sort below the
    # correct one, then compares against the p^3 + 3p^2(1-p) oracle.
    import hashlib

    p = 0.6
    n = 400
    correct_value = 999999

    def handler(request: GenerationRequest) -> str:
        digest = hashlib.blake2b(
            f"{request.prompt}|{request.sample_index}".encode(), digest_size=8
        ).digest()
        draw = int.from_bytes(digest[:4], "big") / 2**32
        if draw < p:
            answer = correct_value
        else:
            answer = 100000 + int.from_bytes(digest[4:], "big") % 700000
        return f"The answer is $\\boxed{{{answer}}}$.\n"

    gateway = make_gateway(MockBackend(handler=handler))
    hits = 0
    for i in range(n):
        question = Question.make(f"synthetic voting scenario {i}?", QuestionOrigin.SEED)
        outcome = majority_vote(question, 3, gateway, tie_break=TieBreak.LEXICOGRAPHIC)
        hits += outcome.answer is not None and outcome.answer.value == Fraction(correct_value)
    closed_form = p**3 + 3 * p**2 * (1 - p)
    # 3 sigma at n=400 is ~0.072.
    assert hits / n == pytest.approx(closed_form, abs=0.075)


def test_mock_sample_index_can_diverge():
    backend = MockBackend(script={("P", 0): "first", ("P", 1): "second"})
    gateway = make_gateway(backend)
    from mathsynth.gateway import GenerationRequest as GR, ModelRole

    a = gateway.generate(GR(ModelRole.SOLVER_VERIFIER, "P", sample_index=0))
    b = gateway.generate(GR(ModelRole.SOLVER_VERIFIER, "P", sample_index=1))
    assert (a.text, b.text) == ("first", "second")


def test_evaluate_reports_per_dataset_breakdown():
    from mathsynth.corpus import DatasetTag

    backend = text_solver_backend({"0": ["3"], "1": ["3"], "2": ["9"]})
    questions = [
        Question.make("Q[0] easy?", QuestionOrigin.SEED, dataset_tag=DatasetTag.GSM8K_LIKE),
        Question.make("Q[1] easy?", QuestionOrigin.SEED, dataset_tag=DatasetTag.GSM8K_LIKE),
        Question.make("Q[2] hard?", QuestionOrigin.SEED, dataset_tag=DatasetTag.MATH_LIKE),
    ]
    dataset = [(q, "3") for q in questions]
    report = evaluate(dataset, InferenceConfig(), make_gateway(backend))
    by_tag = report.by_tag()
    assert by_tag["gsm8k-like"] == (1.0, 1.0)
    assert by_tag["math-like"] == (0.0, 1.0)
    table = render_sweep_table([report])
    assert "gsm8k-like" in table and "math-like" in table and "overall" in table
