"""Deterministic demo seed corpus in the toy grammar the mock model speaks.

Writes three JSONL files: seed questions, their round-0 solutions, and gold
answers. Useful for offline pipeline/inference runs against the mock
backend; the whole corpus is a pure function of (n, seed).
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from .corpus import DatasetTag, NLSolution, Question, QuestionOrigin, save_records
from .mockmodel import NAMES, NOUNS, ToyProblem


def make_demo_seed(
    n: int, seed: int = 0
) -> tuple[list[Question], list[NLSolution], dict[str, str]]:
    """Build n toy (question, solution) seed pairs plus gold answers by id."""
    rng = random.Random(seed)
    questions: list[Question] = []
    solutions: list[NLSolution] = []
    gold: dict[str, str] = {}
    seen: set[str] = set()
    while len(questions) < n:
        a = rng.randint(2, 60)
        b = rng.randint(2, 60)
        c = rng.randint(1, a + b - 1) if rng.random() < 0.4 else None
        problem = ToyProblem(a=a, b=b, c=c, noun=rng.choice(NOUNS))
        name = rng.choice(NAMES)
        question = Question.make(
            text=problem.question_text(name),
            origin=QuestionOrigin.SEED,
            dataset_tag=DatasetTag.GSM8K_LIKE,
        )
        if question.id in seen:  # identical draw; ids must stay unique
            continue
        seen.add(question.id)
        solution = NLSolution.seed(problem.solution_text(), question_id=question.id)
        questions.append(question)
        solutions.append(solution)
        gold[question.id] = str(problem.total)
    return questions, solutions, gold


def write_demo_seed(out_dir: str | Path, n: int = 20, seed: int = 0) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    questions, solutions, gold = make_demo_seed(n, seed)
    paths = {
        "questions": out / "seed_questions.jsonl",
        "solutions": out / "seed_solutions.jsonl",
        "gold": out / "gold.jsonl",
    }
    save_records(paths["questions"], questions)
    save_records(paths["solutions"], solutions)
    with paths["gold"].open("w", encoding="utf-8") as handle:
        for question in questions:
            row = {"question_id": question.id, "answer": gold[question.id]}
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
    return paths


def load_gold(path: str | Path) -> dict[str, str]:
    gold: dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            row = json.loads(line)
            gold[row["question_id"]] = str(row["answer"])
    return gold


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Write a deterministic demo seed corpus.")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--n", type=int, default=20, help="number of seed pairs")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed")
    args = parser.parse_args(argv)
    paths = write_demo_seed(args.out, args.n, args.seed)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
