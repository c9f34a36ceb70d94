"""Synthetic math problem-solution pipeline.

Stages: iterative solution augmentation, question back-translation,
code-integrated solution generation with a sandboxed executor, and
verification-based filtering; plus evaluation-time inference strategies
(greedy, k-path majority voting, verified inference) and verification
metrics. Every stage runs against either an HTTP chat-completions backend
or a deterministic mock.
"""

from .answers import AnswerForm, NormalizedAnswer, answers_equal, normalize_answer
from .augment import AugConfig, AugTemplate, augment_round, iterate, render_aug_prompt
from .backtranslate import backtranslate, parse_new_problem, render_bt_prompt
from .corpus import (
    CodeIntegratedSolution,
    DatasetManifest,
    DatasetTag,
    ExecStatus,
    InvariantError,
    NLSolution,
    Question,
    QuestionOrigin,
    Segment,
    SegmentKind,
    SolutionStatus,
    VerificationRecord,
    Verdict,
    dedup_solutions,
    load_records,
    save_records,
)
from .executor import ExecSession, ExecutorConfig, run_cell
from .gateway import (
    Gateway,
    GenerationRequest,
    GenerationResponse,
    HttpBackend,
    ModelRole,
    ReplayMode,
    RetryPolicy,
)
from .inference import (
    CostLedger,
    InferenceConfig,
    Strategy,
    TieBreak,
    evaluate,
    majority_answer,
    majority_vote,
    run_verified_episode,
    solve_greedy,
    sweep,
    verified_inference,
)
from .metrics import (
    ConfusionCounts,
    precision,
    recall,
    recall_standard,
    synthetic_verified_population,
    tally,
)
from .mockmodel import MockBackend, PipelineMockModel
from .pipeline import run_pipeline
from .solver import SolveConfig, extract_answer, generate_solution
from .transcript import parse_segments, serialize_segments
from .verify import (
    ConsistencyMode,
    FilterConfig,
    consistency_filter,
    filter_dataset,
    generate_rationale,
    parse_verdict,
    render_verify_prompt,
)

__version__ = "0.1.0"
