"""Agent roles: prompt rendering and structured-output parsing.

All prompts follow a line-oriented grammar with uppercase field labels
(QUESTION:, ANSWER:, DECISION:, ...). The parsers tolerate surrounding
prose and multi-line section bodies; a section runs until the next known
label or the end of the text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import TYPE_CHECKING, Callable, Sequence, TypeVar

from .backend import Backend, ChatMessage, ChatRequest, ChatResponse
from .corpus import DifficultyLevel, SampledExample
from .errors import ConfigError, ParseError, TurnFailedError

if TYPE_CHECKING:
    from .workflows import Transcript

T = TypeVar("T")

FIELD_LABELS = (
    "DECISION",
    "QUESTION",
    "ANSWER",
    "REASONING",
    "FEEDBACK",
    "TARGET",
    "CONSENSUS",
    "CHOICE",
    "RATIONALE",
    "SCORE",
)

AUTOCOT_INSTRUCTION = (
    "Think step by step: include a REASONING: line with your brief working "
    "before the final answer."
)
SOLUTION_INSTRUCTION = (
    "Give only the final answer; do not include any working or explanation."
)

QA_GRAMMAR = "QUESTION: <the question text>\nANSWER: <the answer>"
QA_GRAMMAR_AUTOCOT = (
    "REASONING: <your brief step-by-step working>\n" + QA_GRAMMAR
)


class DecisionKind(str, Enum):
    NEW = "new"
    REVISE = "revise"
    AGREE = "agree"


@dataclass(frozen=True)
class QAPair:
    """A generated question and answer, with reasoning only when a step-by-step
    mode produced one."""

    question: str
    answer: str
    reasoning: str | None = None

    def __post_init__(self) -> None:
        if not self.question or not self.answer:
            raise ParseError("question and answer must be non-empty")

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "answer": self.answer,
            "reasoning": self.reasoning,
        }


@dataclass(frozen=True)
class AgentDecision:
    """One versatile-agent turn: create, revise, or endorse a candidate."""

    kind: DecisionKind
    pair: QAPair | None = None
    feedback: str | None = None
    target_candidate: int | None = None

    def __post_init__(self) -> None:
        if self.kind in (DecisionKind.NEW, DecisionKind.REVISE) and self.pair is None:
            raise ParseError(f"{self.kind.value} decision requires a question-answer pair")
        if self.kind in (DecisionKind.REVISE, DecisionKind.AGREE):
            if self.target_candidate is None:
                raise ParseError(f"{self.kind.value} decision requires a target candidate")
            if not self.feedback:
                raise ParseError(f"{self.kind.value} decision requires feedback")
        if self.kind is DecisionKind.AGREE and self.pair is not None:
            raise ParseError("agree decision must not carry a new pair")
        if self.kind is DecisionKind.NEW and self.target_candidate is not None:
            raise ParseError("new decision must not carry a target")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "pair": self.pair.to_dict() if self.pair else None,
            "feedback": self.feedback,
            "target_candidate": self.target_candidate,
        }


@dataclass(frozen=True)
class GenerationContext:
    """Inputs to a generation run: the KC, the difficulty, and sampled examples."""

    kc_name: str
    requested_difficulty: DifficultyLevel
    examples: tuple[SampledExample, ...] = ()
    autocot: bool = False
    solution_generation: bool = False

    def __post_init__(self) -> None:
        if self.autocot and self.solution_generation:
            raise ConfigError(
                "autocot and solution_generation are mutually exclusive"
            )


# ---------------------------------------------------------------------------
# Templates and rendering


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (
        resources.files("mathgen").joinpath("templates", f"{name}.txt").read_text("utf-8")
    )


def _mode_instruction(ctx: GenerationContext) -> str:
    if ctx.autocot:
        return AUTOCOT_INSTRUCTION
    if ctx.solution_generation:
        return SOLUTION_INSTRUCTION
    return ""


def _qa_grammar(ctx: GenerationContext) -> str:
    return QA_GRAMMAR_AUTOCOT if ctx.autocot else QA_GRAMMAR


def _tidy(text: str) -> str:
    """Collapse blank-line runs left by empty placeholder blocks."""
    return re.sub(r"\n{3,}", "\n\n", text).strip() + "\n"


def render_examples_block(examples: Sequence[SampledExample]) -> str:
    if not examples:
        return ""
    lines = ["Here are example questions for this skill:"]
    for i, ex in enumerate(examples, start=1):
        if ex.shown_label is not None:
            lines.append(f"Example {i} (difficulty: {ex.shown_label.value}):")
        else:
            lines.append(f"Example {i}:")
        lines.append(ex.record.body)
    return "\n".join(lines) + "\n\n"


def render_history_block(history: "Transcript | None") -> str:
    if history is None or not history.messages:
        return "(no messages yet)"
    return "\n".join(f"[{msg.speaker_label}] {msg.raw}" for msg in history.messages)


def format_qa(pair: QAPair, include_reasoning: bool = False) -> str:
    lines = []
    if include_reasoning and pair.reasoning:
        lines.append(f"REASONING: {pair.reasoning}")
    lines.append(f"QUESTION: {pair.question}")
    lines.append(f"ANSWER: {pair.answer}")
    return "\n".join(lines)


def format_decision(decision: AgentDecision) -> str:
    """Serialize a decision into its reply grammar (inverse of parse_decision)."""
    lines = [f"DECISION: {decision.kind.value.upper()}"]
    if decision.target_candidate is not None:
        lines.append(f"TARGET: {decision.target_candidate}")
    if decision.pair is not None:
        lines.append(format_qa(decision.pair, include_reasoning=True))
    if decision.feedback:
        lines.append(f"FEEDBACK: {decision.feedback}")
    return "\n".join(lines)


def render_candidates_block(candidates: Sequence[QAPair]) -> str:
    if not candidates:
        return (
            "No candidates have been proposed yet. You must begin with "
            "DECISION: NEW and propose the first question."
        )
    lines = ["Candidates so far:"]
    for i, pair in enumerate(candidates, start=1):
        lines.append(f"Candidate {i}:")
        lines.append(format_qa(pair))
    return "\n".join(lines)


def render_teacher_prompt(
    ctx: GenerationContext, history: "Transcript | None" = None
) -> list[ChatMessage]:
    system = _template("teacher_system").format(
        mode_instruction=_mode_instruction(ctx), grammar=_qa_grammar(ctx)
    )
    history_block = ""
    if history is not None and history.messages:
        history_block = (
            "The discussion so far:\n"
            + render_history_block(history)
            + "\n\nAddress the critic's latest feedback when writing your revision.\n\n"
        )
    user = _template("teacher_user").format(
        kc=ctx.kc_name,
        difficulty=ctx.requested_difficulty.value,
        examples=render_examples_block(ctx.examples),
        history=history_block,
    )
    return [ChatMessage("system", _tidy(system)), ChatMessage("user", _tidy(user))]


def render_critic_prompt(
    pair: QAPair, ctx: GenerationContext, history: "Transcript | None" = None
) -> list[ChatMessage]:
    system = _template("critic_system")
    user = _template("critic_user").format(
        kc=ctx.kc_name,
        difficulty=ctx.requested_difficulty.value,
        history=render_history_block(history),
        pair=format_qa(pair),
    )
    return [ChatMessage("system", _tidy(system)), ChatMessage("user", _tidy(user))]


def render_versatile_prompt(
    ctx: GenerationContext,
    history: "Transcript | None",
    candidates: Sequence[QAPair],
) -> list[ChatMessage]:
    system = _template("versatile_system").format(
        mode_instruction=_mode_instruction(ctx), grammar=_qa_grammar(ctx)
    )
    user = _template("versatile_user").format(
        kc=ctx.kc_name,
        difficulty=ctx.requested_difficulty.value,
        examples=render_examples_block(ctx.examples),
        history=render_history_block(history),
        candidates=render_candidates_block(candidates),
    )
    return [ChatMessage("system", _tidy(system)), ChatMessage("user", _tidy(user))]


def render_ceo_prompt(
    history: "Transcript", candidates: Sequence[QAPair]
) -> list[ChatMessage]:
    if history is None or not history.messages:
        raise ConfigError("consensus arbitration requires a non-empty discussion")
    if not candidates:
        raise ConfigError("consensus arbitration requires at least one candidate")
    system = _template("ceo_system")
    user = _template("ceo_user").format(
        history=render_history_block(history),
        candidates=render_candidates_block(candidates),
    )
    return [ChatMessage("system", _tidy(system)), ChatMessage("user", _tidy(user))]


def render_bloom_prompt(pair: QAPair, ctx: GenerationContext) -> list[ChatMessage]:
    system = _template("bloom_system")
    user = _template("bloom_user").format(kc=ctx.kc_name, pair=format_qa(pair))
    return [ChatMessage("system", _tidy(system)), ChatMessage("user", _tidy(user))]


def render_judge_prompt(
    pair: QAPair, rubric: str, ctx: GenerationContext
) -> list[ChatMessage]:
    system = _template("judge_system").format(rubric=rubric)
    user = _template("judge_user").format(
        kc=ctx.kc_name,
        difficulty=ctx.requested_difficulty.value,
        examples=render_examples_block(ctx.examples),
        pair=format_qa(pair),
    )
    return [ChatMessage("system", _tidy(system)), ChatMessage("user", _tidy(user))]


# ---------------------------------------------------------------------------
# Parsing

_LABEL_RE = re.compile(r"^([A-Z]+)\s*:\s*(.*)$")


def split_sections(text: str) -> dict[str, str]:
    """Split a reply into labeled sections, ignoring prose outside them.

    The first occurrence of each label wins; a section body runs until the
    next known label line.
    """
    sections: dict[str, str] = {}
    current: str | None = None
    buffer: list[str] = []

    def flush() -> None:
        if current is not None and current not in sections:
            sections[current] = "\n".join(buffer).strip()

    for line in text.splitlines():
        match = _LABEL_RE.match(line.strip())
        if match and match.group(1) in FIELD_LABELS:
            flush()
            current = match.group(1)
            buffer = [match.group(2)]
        elif current is not None:
            buffer.append(line)
    flush()
    return sections


def parse_qa(text: str) -> QAPair:
    sections = split_sections(text)
    question = sections.get("QUESTION", "")
    answer = sections.get("ANSWER", "")
    missing = [label for label, value in (("QUESTION", question), ("ANSWER", answer)) if not value]
    if missing:
        raise ParseError(f"reply is missing section(s): {', '.join(missing)}")
    return QAPair(
        question=question, answer=answer, reasoning=sections.get("REASONING") or None
    )


def _parse_target(sections: dict[str, str], n_candidates: int | None) -> int:
    raw = sections.get("TARGET", "")
    match = re.search(r"-?\d+", raw)
    if not match:
        raise ParseError("reply is missing a TARGET candidate number")
    target = int(match.group())
    if n_candidates is not None and not 1 <= target <= n_candidates:
        raise ParseError(
            f"TARGET {target} is out of range [1, {n_candidates}]"
        )
    return target


def parse_decision(text: str, n_candidates: int | None = None) -> AgentDecision:
    sections = split_sections(text)
    raw_kind = sections.get("DECISION", "")
    word = raw_kind.split()[0].upper() if raw_kind.split() else ""
    if word not in ("NEW", "REVISE", "AGREE"):
        raise ParseError(f"unknown decision {raw_kind!r}; expected NEW, REVISE, or AGREE")

    feedback = sections.get("FEEDBACK") or None
    if word == "NEW":
        return AgentDecision(kind=DecisionKind.NEW, pair=parse_qa(text), feedback=feedback)
    if word == "REVISE":
        target = _parse_target(sections, n_candidates)
        if not feedback:
            raise ParseError("REVISE decision requires a FEEDBACK section")
        return AgentDecision(
            kind=DecisionKind.REVISE,
            pair=parse_qa(text),
            feedback=feedback,
            target_candidate=target,
        )
    target = _parse_target(sections, n_candidates)
    if not feedback:
        raise ParseError("AGREE decision requires a FEEDBACK section")
    return AgentDecision(
        kind=DecisionKind.AGREE, feedback=feedback, target_candidate=target
    )


def parse_ceo(text: str, n_candidates: int) -> tuple[bool, int]:
    sections = split_sections(text)
    verdict = sections.get("CONSENSUS", "").strip().lower()
    if verdict not in ("yes", "no"):
        raise ParseError(f"missing or invalid CONSENSUS line (got {verdict!r})")
    raw_choice = sections.get("CHOICE", "")
    match = re.search(r"-?\d+", raw_choice)
    if not match:
        raise ParseError("missing CHOICE candidate number")
    choice = int(match.group())
    if not 1 <= choice <= n_candidates:
        raise ParseError(f"CHOICE {choice} is out of range [1, {n_candidates}]")
    return verdict == "yes", choice


def parse_score(text: str, lo: int = 1, hi: int = 5) -> int:
    sections = split_sections(text)
    raw = sections.get("SCORE", "")
    match = re.search(r"-?\d+", raw)
    if not match:
        raise ParseError("reply is missing a SCORE line")
    score = int(match.group())
    if not lo <= score <= hi:
        raise ParseError(f"SCORE {score} is out of range [{lo}, {hi}]")
    return score


# ---------------------------------------------------------------------------
# Turn execution with corrective retries

MAX_PARSE_RETRIES = 2

_CORRECTIVE_REMINDER = (
    "Your previous reply could not be processed: {error} "
    "Reply again using exactly the required line format."
)


def run_parsed_turn(
    backend: Backend,
    model: str,
    messages: Sequence[ChatMessage],
    parser: Callable[[str], T],
    *,
    speaker: str,
    temperature: float = 0.0,
    sampling_seed: int | None = None,
    max_tokens: int | None = None,
    max_retries: int = MAX_PARSE_RETRIES,
) -> tuple[T, str, ChatResponse]:
    """Call the backend and parse the reply, retrying with a corrective
    reminder on parse failure. Raises TurnFailedError once retries run out."""
    conversation = list(messages)
    raw = ""
    last_error = ""
    for _ in range(1 + max_retries):
        response = backend.complete(
            ChatRequest(
                model=model,
                messages=tuple(conversation),
                temperature=temperature,
                sampling_seed=sampling_seed,
                max_tokens=max_tokens,
            )
        )
        raw = response.content
        try:
            return parser(raw), raw, response
        except ParseError as exc:
            last_error = str(exc)
            conversation.append(ChatMessage("assistant", raw or "(empty reply)"))
            conversation.append(
                ChatMessage("user", _CORRECTIVE_REMINDER.format(error=last_error))
            )
    raise TurnFailedError(
        speaker=speaker, attempts=1 + max_retries, last_error=last_error, raw=raw
    )
