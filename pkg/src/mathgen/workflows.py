"""Generation workflows: baseline single-shot, teacher-critic cycle, and
collective consensus, each a deterministic state machine over a chat backend.

Transcript-length laws (enforced by tests): zero-/few-shot baselines produce
exactly 1 message, the teacher-critic cycle 1 + 2*rounds, and collective
consensus n_agents*rounds + 1 (the trailing arbiter message).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from enum import Enum

from .agents import (
    AgentDecision,
    DecisionKind,
    GenerationContext,
    QAPair,
    parse_ceo,
    parse_decision,
    parse_qa,
    run_parsed_turn,
    render_ceo_prompt,
    render_critic_prompt,
    render_teacher_prompt,
    render_versatile_prompt,
)
from .backend import Backend, draw_decoding_params
from .corpus import SamplingStrategy
from .errors import ConfigError, ParseError

ROUNDS_RANGE = (2, 5)
AGENTS_RANGE = (2, 4)


class WorkflowKind(str, Enum):
    BASELINE_ZS = "baseline_zs"
    BASELINE_FS = "baseline_fs"
    TCC = "tcc"
    CC = "cc"


AGENTIC_KINDS = (WorkflowKind.TCC, WorkflowKind.CC)


@dataclass(frozen=True)
class TranscriptMessage:
    speaker_role: str
    agent_index: int | None
    raw: str
    decision: AgentDecision | None
    request_params: tuple[float, int | None]

    @property
    def speaker_label(self) -> str:
        if self.agent_index is None:
            return self.speaker_role
        return f"{self.speaker_role}-{self.agent_index}"

    def to_dict(self) -> dict:
        return {
            "speaker": self.speaker_label,
            "raw": self.raw,
            "decision": self.decision.to_dict() if self.decision else None,
            "temperature": self.request_params[0],
            "sampling_seed": self.request_params[1],
        }


class Transcript:
    """Append-only ordered conversation record."""

    def __init__(self) -> None:
        self._messages: list[TranscriptMessage] = []

    @property
    def messages(self) -> tuple[TranscriptMessage, ...]:
        return tuple(self._messages)

    def append(self, message: TranscriptMessage) -> None:
        self._messages.append(message)

    def __len__(self) -> int:
        return len(self._messages)

    def to_jsonable(self) -> list[dict]:
        return [m.to_dict() for m in self._messages]


@dataclass(frozen=True)
class WorkflowConfig:
    kind: WorkflowKind
    rounds: int | None = None
    n_agents: int | None = None
    autocot: bool = False
    solution_generation: bool = False
    strategy: SamplingStrategy | None = None
    k: int = 3
    run_seed: int = 0

    def __post_init__(self) -> None:
        if self.autocot and self.solution_generation:
            raise ConfigError("autocot and solution_generation are mutually exclusive")
        if self.kind in AGENTIC_KINDS:
            if self.rounds is None or not ROUNDS_RANGE[0] <= self.rounds <= ROUNDS_RANGE[1]:
                raise ConfigError(
                    f"{self.kind.value} rounds must be in "
                    f"[{ROUNDS_RANGE[0]}, {ROUNDS_RANGE[1]}], got {self.rounds}"
                )
        if self.kind is WorkflowKind.CC:
            if (
                self.n_agents is None
                or not AGENTS_RANGE[0] <= self.n_agents <= AGENTS_RANGE[1]
            ):
                raise ConfigError(
                    f"cc n_agents must be in [{AGENTS_RANGE[0]}, {AGENTS_RANGE[1]}], "
                    f"got {self.n_agents}"
                )


@dataclass(frozen=True)
class Candidate:
    """A question-answer pair proposed during a run, with its provenance."""

    index: int  # 1-based, as shown to agents
    pair: QAPair
    author_role: str
    author_agent: int | None
    message_index: int

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "pair": self.pair.to_dict(),
            "author": (
                f"{self.author_role}-{self.author_agent}"
                if self.author_agent is not None
                else self.author_role
            ),
            "message_index": self.message_index,
        }


@dataclass(frozen=True)
class GenerationOutcome:
    final_pair: QAPair
    transcript: Transcript
    candidates: tuple[Candidate, ...]
    consensus_reported: bool | None = None
    rule_consensus: bool | None = None
    ceo_choice: int | None = None
    rule_choice: int | None = None


def _feedback_parser(text: str) -> str:
    feedback = text.strip()
    if not feedback:
        raise ParseError("empty feedback reply")
    return feedback


def _run_single_teacher(
    ctx: GenerationContext,
    backend: Backend,
    rng: random.Random,
    model: str,
) -> GenerationOutcome:
    temperature, seed = draw_decoding_params(rng)
    pair, raw, _ = run_parsed_turn(
        backend,
        model,
        render_teacher_prompt(ctx),
        parse_qa,
        speaker="teacher",
        temperature=temperature,
        sampling_seed=seed,
    )
    transcript = Transcript()
    transcript.append(
        TranscriptMessage("teacher", None, raw, None, (temperature, seed))
    )
    candidate = Candidate(1, pair, "teacher", None, 0)
    return GenerationOutcome(pair, transcript, (candidate,))


def run_baseline_zs(
    ctx: GenerationContext, cfg: WorkflowConfig, backend: Backend,
    rng: random.Random, model: str,
) -> GenerationOutcome:
    """One zero-shot teacher call; the prompt carries no examples."""
    if ctx.examples:
        ctx = replace(ctx, examples=())
    return _run_single_teacher(ctx, backend, rng, model)


def run_baseline_fs(
    ctx: GenerationContext, cfg: WorkflowConfig, backend: Backend,
    rng: random.Random, model: str,
) -> GenerationOutcome:
    """One teacher call guided by the sampled few-shot examples."""
    return _run_single_teacher(ctx, backend, rng, model)


def run_tcc(
    ctx: GenerationContext, cfg: WorkflowConfig, backend: Backend,
    rng: random.Random, model: str,
) -> GenerationOutcome:
    """Teacher-critic cycle: an initial pair, then `rounds` critique/revision
    exchanges. The critic's reply is recorded verbatim as feedback text."""
    if cfg.kind is not WorkflowKind.TCC:
        raise ConfigError(f"expected a tcc config, got {cfg.kind.value}")
    teacher_params = draw_decoding_params(rng)
    critic_params = draw_decoding_params(rng)

    transcript = Transcript()
    candidates: list[Candidate] = []

    pair, raw, _ = run_parsed_turn(
        backend,
        model,
        render_teacher_prompt(ctx),
        parse_qa,
        speaker="teacher",
        temperature=teacher_params[0],
        sampling_seed=teacher_params[1],
    )
    transcript.append(TranscriptMessage("teacher", None, raw, None, teacher_params))
    candidates.append(Candidate(1, pair, "teacher", None, 0))

    for _ in range(cfg.rounds):
        feedback, raw, _ = run_parsed_turn(
            backend,
            model,
            render_critic_prompt(pair, ctx, transcript),
            _feedback_parser,
            speaker="critic",
            temperature=critic_params[0],
            sampling_seed=critic_params[1],
        )
        transcript.append(TranscriptMessage("critic", None, raw, None, critic_params))

        pair, raw, _ = run_parsed_turn(
            backend,
            model,
            render_teacher_prompt(ctx, transcript),
            parse_qa,
            speaker="teacher",
            temperature=teacher_params[0],
            sampling_seed=teacher_params[1],
        )
        transcript.append(
            TranscriptMessage("teacher", None, raw, None, teacher_params)
        )
        candidates.append(
            Candidate(len(candidates) + 1, pair, "teacher", None, len(transcript) - 1)
        )

    return GenerationOutcome(candidates[-1].pair, transcript, tuple(candidates))


def run_cc(
    ctx: GenerationContext, cfg: WorkflowConfig, backend: Backend,
    rng: random.Random, model: str,
) -> GenerationOutcome:
    """Collective consensus: versatile agents speak in fixed order for the
    configured rounds, then a consensus arbiter picks the final candidate.

    Every agent keeps its own decoding draw for the whole run; the very
    first turn must propose a new pair."""
    if cfg.kind is not WorkflowKind.CC:
        raise ConfigError(f"expected a cc config, got {cfg.kind.value}")
    n_agents: int = cfg.n_agents
    agent_params = [draw_decoding_params(rng) for _ in range(n_agents)]

    transcript = Transcript()
    candidates: list[Candidate] = []

    def first_turn_parser(text: str) -> AgentDecision:
        decision = parse_decision(text, n_candidates=0)
        if decision.kind is not DecisionKind.NEW:
            raise ParseError("the first turn must be DECISION: NEW")
        return decision

    for round_index in range(cfg.rounds):
        for agent in range(1, n_agents + 1):
            pairs = [c.pair for c in candidates]
            if round_index == 0 and agent == 1:
                parser = first_turn_parser
            else:
                def parser(text: str, _n=len(candidates)) -> AgentDecision:
                    return parse_decision(text, n_candidates=_n)

            params = agent_params[agent - 1]
            decision, raw, _ = run_parsed_turn(
                backend,
                model,
                render_versatile_prompt(ctx, transcript, pairs),
                parser,
                speaker=f"versatile-{agent}",
                temperature=params[0],
                sampling_seed=params[1],
            )
            message_index = len(transcript)
            transcript.append(
                TranscriptMessage("versatile", agent, raw, decision, params)
            )
            if decision.kind in (DecisionKind.NEW, DecisionKind.REVISE):
                candidates.append(
                    Candidate(
                        len(candidates) + 1,
                        decision.pair,
                        "versatile",
                        agent,
                        message_index,
                    )
                )

    pairs = [c.pair for c in candidates]
    (consensus_reported, choice), raw, _ = run_parsed_turn(
        backend,
        model,
        render_ceo_prompt(transcript, pairs),
        lambda text: parse_ceo(text, n_candidates=len(pairs)),
        speaker="ceo",
        temperature=0.0,
        sampling_seed=None,
    )
    transcript.append(TranscriptMessage("ceo", None, raw, None, (0.0, None)))

    rule_consensus, rule_choice = detect_rule_consensus(transcript, candidates)
    return GenerationOutcome(
        final_pair=candidates[choice - 1].pair,
        transcript=transcript,
        candidates=tuple(candidates),
        consensus_reported=consensus_reported,
        rule_consensus=rule_consensus,
        ceo_choice=choice,
        rule_choice=rule_choice,
    )


def detect_rule_consensus(
    transcript: Transcript, candidates: list[Candidate] | tuple[Candidate, ...]
) -> tuple[bool, int | None]:
    """Rule-based consensus shadow of the arbiter, for logging and tests.

    True iff in the final round every agent other than the latest
    candidate's author issued AGREE targeting that candidate.
    """
    if not candidates:
        return False, None
    versatile = [m for m in transcript.messages if m.speaker_role == "versatile"]
    if not versatile:
        return False, None
    n_agents = len({m.agent_index for m in versatile})
    final_round = versatile[-n_agents:]

    latest = candidates[-1]
    for message in final_round:
        if message.agent_index == latest.author_agent:
            continue
        decision = message.decision
        if (
            decision is None
            or decision.kind is not DecisionKind.AGREE
            or decision.target_candidate != latest.index
        ):
            return False, None
    return True, latest.index


_RUNNERS = {
    WorkflowKind.BASELINE_ZS: run_baseline_zs,
    WorkflowKind.BASELINE_FS: run_baseline_fs,
    WorkflowKind.TCC: run_tcc,
    WorkflowKind.CC: run_cc,
}


def run_workflow(
    ctx: GenerationContext, cfg: WorkflowConfig, backend: Backend,
    rng: random.Random, model: str,
) -> GenerationOutcome:
    return _RUNNERS[cfg.kind](ctx, cfg, backend, rng, model)
