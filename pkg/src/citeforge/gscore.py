"""LLM-judge evaluation: six 1-5 dimensions per summary plus a best-of vote.

All systems' summaries for one record are scored and voted on in a single
conversation. System names never appear in the prompt; candidates are
numbered, and their order is shuffled independently per repetition to blunt
position bias, then mapped back before aggregation. Aggregation yields one
``g_score`` (mean over dimensions, repetitions, and records) and one
``g_prf`` (percentage of best-summary votes) per system.
"""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass

from . import prompts
from .provider import ChatMessage, ChatRequest, DecoderRoles, Provider

logger = logging.getLogger(__name__)

DIMENSIONS = ("consistency", "coherence", "comparative", "integrity", "fluency", "cite_accuracy")

_SCORES_RE = re.compile(
    r"(?m)^\s*Scores\s+(\d+)\s*:\s*"
    r"consistency=(\d+)\s*,\s*coherence=(\d+)\s*,\s*comparative=(\d+)\s*,\s*"
    r"integrity=(\d+)\s*,\s*fluency=(\d+)\s*,\s*cite_accuracy=(\d+)\s*$"
)
_VOTE_RE = re.compile(r"(?m)^\s*Vote\s*:\s*(\d+)\s*$")


class JudgeParseError(Exception):
    """Judge reply did not match the required scores/vote grammar."""


@dataclass(frozen=True)
class DimensionScores:
    """One summary's scores; every dimension is an integer in [1, 5]."""

    consistency: int
    coherence: int
    comparative: int
    integrity: int
    fluency: int
    cite_accuracy: int

    def __post_init__(self):
        for name in DIMENSIONS:
            value = getattr(self, name)
            if not 1 <= value <= 5:
                raise ValueError(f"{name} score {value} outside 1..5")

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, name) for name in DIMENSIONS)

    def mean(self) -> float:
        return sum(self.as_tuple()) / len(DIMENSIONS)


@dataclass(frozen=True)
class JudgeVerdict:
    """Scores per presented system (original order) and the winning index."""

    per_system: tuple[DimensionScores, ...]
    vote: int
    raw_reply: str

    def __post_init__(self):
        if not 1 <= self.vote <= len(self.per_system):
            raise ValueError(f"vote {self.vote} outside 1..{len(self.per_system)}")


@dataclass(frozen=True)
class EvaluationReport:
    systems: tuple[str, ...]
    per_record: dict[str, list[JudgeVerdict]]
    g_score: dict[str, float]
    g_prf: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "systems": list(self.systems),
            "g_score": dict(self.g_score),
            "g_prf": dict(self.g_prf),
            "per_record": {
                record_id: [verdict_to_dict(v) for v in verdicts]
                for record_id, verdicts in self.per_record.items()
            },
        }


def build_judge_prompt(
    gold: str, candidates, repetition: int | None = None
) -> tuple[ChatMessage, ...]:
    """One blind conversation: gold, numbered summaries, criteria, vote ask.

    ``candidates`` is an ordered list of (system_name, text); only the texts
    are shown, in the given order. Shuffling is the caller's job.
    """
    if not candidates:
        raise ValueError("need at least one candidate summary")
    if not gold.strip():
        raise ValueError("gold summary must be non-empty")
    blocks = [f"Gold related work:\n{gold}"]
    for position, (_, text) in enumerate(candidates, start=1):
        header = prompts.JUDGE_SUMMARY_HEADER.format(position=position)
        blocks.append(f"{header}\n{text}")
    criteria = "\n".join(
        f"{name} (1-5): {definition}" for name, definition in prompts.JUDGE_CRITERIA
    )
    blocks.append("Score each summary on these criteria:\n" + criteria)
    blocks.append(prompts.JUDGE_OUTPUT_FORMAT)
    if repetition is not None:
        blocks.append(prompts.JUDGE_PASS_LINE.format(repetition=repetition))
    return (
        ChatMessage(role="system", content=prompts.JUDGE_SYSTEM),
        ChatMessage(role="user", content="\n\n".join(blocks)),
    )


def parse_judge_reply(reply: str, candidate_count: int) -> tuple[list[DimensionScores], int]:
    """Parse the strict output grammar; out-of-range scores are rejected."""
    found: dict[int, DimensionScores] = {}
    for match in _SCORES_RE.finditer(reply):
        position = int(match.group(1))
        if position in found:
            raise JudgeParseError(f"duplicate Scores line for summary {position}")
        values = [int(g) for g in match.groups()[1:]]
        if any(not 1 <= v <= 5 for v in values):
            raise JudgeParseError(
                f"score outside 1..5 on Scores line for summary {position}"
            )
        found[position] = DimensionScores(*values)
    missing = [str(i) for i in range(1, candidate_count + 1) if i not in found]
    if missing:
        raise JudgeParseError(f"missing Scores line for summary {', '.join(missing)}")
    extra = [str(i) for i in found if i > candidate_count]
    if extra:
        raise JudgeParseError(f"Scores line for unknown summary {', '.join(extra)}")
    votes = _VOTE_RE.findall(reply)
    if not votes:
        raise JudgeParseError("missing Vote line")
    vote = int(votes[-1])
    if not 1 <= vote <= candidate_count:
        raise JudgeParseError(f"vote {vote} outside 1..{candidate_count}")
    return [found[i] for i in range(1, candidate_count + 1)], vote


def _judge_once(
    provider: Provider,
    gold: str,
    presented,
    roles: DecoderRoles,
    repetition: int,
    temperature: float,
):
    """One judged conversation with one reformat retry; None when dropped."""
    messages = build_judge_prompt(gold, presented, repetition=repetition)
    reply = provider.complete(
        ChatRequest(
            model=roles.evaluation,
            messages=messages,
            temperature=temperature,
            request_tag="judge",
        )
    ).completions[0]
    try:
        return reply, parse_judge_reply(reply, len(presented))
    except JudgeParseError:
        retry = messages + (
            ChatMessage(role="assistant", content=reply),
            ChatMessage(role="user", content=prompts.JUDGE_REFORMAT),
        )
        reply = provider.complete(
            ChatRequest(
                model=roles.evaluation,
                messages=retry,
                temperature=temperature,
                request_tag="judge",
            )
        ).completions[0]
        try:
            return reply, parse_judge_reply(reply, len(presented))
        except JudgeParseError as exc:
            logger.warning("judge repetition %d dropped: %s", repetition, exc)
            return None


def judge(
    provider: Provider,
    gold: str,
    candidates,
    roles: DecoderRoles,
    repetitions: int = 1,
    temperature: float = 0.0,
    rng: random.Random | None = None,
) -> list[JudgeVerdict]:
    """Judge all candidates ``repetitions`` times with per-repetition shuffles.

    ``candidates`` is a list of (system_name, text). Each returned verdict is
    un-shuffled: ``per_system`` follows the input order and ``vote`` indexes
    into it. Unparseable repetitions are dropped after one retry.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rng = rng or random.Random(0)
    verdicts = []
    for repetition in range(1, repetitions + 1):
        order = rng.sample(range(len(candidates)), len(candidates))
        presented = [candidates[i] for i in order]
        outcome = _judge_once(provider, gold, presented, roles, repetition, temperature)
        if outcome is None:
            continue
        reply, (scores_by_position, vote_position) = outcome
        per_system: list[DimensionScores | None] = [None] * len(candidates)
        for position, scores in enumerate(scores_by_position):
            per_system[order[position]] = scores
        verdicts.append(
            JudgeVerdict(
                per_system=tuple(per_system),
                vote=order[vote_position - 1] + 1,
                raw_reply=reply,
            )
        )
    return verdicts


def aggregate(per_record: dict, systems) -> EvaluationReport:
    """Fold verdicts into g_score and g_prf per system.

    ``g_score`` is the mean of the six dimensions over every verdict for the
    system; ``g_prf`` is the percentage of verdicts voting the system best.
    """
    systems = tuple(systems)
    all_verdicts = [v for verdicts in per_record.values() for v in verdicts]
    if not all_verdicts:
        raise ValueError("no verdicts to aggregate")
    for verdict in all_verdicts:
        if len(verdict.per_system) != len(systems):
            raise ValueError(
                f"verdict covers {len(verdict.per_system)} systems, expected {len(systems)}"
            )
    g_score = {}
    g_prf = {}
    for index, system in enumerate(systems):
        dims = [
            value
            for verdict in all_verdicts
            for value in verdict.per_system[index].as_tuple()
        ]
        g_score[system] = sum(dims) / len(dims)
        votes = sum(1 for verdict in all_verdicts if verdict.vote == index + 1)
        g_prf[system] = 100.0 * votes / len(all_verdicts)
    return EvaluationReport(
        systems=systems, per_record=dict(per_record), g_score=g_score, g_prf=g_prf
    )


def verdict_to_dict(verdict: JudgeVerdict) -> dict:
    return {
        "per_system": [list(s.as_tuple()) for s in verdict.per_system],
        "vote": verdict.vote,
        "raw_reply": verdict.raw_reply,
    }


def verdict_from_dict(raw: dict) -> JudgeVerdict:
    return JudgeVerdict(
        per_system=tuple(DimensionScores(*scores) for scores in raw["per_system"]),
        vote=raw["vote"],
        raw_reply=raw.get("raw_reply", ""),
    )
