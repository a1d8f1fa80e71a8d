"""Incremental comparative generation with vote-based candidate retention.

The generator walks the record's references in order. Each turn extends every
retained draft with the next reference (``n_s`` samples per draft), has the
evaluation decoder vote on the pooled candidates, and keeps the top ``n_c``.
After the last reference the top-voted candidate is the final summary.

Setting ``n_v = 0`` disables voting entirely (first-``n_c`` retention, final
pick by generation order); ``ablation_no_incremental`` collapses the loop
into one direct generation call over all references at once.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

from . import prompts
from .corpus import DatasetRecord
from .extractor import (
    DEFAULT_CHAR_BUDGET,
    format_elements,
    summarize_plain,
    truncate_body,
)
from .metrics import citation_indices
from .provider import ChatMessage, ChatRequest, DecoderRoles, Provider, ProviderError

logger = logging.getLogger(__name__)

BASELINE_MODES = ("zero_shot_two_step", "zero_shot_one_step", "few_shot")

_CHOICE_RE = re.compile(r"^\s*CHOICE:\s*(\d+)\s*$")
_EXAMPLE_SPLIT_RE = re.compile(r"(?m)^---+\s*$")


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the generation loop; validated on construction."""

    n_s: int = 2
    n_c: int = 2
    n_v: int = 5
    temperature_generate: float = 0.7
    temperature_vote: float = 0.0
    ablation_no_extractor: bool = False
    ablation_no_incremental: bool = False

    def __post_init__(self):
        if self.n_s < 1:
            raise ValueError("n_s must be >= 1")
        if self.n_c < 1:
            raise ValueError("n_c must be >= 1")
        if self.n_v < 0:
            raise ValueError("n_v must be >= 0")


@dataclass(frozen=True)
class CandidateSummary:
    """A running related-work draft after ``turn`` references."""

    text: str
    turn: int
    parent_index: int | None
    sample_index: int
    cited: frozenset[int]


SENTINEL = CandidateSummary(
    text="", turn=0, parent_index=None, sample_index=0, cited=frozenset()
)


@dataclass(frozen=True)
class VoteTally:
    """Vote counts per candidate position (1-based) and the induced ranking.

    ``counts`` holds every position, zeros included; ``ranking`` orders
    positions by count descending, ties broken by lower position. Votes whose
    reply could not be parsed are counted as ``abstentions``, so
    ``sum(counts) + abstentions == total_votes``.
    """

    counts: dict[int, int]
    total_votes: int
    ranking: tuple[int, ...]
    abstentions: int = 0

    def __post_init__(self):
        if sum(self.counts.values()) + self.abstentions != self.total_votes:
            raise ValueError("vote counts plus abstentions must equal total_votes")
        if sorted(self.ranking) != sorted(self.counts):
            raise ValueError("ranking must be a permutation of candidate positions")


@dataclass(frozen=True)
class BeamState:
    """Candidates retained after one turn, with the tally that chose them."""

    turn: int
    retained: tuple[CandidateSummary, ...]
    tally: VoteTally | None
    pool_size: int


# --- prompt builders ---------------------------------------------------------


def build_generation_prompt(
    pro, ref, ref_index: int, previous: CandidateSummary
) -> tuple[ChatMessage, ...]:
    user = (
        "Target paper key points:\n"
        + format_elements(pro)
        + "\n\nPreviously completed related work:\n"
        + prompts.DRAFT_OPEN
        + "\n"
        + previous.text
        + "\n"
        + prompts.DRAFT_CLOSE
        + f"\n\nNew reference paper [Reference {ref_index}]:\n"
        + format_elements(ref)
        + "\n\nGuidance: "
        + prompts.COMPARATIVE_GUIDANCE
        + "\n\n"
        + prompts.CITE_INSTRUCTION.format(index=ref_index)
    )
    return (
        ChatMessage(role="system", content=prompts.GENERATE_SYSTEM),
        ChatMessage(role="user", content=user),
    )


def build_vote_prompt(
    candidates, target_context: str, ballot: int, total: int
) -> tuple[ChatMessage, ...]:
    blocks = [f"Target paper key points:\n{target_context}"]
    for position, candidate in enumerate(candidates, start=1):
        header = prompts.VOTE_CANDIDATE_HEADER.format(position=position)
        blocks.append(f"{header}\n{candidate.text}")
    blocks.append(prompts.VOTE_INSTRUCTION)
    blocks.append(prompts.VOTE_BALLOT_LINE.format(ballot=ballot, total=total))
    return (
        ChatMessage(role="system", content=prompts.VOTE_SYSTEM),
        ChatMessage(role="user", content="\n\n".join(blocks)),
    )


def build_direct_prompt(record: DatasetRecord, elements: dict) -> tuple[ChatMessage, ...]:
    """Single-shot prompt covering every reference at once."""
    refs = "\n\n".join(
        f"[Reference {i}] " + format_elements(elements[ref.id])
        for i, ref in enumerate(record.references, start=1)
    )
    user = (
        prompts.BASELINE_GENERATE_PROMPT.format(
            target=format_elements(elements[record.target.id]), references=refs
        )
        + "\n\n"
        + prompts.DIRECT_WRITING_INSTRUCTION
    )
    return (ChatMessage(role="user", content=user),)


# --- vote parsing ------------------------------------------------------------


def parse_vote_reply(reply: str, candidate_count: int) -> int:
    """The last non-empty line must be ``CHOICE: <k>`` with a valid k."""
    lines = [line for line in reply.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty vote reply")
    match = _CHOICE_RE.match(lines[-1])
    if not match:
        raise ValueError(f"vote reply does not end with a CHOICE line: {lines[-1]!r}")
    choice = int(match.group(1))
    if not 1 <= choice <= candidate_count:
        raise ValueError(f"vote choice {choice} outside 1..{candidate_count}")
    return choice


# --- core operations ---------------------------------------------------------


def comparative_continue(
    provider: Provider,
    pro,
    ref,
    ref_index: int,
    previous: CandidateSummary,
    cfg: GeneratorConfig,
    roles: DecoderRoles,
    parent_index: int | None = None,
) -> list[CandidateSummary]:
    """Extend one draft with one reference, sampling ``n_s`` continuations."""
    if ref_index != previous.turn + 1:
        raise ValueError(
            f"ref_index {ref_index} does not follow previous turn {previous.turn}"
        )
    response = provider.complete(
        ChatRequest(
            model=roles.generation,
            messages=build_generation_prompt(pro, ref, ref_index, previous),
            temperature=cfg.temperature_generate,
            sample_count=cfg.n_s,
            request_tag="generate",
        )
    )
    candidates = []
    for sample_index, text in enumerate(response.completions):
        if not text.strip():
            raise ProviderError(
                f"empty completion from generation decoder at turn {ref_index}"
            )
        candidates.append(
            CandidateSummary(
                text=text,
                turn=ref_index,
                parent_index=parent_index,
                sample_index=sample_index,
                cited=frozenset(citation_indices(text)),
            )
        )
    return candidates


def _cast_vote(
    provider: Provider,
    messages: tuple[ChatMessage, ...],
    cfg: GeneratorConfig,
    roles: DecoderRoles,
    candidate_count: int,
) -> int | None:
    """One evaluator ballot; one reformat retry; None on abstention."""
    reply = provider.complete(
        ChatRequest(
            model=roles.evaluation,
            messages=messages,
            temperature=cfg.temperature_vote,
            request_tag="vote",
        )
    ).completions[0]
    try:
        return parse_vote_reply(reply, candidate_count)
    except ValueError:
        retry = messages + (
            ChatMessage(role="assistant", content=reply),
            ChatMessage(
                role="user",
                content=(
                    "Your reply did not end with a valid choice. Answer again "
                    f"with exactly one line: CHOICE: <k> for k in 1..{candidate_count}"
                ),
            ),
        )
        reply = provider.complete(
            ChatRequest(
                model=roles.evaluation,
                messages=retry,
                temperature=cfg.temperature_vote,
                request_tag="vote",
            )
        ).completions[0]
        try:
            return parse_vote_reply(reply, candidate_count)
        except ValueError:
            logger.warning("vote abstained after retry: %r", reply[:120])
            return None


def vote_round(
    provider: Provider,
    candidates,
    target_context: str,
    cfg: GeneratorConfig,
    roles: DecoderRoles,
) -> VoteTally:
    """Cast ``n_v`` ballots over the candidate pool and tally them."""
    if not candidates:
        raise ValueError("vote_round needs at least one candidate")
    if cfg.n_v < 1:
        raise ValueError("vote_round needs n_v >= 1")
    counts = {position: 0 for position in range(1, len(candidates) + 1)}
    abstentions = 0
    for ballot in range(1, cfg.n_v + 1):
        messages = build_vote_prompt(candidates, target_context, ballot, cfg.n_v)
        choice = _cast_vote(provider, messages, cfg, roles, len(candidates))
        if choice is None:
            abstentions += 1
        else:
            counts[choice] += 1
    ranking = tuple(sorted(counts, key=lambda pos: (-counts[pos], pos)))
    return VoteTally(
        counts=counts, total_votes=cfg.n_v, ranking=ranking, abstentions=abstentions
    )


def retain(candidates, tally: VoteTally, n_c: int) -> BeamState:
    """Keep the top ``n_c`` candidates in tally-ranking order."""
    if sorted(tally.ranking) != list(range(1, len(candidates) + 1)):
        raise ValueError("tally ranking does not cover the candidate pool")
    kept = tuple(
        candidates[position - 1] for position in tally.ranking[: min(n_c, len(candidates))]
    )
    return BeamState(
        turn=kept[0].turn, retained=kept, tally=tally, pool_size=len(candidates)
    )


def _check_elements(record: DatasetRecord, elements: dict) -> None:
    missing = [
        paper.id
        for paper in (record.target, *record.references)
        if paper.id not in elements
    ]
    if missing:
        raise ValueError(f"elements missing for papers: {', '.join(missing)}")


def run_generator(
    provider: Provider,
    record: DatasetRecord,
    elements: dict,
    cfg: GeneratorConfig,
    roles: DecoderRoles,
    log=None,
    resume_state: BeamState | None = None,
) -> tuple[CandidateSummary, list[BeamState]]:
    """Run the full loop over the record's references.

    Returns the selected final candidate and the per-turn trace (one
    ``BeamState`` per reference processed in this call). Turn states are
    appended to ``log`` as they complete, so an aborted run can resume from
    its last finished turn.
    """
    _check_elements(record, elements)
    if cfg.ablation_no_incremental:
        return _run_single_shot(provider, record, elements, cfg, roles, log)

    pro = elements[record.target.id]
    target_context = format_elements(pro)
    n = record.n_references
    beam: list[CandidateSummary] = list(resume_state.retained) if resume_state else [SENTINEL]
    start_turn = resume_state.turn + 1 if resume_state else 1
    trace: list[BeamState] = []

    for turn in range(start_turn, n + 1):
        ref = record.references[turn - 1]
        try:
            pool: list[CandidateSummary] = []
            for parent_position, previous in enumerate(beam):
                pool.extend(
                    comparative_continue(
                        provider,
                        pro,
                        elements[ref.id],
                        turn,
                        previous,
                        cfg,
                        roles,
                        parent_index=parent_position,
                    )
                )
            state = _settle_turn(
                provider, pool, target_context, cfg, roles,
                turn=turn, is_final=(turn == n),
            )
        except Exception as exc:
            if log is not None:
                log.append(
                    {"type": "error", "stage": f"turn {turn}", "message": str(exc)}
                )
            raise
        trace.append(state)
        if log is not None:
            log.append(turn_completed_event(state))
        beam = list(state.retained)

    final = beam[0]
    if log is not None:
        log.append({"type": "final_selected", "candidate": candidate_to_dict(final)})
    return final, trace


def _settle_turn(
    provider, pool, target_context, cfg, roles, turn: int, is_final: bool
) -> BeamState:
    """Vote over a turn's pool and retain; skips votes that cannot matter."""
    if cfg.n_v == 0:
        retained = tuple(pool[: cfg.n_c])
        return BeamState(turn=turn, retained=retained, tally=None, pool_size=len(pool))
    if not is_final and len(pool) <= cfg.n_c:
        # Every candidate survives regardless; the vote is pure cost.
        return BeamState(turn=turn, retained=tuple(pool), tally=None, pool_size=len(pool))
    tally = vote_round(provider, pool, target_context, cfg, roles)
    return retain(pool, tally, cfg.n_c)


def _run_single_shot(
    provider, record, elements, cfg, roles, log
) -> tuple[CandidateSummary, list[BeamState]]:
    n = record.n_references
    target_context = format_elements(elements[record.target.id])
    try:
        response = provider.complete(
            ChatRequest(
                model=roles.generation,
                messages=build_direct_prompt(record, elements),
                temperature=cfg.temperature_generate,
                sample_count=cfg.n_s,
                request_tag="baseline",
            )
        )
        pool = [
            CandidateSummary(
                text=text,
                turn=n,
                parent_index=None,
                sample_index=sample_index,
                cited=frozenset(citation_indices(text)),
            )
            for sample_index, text in enumerate(response.completions)
        ]
        state = _settle_turn(
            provider, pool, target_context, cfg, roles, turn=n, is_final=True
        )
    except Exception as exc:
        if log is not None:
            log.append({"type": "error", "stage": "single_shot", "message": str(exc)})
        raise
    if log is not None:
        log.append(turn_completed_event(state))
        log.append(
            {"type": "final_selected", "candidate": candidate_to_dict(state.retained[0])}
        )
    return state.retained[0], [state]


# --- direct baselines ----------------------------------------------------------


def load_examples_file(path: str | Path) -> str:
    """Few-shot examples file: example blocks separated by ``---`` lines."""
    raw = Path(path).read_text(encoding="utf-8")
    blocks = [block.strip() for block in _EXAMPLE_SPLIT_RE.split(raw) if block.strip()]
    if not blocks:
        raise ValueError(f"{path}: no examples found")
    return "\n\n".join(
        f"Example {i}:\n{block}" for i, block in enumerate(blocks, start=1)
    )


def generate_baseline(
    provider: Provider,
    record: DatasetRecord,
    mode: str,
    roles: DecoderRoles,
    examples_text: str | None = None,
    char_budget: int = DEFAULT_CHAR_BUDGET,
    temperature: float = 0.0,
) -> str:
    """Plain one-prompt generation, for comparison against the full loop.

    ``zero_shot_two_step`` summarizes target and references first and
    generates from the summaries; ``zero_shot_one_step`` generates straight
    from the full texts; ``few_shot`` is one-step with a style-example
    preamble.
    """
    if mode not in BASELINE_MODES:
        raise ValueError(f"unknown baseline mode {mode!r}; expected one of {BASELINE_MODES}")

    if mode == "zero_shot_two_step":
        target_text = summarize_plain(provider, record.target, roles, char_budget)
        ref_texts = [
            f"[Reference {i}] " + summarize_plain(provider, ref, roles, char_budget)
            for i, ref in enumerate(record.references, start=1)
        ]
    else:
        target_text = truncate_body(record.target.body, char_budget)
        ref_texts = [
            f"[Reference {i}] " + truncate_body(ref.body, char_budget)
            for i, ref in enumerate(record.references, start=1)
        ]

    body = prompts.BASELINE_GENERATE_PROMPT.format(
        target=target_text, references="\n\n".join(ref_texts)
    )
    if mode == "few_shot":
        if examples_text is None:
            raise ValueError("few_shot mode requires an examples file")
        body = prompts.FEW_SHOT_INSTRUCTION.format(examples=examples_text) + "\n\n" + body

    reply = provider.complete(
        ChatRequest(
            model=roles.generation,
            messages=(ChatMessage(role="user", content=body),),
            temperature=temperature,
            request_tag="baseline",
        )
    ).completions[0]
    return reply


# --- serialization helpers ------------------------------------------------------


def candidate_to_dict(candidate: CandidateSummary) -> dict:
    return {
        "text": candidate.text,
        "turn": candidate.turn,
        "parent_index": candidate.parent_index,
        "sample_index": candidate.sample_index,
        "cited": sorted(candidate.cited),
    }


def candidate_from_dict(raw: dict) -> CandidateSummary:
    return CandidateSummary(
        text=raw["text"],
        turn=raw["turn"],
        parent_index=raw["parent_index"],
        sample_index=raw["sample_index"],
        cited=frozenset(raw["cited"]),
    )


def tally_to_dict(tally: VoteTally | None) -> dict | None:
    if tally is None:
        return None
    return {
        "counts": {str(pos): count for pos, count in sorted(tally.counts.items())},
        "total_votes": tally.total_votes,
        "ranking": list(tally.ranking),
        "abstentions": tally.abstentions,
    }


def tally_from_dict(raw: dict | None) -> VoteTally | None:
    if raw is None:
        return None
    return VoteTally(
        counts={int(pos): count for pos, count in raw["counts"].items()},
        total_votes=raw["total_votes"],
        ranking=tuple(raw["ranking"]),
        abstentions=raw.get("abstentions", 0),
    )


def beam_state_to_dict(state: BeamState) -> dict:
    return {
        "turn": state.turn,
        "retained": [candidate_to_dict(c) for c in state.retained],
        "tally": tally_to_dict(state.tally),
        "pool_size": state.pool_size,
    }


def beam_state_from_dict(raw: dict) -> BeamState:
    return BeamState(
        turn=raw["turn"],
        retained=tuple(candidate_from_dict(c) for c in raw["retained"]),
        tally=tally_from_dict(raw["tally"]),
        pool_size=raw["pool_size"],
    )


def turn_completed_event(state: BeamState) -> dict:
    return {"type": "turn_completed", **beam_state_to_dict(state)}
