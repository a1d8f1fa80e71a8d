"""Key-element extraction: seven guiding questions per paper.

The extraction prompt is the question list followed by the paper content;
the decoder answers as seven numbered items which are parsed back into a
``KeyElements`` value. A plain one-shot summary is also provided for the
pipeline variant that skips structured extraction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from . import prompts
from .corpus import PaperDocument
from .provider import ChatMessage, ChatRequest, DecoderRoles, Provider

QUESTION_COUNT = 7

DEFAULT_CHAR_BUDGET = 48_000
_HEAD_FRACTION = 0.7

_ITEM_RE = re.compile(r"(?m)^\s*(\d+)[.)]\s*")


class ExtractionParseError(Exception):
    """Decoder reply did not yield the expected numbered answers."""

    def __init__(self, message: str, raw_reply: str = ""):
        super().__init__(message)
        self.raw_reply = raw_reply


@dataclass(frozen=True)
class GuidingQuestions:
    """Exactly seven questions, one per key element."""

    questions: tuple[str, ...]

    def __post_init__(self):
        if len(self.questions) != QUESTION_COUNT:
            raise ValueError(
                f"expected {QUESTION_COUNT} questions, got {len(self.questions)}"
            )
        if any(not q.strip() for q in self.questions):
            raise ValueError("questions must be non-empty")

    @classmethod
    def default(cls) -> "GuidingQuestions":
        return cls(questions=prompts.DEFAULT_GUIDING_QUESTIONS)

    @classmethod
    def from_file(cls, path: str | Path) -> "GuidingQuestions":
        """Load one question per line; exactly seven non-blank lines."""
        lines = [
            line.strip()
            for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        return cls(questions=tuple(lines))


@dataclass(frozen=True)
class KeyElements:
    """Seven answers aligned index-for-index with the guiding questions."""

    answers: tuple[str, ...]
    source_id: str
    raw_reply: str

    def __post_init__(self):
        if len(self.answers) != QUESTION_COUNT:
            raise ValueError(
                f"expected {QUESTION_COUNT} answers, got {len(self.answers)}"
            )


def truncate_body(body: str, char_budget: int = DEFAULT_CHAR_BUDGET) -> str:
    """Clamp long paper bodies: keep the head and tail, elide the middle."""
    if len(body) <= char_budget:
        return body
    head = int(char_budget * _HEAD_FRACTION)
    tail = char_budget - head
    return body[:head] + prompts.ELISION_MARKER + body[-tail:]


def build_extraction_prompt(
    questions: GuidingQuestions,
    paper: PaperDocument,
    char_budget: int = DEFAULT_CHAR_BUDGET,
) -> tuple[ChatMessage, ...]:
    """Questions first, then the (possibly truncated) paper content."""
    if not paper.body.strip():
        raise ValueError(f"paper {paper.id}: body is empty")
    numbered = "\n".join(
        f"{i}. {q}" for i, q in enumerate(questions.questions, start=1)
    )
    user = (
        prompts.EXTRACT_INSTRUCTION.format(count=QUESTION_COUNT)
        + "\n\nQuestions:\n"
        + numbered
        + "\n\nPaper content:\n"
        + truncate_body(paper.body, char_budget)
    )
    return (
        ChatMessage(role="system", content=prompts.EXTRACT_SYSTEM),
        ChatMessage(role="user", content=user),
    )


def parse_numbered_answers(reply: str, count: int = QUESTION_COUNT) -> tuple[str, ...]:
    """Split a reply into ``count`` numbered items; raise naming missing slots.

    Items run from their number marker to the next marker (or end of text),
    so multi-line answers survive intact.
    """
    found: dict[int, str] = {}
    matches = list(_ITEM_RE.finditer(reply))
    for match, nxt in zip(matches, matches[1:] + [None]):
        number = int(match.group(1))
        if not 1 <= number <= count or number in found:
            continue
        end = nxt.start() if nxt is not None else len(reply)
        found[number] = reply[match.end() : end].strip()
    missing = [str(i) for i in range(1, count + 1) if i not in found]
    if missing:
        raise ExtractionParseError(
            f"missing answer for item {', '.join(missing)}", raw_reply=reply
        )
    return tuple(found[i] for i in range(1, count + 1))


def extract_key_elements(
    provider: Provider,
    paper: PaperDocument,
    questions: GuidingQuestions,
    roles: DecoderRoles,
    char_budget: int = DEFAULT_CHAR_BUDGET,
    temperature: float = 0.0,
) -> KeyElements:
    """Ask the extraction decoder the seven questions about one paper.

    One reformat retry on a malformed reply; after that the parse error
    propagates with the raw reply attached.
    """
    messages = build_extraction_prompt(questions, paper, char_budget)
    request = ChatRequest(
        model=roles.extraction,
        messages=messages,
        temperature=temperature,
        request_tag="extract",
    )
    reply = provider.complete(request).completions[0]
    try:
        answers = parse_numbered_answers(reply)
    except ExtractionParseError:
        retry_messages = messages + (
            ChatMessage(role="assistant", content=reply),
            ChatMessage(
                role="user",
                content=prompts.EXTRACT_REFORMAT.format(count=QUESTION_COUNT),
            ),
        )
        reply = provider.complete(
            ChatRequest(
                model=roles.extraction,
                messages=retry_messages,
                temperature=temperature,
                request_tag="extract",
            )
        ).completions[0]
        answers = parse_numbered_answers(reply)
    return KeyElements(answers=answers, source_id=paper.id, raw_reply=reply)


def summarize_plain(
    provider: Provider,
    paper: PaperDocument,
    roles: DecoderRoles,
    char_budget: int = DEFAULT_CHAR_BUDGET,
    temperature: float = 0.0,
) -> str:
    """One-shot free-text summary of a paper (no structured elements)."""
    if not paper.body.strip():
        raise ValueError(f"paper {paper.id}: body is empty")
    content = truncate_body(paper.body, char_budget)
    request = ChatRequest(
        model=roles.extraction,
        messages=(
            ChatMessage(
                role="user", content=prompts.SUMMARIZE_PROMPT.format(content=content)
            ),
        ),
        temperature=temperature,
        request_tag="summarize",
    )
    return provider.complete(request).completions[0]


def format_elements(elements: KeyElements | str) -> str:
    """Render extracted elements (or a plain summary) for downstream prompts."""
    if isinstance(elements, str):
        return elements
    return "\n".join(f"{i}. {a}" for i, a in enumerate(elements.answers, start=1))
