"""Deterministic offline backend scripted per request tag.

Every reply is a pure function of (request tag, message digest, sample
index, seed), so any pipeline run against the mock is replayable bit for
bit. A script maps request tags to reply behaviors:

* ``{"template": ...}`` renders a string with the placeholders ``{digest}``,
  ``{sample_index}``, ``{turn}`` (the reference index named in the prompt's
  citation instruction), and ``{previous}`` (the draft embedded between the
  prompt's draft delimiters). Markers missing from the prompt render as "".
* ``{"kind": "vote", "rule": ...}`` emits a ballot ending in ``CHOICE: <k>``.
  Rules: ``"digest_mod"`` picks ``(digest mod k) + 1`` among the k candidates
  listed in the prompt, ``"first"`` always picks 1, ``{"fixed": j}`` always
  picks j.
* ``{"kind": "judge", "rule": ...}`` emits one ``Scores k:`` line per summary
  in the prompt plus a ``Vote: <k>`` line. Rule ``"digest"`` derives scores
  and vote from the digest; ``"position"`` favors earlier positions (scores
  5, 4, 3, ... and vote 1), which is useful for order-bias tests.

Unknown tags fall back to the script's ``fallback`` entry, or raise when the
policy is ``"error"`` (the default).
"""

from __future__ import annotations

import hashlib
import json
import string
from pathlib import Path

from . import prompts
from .provider import ChatRequest, ChatResponse, Usage

_TEMPLATE_FIELDS = {"digest", "sample_index", "turn", "previous"}
_VOTE_RULES = {"digest_mod", "first"}
_JUDGE_RULES = {"digest", "position"}
_DIMENSIONS = ("consistency", "coherence", "comparative", "integrity", "fluency", "cite_accuracy")

BUILTIN_SCRIPT = {
    "tags": {
        "extract": {
            "template": (
                "1. Problem studied ({digest}).\n"
                "2. Context and motivation ({digest}).\n"
                "3. Proposed method ({digest}).\n"
                "4. Technical novelty ({digest}).\n"
                "5. Experimental setup ({digest}).\n"
                "6. Main results ({digest}).\n"
                "7. Limitations noted ({digest})."
            )
        },
        "summarize": {"template": "Condensed article summary ({digest})."},
        "generate": {
            "template": (
                "{previous} A related study addresses this problem "
                "[Reference {turn}] ({digest}-{sample_index})."
            )
        },
        "baseline": {
            "template": "Overview of prior work on the topic ({digest}-{sample_index})."
        },
        "vote": {"kind": "vote", "rule": "digest_mod"},
        "judge": {"kind": "judge", "rule": "digest"},
    },
    "fallback": {"template": "ok ({digest})"},
}


class MockScriptError(Exception):
    """Malformed mock script, or an unknown tag under the error policy."""


def request_digest(seed: int, tag: str, messages, sample_index: int) -> str:
    """Stable hex digest of one (seed, tag, messages, sample index) tuple.

    Public so tests can derive expected mock outputs offline.
    """
    payload = json.dumps(
        {
            "seed": seed,
            "tag": tag,
            "messages": [[m.role, m.content] for m in messages],
            "sample": sample_index,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def digest_int(digest: str) -> int:
    return int(digest, 16)


def _check_template(template, where: str) -> None:
    if not isinstance(template, str):
        raise MockScriptError(f"{where}: template must be a string")
    for _, field_name, _, _ in string.Formatter().parse(template):
        if field_name is not None and field_name not in _TEMPLATE_FIELDS:
            raise MockScriptError(
                f"{where}: unknown placeholder {{{field_name}}}; "
                f"allowed: {sorted(_TEMPLATE_FIELDS)}"
            )


def _check_entry(entry, where: str) -> None:
    if not isinstance(entry, dict):
        raise MockScriptError(f"{where}: entry must be an object")
    kind = entry.get("kind", "template")
    if kind == "template":
        if "template" not in entry:
            raise MockScriptError(f"{where}: missing 'template'")
        _check_template(entry["template"], where)
    elif kind == "vote":
        rule = entry.get("rule", "digest_mod")
        if isinstance(rule, dict):
            if set(rule) != {"fixed"} or not isinstance(rule["fixed"], int):
                raise MockScriptError(f"{where}: bad vote rule {rule!r}")
        elif rule not in _VOTE_RULES:
            raise MockScriptError(f"{where}: unknown vote rule {rule!r}")
    elif kind == "judge":
        rule = entry.get("rule", "digest")
        if rule not in _JUDGE_RULES:
            raise MockScriptError(f"{where}: unknown judge rule {rule!r}")
    else:
        raise MockScriptError(f"{where}: unknown kind {kind!r}")


class MockScript:
    """Validated tag-to-behavior mapping for the mock backend."""

    def __init__(self, tags: dict, fallback):
        self.tags = tags
        self.fallback = fallback

    @classmethod
    def from_dict(cls, raw: dict) -> "MockScript":
        if not isinstance(raw, dict):
            raise MockScriptError("script must be a JSON object")
        unknown = set(raw) - {"tags", "fallback"}
        if unknown:
            raise MockScriptError(f"unknown script keys {sorted(unknown)}")
        tags = raw.get("tags")
        if not isinstance(tags, dict) or not tags:
            raise MockScriptError("script needs a non-empty 'tags' object")
        for tag, entry in tags.items():
            _check_entry(entry, f"tags[{tag!r}]")
        fallback = raw.get("fallback", "error")
        if fallback != "error":
            _check_entry(fallback, "fallback")
        return cls(tags=tags, fallback=fallback)

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise MockScriptError(f"cannot load mock script {path}: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def builtin(cls) -> "MockScript":
        return cls.from_dict(BUILTIN_SCRIPT)

    def entry_for(self, tag: str) -> dict:
        entry = self.tags.get(tag)
        if entry is not None:
            return entry
        if self.fallback == "error":
            raise MockScriptError(f"no script entry for tag {tag!r} and fallback policy is 'error'")
        return self.fallback


def _last_user_content(request: ChatRequest) -> str:
    for message in reversed(request.messages):
        if message.role == "user":
            return message.content
    return ""


def _prompt_turn(request: ChatRequest) -> str:
    matches = prompts.CITE_INSTRUCTION_RE.findall(_last_user_content(request))
    return matches[-1] if matches else ""

def _prompt_previous(request: ChatRequest) -> str:
    match = prompts.DRAFT_BLOCK_RE.search(_last_user_content(request))
    return match.group(1) if match else ""


def _candidate_count(request: ChatRequest, pattern) -> int:
    positions = [int(p) for p in pattern.findall(_last_user_content(request))]
    return max(positions) if positions else 1


def _subdigest(digest: str, *parts) -> int:
    key = digest + "/" + "/".join(str(p) for p in parts)
    return int(hashlib.sha256(key.encode("utf-8")).hexdigest(), 16)


def vote_choice(entry: dict, digest: str, candidate_count: int) -> int:
    """Apply a vote rule; exposed so tests can precompute expected tallies."""
    rule = entry.get("rule", "digest_mod")
    if isinstance(rule, dict):
        return rule["fixed"]
    if rule == "first":
        return 1
    return (digest_int(digest) % candidate_count) + 1


def judge_scores(entry: dict, digest: str, position: int) -> list[int]:
    """Six dimension scores the mock assigns to one presented summary."""
    if entry.get("rule", "digest") == "position":
        return [max(1, 6 - position)] * len(_DIMENSIONS)
    return [
        (_subdigest(digest, position, dim) % 5) + 1 for dim in _DIMENSIONS
    ]


def judge_vote(entry: dict, digest: str, candidate_count: int) -> int:
    if entry.get("rule", "digest") == "position":
        return 1
    return (_subdigest(digest, "vote") % candidate_count) + 1


class MockBackend:
    """Offline backend; replies are pure functions of the request and seed."""

    supports_sample_count = True

    def __init__(self, script: MockScript, seed: int = 0):
        self.script = script
        self.seed = seed

    def _render(self, entry: dict, request: ChatRequest, sample_index: int) -> str:
        digest = request_digest(self.seed, request.request_tag, request.messages, sample_index)
        kind = entry.get("kind", "template")
        if kind == "vote":
            k = _candidate_count(request, prompts.VOTE_CANDIDATE_RE)
            choice = vote_choice(entry, digest, k)
            return f"Weighed all {k} candidates.\nCHOICE: {choice}"
        if kind == "judge":
            k = _candidate_count(request, prompts.JUDGE_SUMMARY_RE)
            lines = []
            for position in range(1, k + 1):
                scores = judge_scores(entry, digest, position)
                pairs = ", ".join(f"{d}={s}" for d, s in zip(_DIMENSIONS, scores))
                lines.append(f"Scores {position}: {pairs}")
            lines.append(f"Vote: {judge_vote(entry, digest, k)}")
            return "\n".join(lines)
        values = {
            "digest": digest,
            "sample_index": sample_index,
            "turn": _prompt_turn(request),
            "previous": _prompt_previous(request),
        }
        return entry["template"].format(**values).strip()

    def complete(self, request: ChatRequest) -> ChatResponse:
        entry = self.script.entry_for(request.request_tag)
        completions = tuple(
            self._render(entry, request, i) for i in range(request.sample_count)
        )
        prompt_tokens = sum(len(m.content.split()) for m in request.messages)
        completion_tokens = sum(len(c.split()) for c in completions)
        return ChatResponse(
            completions=completions,
            usage=Usage(prompt_tokens=prompt_tokens, completion_tokens=completion_tokens),
            latency_ms=0,
        )


def mock_backend(script: MockScript | dict, seed: int = 0) -> MockBackend:
    """Build a mock backend from a script value or pre-validated script."""
    if isinstance(script, dict):
        script = MockScript.from_dict(script)
    return MockBackend(script=script, seed=seed)
