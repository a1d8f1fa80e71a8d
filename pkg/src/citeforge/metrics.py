"""Deterministic text metrics: ROUGE-1/2/L (F1) and a citation-format lint.

Scores use the simplest reproducible convention: lowercase, split on any
non-alphanumeric run, no stemming, no stopword removal. ROUGE-L is computed
at summary level (one LCS over the whole token sequences).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

# Alphanumeric runs, unicode-aware; underscore is a separator.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# The only accepted citation surface form: case-sensitive, one space.
CITATION_RE = re.compile(r"\[Reference (\d+)\]")

# Near-miss citation shapes reported by the lint.
_NEAR_MISS_RES = (
    re.compile(r"\[\s*[Rr]eference\s+\d+\s*\]"),   # wrong case / spacing
    re.compile(r"\[\s*[Rr]ef\.?\s*\d+\s*\]"),      # abbreviated
    re.compile(r"\bReference\s+\d+\b"),            # unbracketed
)


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float


_ZERO = PRF(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RougeScores:
    """ROUGE-1/2/L precision, recall, and F1 for one candidate/reference pair."""

    rouge1: PRF
    rouge2: PRF
    rougeL: PRF

    def to_dict(self) -> dict:
        return {
            name: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
            for name, s in (
                ("rouge1", self.rouge1),
                ("rouge2", self.rouge2),
                ("rougeL", self.rougeL),
            )
        }


@dataclass(frozen=True)
class CitationReport:
    """What a text cites and how: exact tags, range check, near misses."""

    cited: frozenset[int]
    out_of_range: frozenset[int]
    malformed_spans: tuple[str, ...]
    coverage: float


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric run."""
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _prf(matches: float, n_cand: int, n_ref: int) -> PRF:
    precision = matches / n_cand if n_cand else 0.0
    recall = matches / n_ref if n_ref else 0.0
    if precision + recall == 0.0:
        return PRF(precision, recall, 0.0)
    return PRF(precision, recall, 2 * precision * recall / (precision + recall))


def rouge_n(candidate: str, reference: str, n: int) -> PRF:
    """Clipped n-gram overlap, n in {1, 2}."""
    if n not in (1, 2):
        raise ValueError(f"n must be 1 or 2, got {n}")
    cand = _ngrams(tokenize(candidate), n)
    ref = _ngrams(tokenize(reference), n)
    matches = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _prf(matches, sum(cand.values()), sum(ref.values()))


def lcs_length(xs: list[str], ys: list[str]) -> int:
    """Length of the longest common subsequence of two token lists."""
    if not xs or not ys:
        return 0
    row = [0] * (len(ys) + 1)
    for x in xs:
        prev = 0
        for j, y in enumerate(ys, start=1):
            cur = row[j]
            row[j] = prev + 1 if x == y else max(row[j], row[j - 1])
            prev = cur
    return row[len(ys)]


def rouge_l(candidate: str, reference: str) -> PRF:
    """Summary-level LCS overlap over the whole token sequences."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    return _prf(lcs_length(cand, ref), len(cand), len(ref))


def score_pair(candidate: str, reference: str) -> RougeScores:
    return RougeScores(
        rouge1=rouge_n(candidate, reference, 1),
        rouge2=rouge_n(candidate, reference, 2),
        rougeL=rouge_l(candidate, reference),
    )


def citation_indices(text: str) -> set[int]:
    """All reference indices cited with the exact tag form, range-unchecked."""
    return {int(m) for m in CITATION_RE.findall(text)}


def lint_citations(text: str, n_references: int) -> CitationReport:
    """Scan for ``[Reference i]`` tags and classify what was found.

    Exact tags split into in-range (``cited``) and ``out_of_range``; shapes
    that look like citation attempts but do not match the exact form land in
    ``malformed_spans``. Coverage is the fraction of 1..n_references cited.
    """
    if n_references < 1:
        raise ValueError("n_references must be >= 1")
    exact_spans = [m.span() for m in CITATION_RE.finditer(text)]
    indices = citation_indices(text)
    cited = frozenset(i for i in indices if 1 <= i <= n_references)
    out_of_range = frozenset(indices - cited)

    def overlaps_exact(span: tuple[int, int]) -> bool:
        return any(span[0] < e and s < span[1] for s, e in exact_spans)

    malformed: list[tuple[int, str]] = []
    claimed: list[tuple[int, int]] = []
    for pattern in _NEAR_MISS_RES:
        for m in pattern.finditer(text):
            if overlaps_exact(m.span()):
                continue
            if any(m.start() < e and s < m.end() for s, e in claimed):
                continue
            claimed.append(m.span())
            malformed.append((m.start(), m.group(0)))

    return CitationReport(
        cited=cited,
        out_of_range=out_of_range,
        malformed_spans=tuple(span for _, span in sorted(malformed)),
        coverage=len(cited) / n_references,
    )
