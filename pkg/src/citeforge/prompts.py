"""Prompt text shared by the pipeline stages.

Everything the decoders see is assembled from the templates below. They live
in one module so the offline mock backend can recognize the same markers the
real prompts carry (draft delimiters, citation tags, candidate headers)
without importing the higher-level stages.
"""

import re

# --- extraction ------------------------------------------------------------

EXTRACT_SYSTEM = (
    "You read one research paper and answer a fixed list of questions about "
    "it, factually and concisely."
)

EXTRACT_INSTRUCTION = (
    "Answer each question using only the paper content below. Reply with "
    "exactly {count} numbered items, one per question, in order: start each "
    "item with its number and a period, like \"1.\"."
)

EXTRACT_REFORMAT = (
    "Your previous reply could not be parsed. Reformat it as exactly "
    "{count} numbered items (\"1.\" through \"{count}.\"), one answer per "
    "question, in the original question order. Do not add anything else."
)

# Default guiding questions: one per key element of a paper. Overridable via
# a question file (one question per line, exactly seven lines).
DEFAULT_GUIDING_QUESTIONS = (
    "What research problem does the paper address?",
    "What is the context or motivation behind this work?",
    "What method or approach does the paper propose?",
    "What is the key technical novelty compared with prior work?",
    "What experimental setup and datasets are used?",
    "What are the main results and findings?",
    "What limitations or future work does the paper mention?",
)

ELISION_MARKER = "\n[... middle of the paper elided ...]\n"

# --- plain summarization and direct baselines -------------------------------

SUMMARIZE_PROMPT = (
    "Summarize the current article, preserving as much information as "
    "possible. Content:{content}"
)

BASELINE_GENERATE_PROMPT = (
    "Generate the related work section based on the given target paper "
    "summary and its references summary. Read the Target Paper Content: "
    "{target}. References content: {references}"
)

FEW_SHOT_INSTRUCTION = (
    "Follow the writing style of the example but without including any "
    "content from the example. {examples}"
)

# CoT-style writing instruction used by the single-shot (non-incremental)
# path so its output is not penalized merely for missing writing guidance.
DIRECT_WRITING_INSTRUCTION = (
    "Think step by step about how the references relate to the target paper "
    "and to each other, then write one organized related work section. "
    "Mention reference number j with the exact tag \"[Reference j]\"."
)

# --- incremental comparative generation -------------------------------------

GENERATE_SYSTEM = (
    "You write the related work section of a research paper, extending a "
    "draft one reference at a time."
)

COMPARATIVE_GUIDANCE = (
    "Considering the relationship between the reference paper and the "
    "target paper, as well as existing references in the previously "
    "completed related work, while retaining the content of all referenced "
    "papers mentioned in the previously completed related work."
)

DRAFT_OPEN = "<<<DRAFT"
DRAFT_CLOSE = "DRAFT>>>"

CITE_INSTRUCTION = (
    "Continue the related work so it also covers the new reference paper. "
    "Cite it in the text using the exact tag \"[Reference {index}]\" and "
    "keep every citation tag already present in the draft."
)

# --- candidate voting --------------------------------------------------------

VOTE_SYSTEM = (
    "You rank candidate related-work drafts written for the same target "
    "paper and pick the single best one."
)

VOTE_CANDIDATE_HEADER = "Candidate {position}:"

VOTE_INSTRUCTION = (
    "Judge coverage of the references, comparative analysis against the "
    "target paper, organization, and fluency. End your reply with exactly "
    "one line: CHOICE: <number of the best candidate>"
)

VOTE_BALLOT_LINE = "Ballot {ballot} of {total}."

# --- multi-system judging ----------------------------------------------------

JUDGE_SYSTEM = (
    "You are an impartial judge of related-work summaries. You score every "
    "summary on fixed criteria and vote for the best one."
)

JUDGE_SUMMARY_HEADER = "Summary {position}:"

JUDGE_OUTPUT_FORMAT = (
    "For each summary k, output exactly one line:\n"
    "Scores k: consistency=<1-5>, coherence=<1-5>, comparative=<1-5>, "
    "integrity=<1-5>, fluency=<1-5>, cite_accuracy=<1-5>\n"
    "Then output exactly one final line: Vote: <k>"
)

JUDGE_PASS_LINE = "Evaluation pass {repetition}."

JUDGE_REFORMAT = (
    "Your previous reply could not be parsed. Repeat your evaluation using "
    "only the required lines: one \"Scores k: ...\" line per summary and a "
    "final \"Vote: <k>\" line."
)

# Scoring criteria, one definition per dimension, included verbatim in every
# judge prompt.
JUDGE_CRITERIA = (
    (
        "Consistency",
        "Content consistency between the generated summary and the gold "
        "summary. The generated summary must not contain content that "
        "conflicts with the gold summary.",
    ),
    (
        "Coherence",
        "The quality of language coherence in generated summaries, which "
        "should not just be a heap of related information.",
    ),
    (
        "Comparative",
        "Assess the extent to whether the generated summary conducts a "
        "comparative analysis on references and proposed work. Whether it "
        "provides an integrated summary of similar related works.",
    ),
    (
        "Integrity",
        "Assess if the summary covers essential elements: research context, "
        "reference paper summaries, past research evaluation, contributions, "
        "and innovations.",
    ),
    (
        "Fluency",
        "Assess the quality of the summary in terms of grammar, spelling, "
        "punctuation, word choice, and sentence structure.",
    ),
    (
        "Cite Accuracy",
        "Assess whether the summary correctly cites reference paper in the "
        "format '[Reference i]' when mention the reference paper.",
    ),
)

# --- marker regexes (used by the mock backend) -------------------------------

DRAFT_BLOCK_RE = re.compile(
    re.escape(DRAFT_OPEN) + r"\n(.*?)\n?" + re.escape(DRAFT_CLOSE), re.DOTALL
)
CITE_INSTRUCTION_RE = re.compile(r"exact tag \"\[Reference (\d+)\]\"")
VOTE_CANDIDATE_RE = re.compile(r"(?m)^Candidate (\d+):")
JUDGE_SUMMARY_RE = re.compile(r"(?m)^Summary (\d+):")
