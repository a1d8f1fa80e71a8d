"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines. Oracle comparisons use the independent brute-force implementations
from test_metrics.
"""

import contextlib
import itertools
import json
import math
import random
import time

import pytest

from citeforge.cli import main as cli_main
from citeforge.config import RunConfig
from citeforge.generator import (
    GeneratorConfig,
    beam_state_to_dict,
    build_vote_prompt,
    candidate_to_dict,
    run_generator,
    vote_round,
)
from citeforge.gscore import DimensionScores, JudgeParseError, JudgeVerdict, aggregate, parse_judge_reply
from citeforge.metrics import lint_citations, rouge_l, rouge_n
from citeforge.mock import request_digest, vote_choice
from citeforge.pipeline import resume_run, run_single_record
from citeforge.provider import DecoderRoles
from citeforge.runlog import read_run
from citeforge.corpus import load_corpus
from conftest import make_record, mock_provider, write_corpus_dir
from test_generator import candidate, plain_elements
from test_metrics import oracle_lcs, oracle_ngram_prf

ROLES = DecoderRoles("m", "m", "m")


@contextlib.contextmanager
def criterion(number, title):
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {number:2d} FAIL  {title}")
        raise
    print(f"[acceptance] criterion {number:2d} PASS  {title}")


def all_sequences(alphabet, max_len):
    for length in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=length)


def test_criterion_1_rouge_oracle_suite():
    with criterion(1, "ROUGE matches brute-force oracles on token sequences"):
        started = time.perf_counter()
        alphabet = ("a", "b", "c")
        small = [list(s) for s in all_sequences(alphabet, 3)]
        everything = [list(s) for s in all_sequences(alphabet, 6)]
        rng = random.Random(20240817)
        pairs = [(x, y) for x in small for y in small]
        pairs.extend(
            (seq, rng.choice(everything)) for seq in everything for _ in range(12)
        )
        for cand_tokens, ref_tokens in pairs:
            cand_text, ref_text = " ".join(cand_tokens), " ".join(ref_tokens)
            got_l = rouge_l(cand_text, ref_text)
            lcs = oracle_lcs(cand_tokens, ref_tokens)
            want_p = lcs / len(cand_tokens) if cand_tokens else 0.0
            want_r = lcs / len(ref_tokens) if ref_tokens else 0.0
            want_f = 2 * want_p * want_r / (want_p + want_r) if want_p + want_r else 0.0
            assert math.isclose(got_l.precision, want_p, abs_tol=1e-9)
            assert math.isclose(got_l.recall, want_r, abs_tol=1e-9)
            assert math.isclose(got_l.f1, want_f, abs_tol=1e-9)
            for n in (1, 2):
                got_n = rouge_n(cand_text, ref_text, n)
                want = oracle_ngram_prf(cand_tokens, ref_tokens, n)
                for got_value, want_value in zip(got_n, want):
                    assert math.isclose(got_value, want_value, abs_tol=1e-9)
        # Hand-derived cases.
        assert math.isclose(
            rouge_n("the cat sat", "the cat was here", 1).f1, 4 / 7, abs_tol=1e-6
        )
        assert math.isclose(rouge_l("a b c d", "a c b d").f1, 3 / 4, abs_tol=1e-6)
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"oracle suite took {elapsed:.2f}s"


def test_criterion_2_rouge_properties():
    with criterion(2, "ROUGE symmetry/identity/disjoint/bounds on 1000 random pairs"):
        started = time.perf_counter()
        rng = random.Random(99)
        vocab_a = [f"w{i}" for i in range(30)]
        vocab_b = [f"z{i}" for i in range(30)]  # disjoint from vocab_a
        metrics = (lambda a, b: rouge_n(a, b, 1), lambda a, b: rouge_n(a, b, 2), rouge_l)
        for index in range(1000):
            a = " ".join(rng.choices(vocab_a, k=rng.randrange(1, 15)))
            if index % 3 == 0:
                b = a  # identity
            elif index % 3 == 1:
                b = " ".join(rng.choices(vocab_b, k=rng.randrange(1, 15)))  # disjoint
            else:
                b = " ".join(rng.choices(vocab_a, k=rng.randrange(1, 15)))
            for metric in metrics:
                left, right = metric(a, b), metric(b, a)
                assert math.isclose(left.f1, right.f1, abs_tol=1e-12)
                for value in (*left, *right):
                    assert 0.0 <= value <= 1.0
                if index % 3 == 0 and metric is rouge_l:
                    assert left.f1 == 1.0
                if index % 3 == 0 and metric is not rouge_l and len(a.split()) >= 2:
                    assert left.f1 == 1.0
                if index % 3 == 1:
                    assert left.f1 == 0.0
        elapsed = time.perf_counter() - started
        assert elapsed < 5.0, f"property suite took {elapsed:.2f}s"


def _check_beam_invariants(cfg, trace, n_refs):
    assert len(trace) == n_refs
    expected_pool = cfg.n_s  # one sentinel parent on turn 1
    previous_retained = 1
    previous_cited = {None: frozenset()}
    for state in trace:
        assert state.pool_size == expected_pool
        assert state.pool_size <= cfg.n_s * cfg.n_c
        if state.turn > 1 and cfg.n_s >= cfg.n_c:
            assert state.pool_size == cfg.n_s * cfg.n_c
        assert 1 <= len(state.retained) <= cfg.n_c
        assert len(state.retained) == min(cfg.n_c, state.pool_size)
        for cand in state.retained:
            assert cand.turn == state.turn
            assert cand.parent_index is not None
            assert 0 <= cand.parent_index < previous_retained
            assert cand.cited <= set(range(1, state.turn + 1))
            parent_cited = previous_cited.get(cand.parent_index, frozenset())
            assert parent_cited <= cand.cited  # citation-preserving mock
        previous_retained = len(state.retained)
        previous_cited = {
            i: cand.cited for i, cand in enumerate(state.retained)
        }
        expected_pool = min(cfg.n_c, state.pool_size) * cfg.n_s


def test_criterion_3_beam_invariants_randomized():
    with criterion(3, "beam invariants + bit-identical reruns over randomized configs"):
        started = time.perf_counter()
        rng = random.Random(7)
        configs = [(2, 2, 5, 3), (3, 2, 0, 4), (1, 3, 2, 5), (1, 1, 1, 3), (3, 3, 4, 2)]
        configs += [
            (rng.randint(1, 3), rng.randint(1, 3), rng.randint(0, 5), rng.randint(1, 5))
            for _ in range(7)
        ]
        for n_s, n_c, n_v, n_refs in configs:
            cfg = GeneratorConfig(n_s=n_s, n_c=n_c, n_v=n_v)
            record = make_record("rec", n_refs)
            runs = []
            for _ in range(2):
                provider = mock_provider(seed=1000 + n_refs)
                final, trace = run_generator(
                    provider, record, plain_elements(record), cfg, ROLES
                )
                runs.append(
                    json.dumps(
                        {
                            "final": candidate_to_dict(final),
                            "trace": [beam_state_to_dict(s) for s in trace],
                        },
                        sort_keys=True,
                    )
                )
            assert runs[0] == runs[1], f"rerun differs for {(n_s, n_c, n_v, n_refs)}"
            provider = mock_provider(seed=1000 + n_refs)
            _, trace = run_generator(provider, record, plain_elements(record), cfg, ROLES)
            _check_beam_invariants(cfg, trace, n_refs)
        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"beam suite took {elapsed:.2f}s"


def test_criterion_4_degenerate_beam_cites_every_reference():
    with criterion(4, "degenerate beam (n_s=1, n_c=1) cites exactly 1..n"):
        for n_refs in (1, 3, 5):
            record = make_record("rec", n_refs)
            provider = mock_provider(seed=2)
            cfg = GeneratorConfig(n_s=1, n_c=1, n_v=1)
            final, trace = run_generator(
                provider, record, plain_elements(record), cfg, ROLES
            )
            assert len(trace) == n_refs
            assert all(len(s.retained) == 1 for s in trace)
            assert final.cited == set(range(1, n_refs + 1))


def test_criterion_5_ablation_equivalences(tmp_path):
    with criterion(5, "ablation flags match their explicit-knob semantics"):
        corpus_dir = write_corpus_dir(tmp_path / "corpus", [make_record("rec1", 3)])

        def run(run_id, *extra):
            code = cli_main(
                ["run", "--corpus", str(corpus_dir), "--out", str(tmp_path / "out"),
                 "--mock", "builtin", "--seed", "5", "--run-id", run_id, *extra]
            )
            assert code == 0
            return tmp_path / "out" / run_id

        flagged = run("flagged", "--ablation", "no-reflective")
        explicit = run("explicit", "--n-v", "0")
        log = read_run(flagged / "rec1" / "run.jsonl")
        assert log.config_snapshot["generator"]["n_v"] == 0
        assert all(
            e.get("tag") != "vote" for e in log.events if e["type"] == "provider_call"
        )
        for event in log.events:
            if event["type"] == "turn_completed":
                assert event["tally"] is None
                samples = [c["sample_index"] for c in event["retained"]]
                assert samples == sorted(samples)  # first-n_c, generation order
        assert (flagged / "rec1.citeforge-no-reflective.txt").read_bytes() == (
            explicit / "rec1.citeforge.txt"
        ).read_bytes()

        single = run("single", "--ablation", "no-incremental")
        log = read_run(single / "rec1" / "run.jsonl")
        turns = [e for e in log.events if e["type"] == "turn_completed"]
        assert len(turns) == 1


def test_criterion_6_vote_tally_matches_precomputed_counts():
    with criterion(6, "vote tallies match offline application of the mock rules"):
        # digest rule: expected counts derived by hashing each ballot request.
        entry = {"kind": "vote", "rule": "digest_mod"}
        seed = 31
        cands = [candidate(text, 1) for text in ("AA", "BB", "CC")]
        expected = {1: 0, 2: 0, 3: 0}
        for ballot in range(1, 7):
            messages = build_vote_prompt(cands, "ctx", ballot, 6)
            digest = request_digest(seed, "vote", messages, 0)
            expected[vote_choice(entry, digest, 3)] += 1
        provider = mock_provider({"tags": {"vote": entry}}, seed=seed)
        tally = vote_round(provider, cands, "ctx", GeneratorConfig(n_v=6), ROLES)
        assert tally.counts == expected
        assert tally.total_votes == 6
        want_ranking = tuple(sorted(expected, key=lambda p: (-expected[p], p)))
        assert tally.ranking == want_ranking

        # fixed rule: exact counts and the declared tie-break.
        provider = mock_provider({"tags": {"vote": {"kind": "vote", "rule": {"fixed": 2}}}})
        tally = vote_round(provider, cands, "ctx", GeneratorConfig(n_v=4), ROLES)
        assert tally.counts == {1: 0, 2: 4, 3: 0}
        assert tally.ranking == (2, 1, 3)


def test_criterion_7_judge_parsing_and_aggregation():
    with criterion(7, "judge grammar parses exactly; aggregation matches hand math"):
        reply = (
            "Scores 1: consistency=5, coherence=4, comparative=4, integrity=5, "
            "fluency=5, cite_accuracy=3\nVote: 1"
        )
        per_position, vote = parse_judge_reply(reply, 1)
        assert per_position[0].as_tuple() == (5, 4, 4, 5, 5, 3)
        assert vote == 1
        with pytest.raises(JudgeParseError):
            parse_judge_reply(reply.replace("consistency=5", "consistency=6"), 1)

        def verdict(a, b, vote):
            return JudgeVerdict(
                per_system=(DimensionScores(*a), DimensionScores(*b)),
                vote=vote,
                raw_reply="",
            )

        fixture = {
            "r1": [verdict((5, 4, 4, 5, 5, 3), (2, 2, 2, 3, 3, 3), 1),
                   verdict((4, 4, 4, 4, 4, 4), (3, 3, 3, 3, 3, 3), 1)],
            "r2": [verdict((1, 2, 1, 2, 1, 2), (5, 5, 4, 4, 5, 5), 2),
                   verdict((2, 2, 2, 2, 2, 2), (4, 4, 4, 4, 5, 5), 2)],
            "r3": [verdict((3, 3, 3, 3, 3, 3), (3, 3, 3, 3, 3, 3), 1),
                   verdict((5, 5, 5, 5, 5, 5), (1, 1, 1, 1, 1, 1), 1)],
        }
        report = aggregate(fixture, ["s1", "s2"])
        s1 = (5 + 4 + 4 + 5 + 5 + 3) + (4 * 6) + (1 + 2 + 1 + 2 + 1 + 2) + (2 * 6) + (3 * 6) + (5 * 6)
        s2 = (2 + 2 + 2 + 3 + 3 + 3) + (3 * 6) + (5 + 5 + 4 + 4 + 5 + 5) + (4 + 4 + 4 + 4 + 5 + 5) + (3 * 6) + (1 * 6)
        assert math.isclose(report.g_score["s1"], s1 / 36, abs_tol=1e-9)
        assert math.isclose(report.g_score["s2"], s2 / 36, abs_tol=1e-9)
        assert math.isclose(report.g_prf["s1"], 100 * 4 / 6, abs_tol=1e-9)
        assert math.isclose(report.g_prf["s2"], 100 * 2 / 6, abs_tol=1e-9)
        assert math.isclose(sum(report.g_prf.values()), 100.0, abs_tol=1e-9)


def test_criterion_8_citation_lint_fixture():
    with criterion(8, "citation lint on an 11-reference fixture"):
        sentences = [
            f"Prior work explored this direction [Reference {i}]." for i in range(1, 12)
        ]
        fixture = " ".join(sentences)
        report = lint_citations(fixture, 11)
        assert report.cited == set(range(1, 12))
        assert report.coverage == pytest.approx(1.0)
        assert report.out_of_range == frozenset()
        assert report.malformed_spans == ()

        injected = fixture + " A stray claim [Reference 12] and a typo [reference 2]."
        report = lint_citations(injected, 11)
        assert report.out_of_range == {12}
        assert "[reference 2]" in report.malformed_spans
        assert report.cited == set(range(1, 12))
        assert report.cited.isdisjoint(report.out_of_range)


def test_criterion_9_crash_resume_equivalence(tmp_path):
    with criterion(9, "resume after turn k equals an uninterrupted run, k=1..n-1"):
        n_refs = 4
        corpus_dir = write_corpus_dir(tmp_path / "corpus", [make_record("rec1", n_refs)])
        corpus = load_corpus(corpus_dir)
        cfg = RunConfig(
            corpus=corpus_dir, mock_script="builtin", seed=13,
            generator=GeneratorConfig(n_s=2, n_c=2, n_v=3),
        )
        full_dir = tmp_path / "full"
        full_dir.mkdir()
        outcome = run_single_record(corpus.records[0], cfg, full_dir, run_id="full")
        full_summary = outcome.summary_path.read_bytes()
        log_lines = outcome.log_path.read_text(encoding="utf-8").splitlines(keepends=True)

        for k in range(1, n_refs):
            kept = []
            for line in log_lines:
                kept.append(line)
                event = json.loads(line)
                if event.get("type") == "turn_completed" and event.get("turn") == k:
                    break
            else:
                pytest.fail(f"no turn_completed event for turn {k}")
            partial_dir = tmp_path / f"partial-{k}" / "rec1"
            partial_dir.mkdir(parents=True)
            partial_log = partial_dir / "run.jsonl"
            partial_log.write_text("".join(kept), encoding="utf-8")
            resumed = resume_run(partial_log, corpus)
            assert resumed.summary_path.read_bytes() == full_summary, f"k={k}"


def test_criterion_10_end_to_end_smoke(tmp_path, capsys):
    with criterion(10, "end-to-end run/score/judge/report on a toy corpus in <5s"):
        started = time.perf_counter()
        corpus_dir = write_corpus_dir(
            tmp_path / "corpus", [make_record("rec1", 2), make_record("rec2", 3)]
        )
        out = tmp_path / "out"
        assert cli_main(
            ["run", "--corpus", str(corpus_dir), "--out", str(out), "--mock", "builtin",
             "--seed", "8", "--run-id", "smoke"]
        ) == 0
        run_dir = out / "smoke"
        assert cli_main(
            ["score", "--candidates", str(run_dir), "--corpus", str(corpus_dir)]
        ) == 0
        assert cli_main(
            ["judge", "--candidates", str(run_dir), "--corpus", str(corpus_dir),
             "--mock", "builtin", "--seed", "8", "--repetitions", "2"]
        ) == 0
        assert cli_main(["report", "--out", str(run_dir)]) == 0
        elapsed = time.perf_counter() - started

        # Declared artifacts, all parseable with the expected shapes.
        manifest = json.loads((run_dir / "manifest.json").read_text())
        assert manifest["failures"] == 0
        for record_id in ("rec1", "rec2"):
            assert (run_dir / f"{record_id}.citeforge.txt").read_text().strip()
            log = read_run(run_dir / record_id / "run.jsonl")
            assert log.config_snapshot["system"] == "citeforge"
            types = {e["type"] for e in log.events}
            assert {"provider_call", "elements", "turn_completed", "final_selected"} <= types
        rouge = json.loads((run_dir / "rouge.json").read_text())
        assert set(rouge["systems"]) == {"citeforge"}
        for component in ("precision", "recall", "f1"):
            value = rouge["systems"]["citeforge"]["mean"]["rouge1"][component]
            assert 0.0 <= value <= 1.0
        gscore = json.loads((run_dir / "gscore.json").read_text())
        assert gscore["systems"] == ["citeforge"]
        assert gscore["g_prf"]["citeforge"] == pytest.approx(100.0)
        assert 1.0 <= gscore["g_score"]["citeforge"] <= 5.0
        assert len(gscore["per_record"]["rec1"]) == 2
        report = json.loads((run_dir / "report.json").read_text())
        assert "rouge1_f1" in report["systems"]["citeforge"]
        assert "g_score" in report["systems"]["citeforge"]
        assert (run_dir / "gscore.run.jsonl").is_file()
        assert elapsed < 5.0, f"smoke took {elapsed:.2f}s"
