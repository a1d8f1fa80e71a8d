"""Orchestration used by the CLI: per-record runs, scoring, judging, resume."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, RunConfig
from .corpus import Corpus, DatasetRecord
from .extractor import KeyElements, extract_key_elements, summarize_plain
from .generator import (
    BeamState,
    CandidateSummary,
    candidate_to_dict,
    generate_baseline,
    load_examples_file,
    run_generator,
)
from .gscore import aggregate, judge, verdict_to_dict
from .metrics import citation_indices, lint_citations, score_pair
from .mock import MockBackend, MockScript
from .provider import HttpBackend, Provider
from .runlog import RunLogWriter, read_run, resume_point

logger = logging.getLogger(__name__)


class ResumeMismatchError(ConfigError):
    """The log's config snapshot does not fit the current corpus or files."""


@dataclass
class RecordOutcome:
    record_id: str
    system: str
    summary_path: Path | None
    log_path: Path | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def make_provider(cfg: RunConfig, sink=None) -> Provider:
    """Build the provider: a mock serving every role, or one HTTP backend."""
    if cfg.mock_script:
        script = (
            MockScript.builtin()
            if cfg.mock_script == "builtin"
            else MockScript.from_file(cfg.mock_script)
        )
        backend = MockBackend(script=script, seed=cfg.seed)
        backoff = 0.0
    elif cfg.base_url:
        backend = HttpBackend(base_url=cfg.base_url)
        backoff = 0.5
    else:
        raise ConfigError("no backend configured: set a mock script or a base URL")
    return Provider(
        default_backend=backend,
        retry_budget=cfg.retry_budget,
        backoff_base=backoff,
        max_in_flight=cfg.max_in_flight,
        sink=sink,
        store_payloads=cfg.store_payloads,
    )


def gather_elements(
    provider: Provider,
    record: DatasetRecord,
    cfg: RunConfig,
    log: RunLogWriter | None = None,
    have: dict | None = None,
) -> dict:
    """Extract key elements (or plain summaries) for the target and references.

    Already-known entries in ``have`` are kept as-is, so a resumed run only
    extracts what its log is missing.
    """
    questions = cfg.questions()
    elements: dict = dict(have or {})
    for paper in (record.target, *record.references):
        if paper.id in elements:
            continue
        if cfg.generator.ablation_no_extractor:
            text = summarize_plain(provider, paper, cfg.roles, cfg.char_budget)
            elements[paper.id] = text
            event = {"type": "elements", "paper_id": paper.id, "kind": "plain", "text": text}
        else:
            parsed = extract_key_elements(
                provider, paper, questions, cfg.roles, cfg.char_budget
            )
            elements[paper.id] = parsed
            event = {
                "type": "elements",
                "paper_id": paper.id,
                "kind": "key_elements",
                "answers": list(parsed.answers),
                "raw_reply": parsed.raw_reply,
            }
        if log is not None:
            log.append(event)
    return elements


def elements_from_events(events: list[dict]) -> dict:
    elements: dict = {}
    for event in events:
        if event.get("type") != "elements":
            continue
        if event["kind"] == "plain":
            elements[event["paper_id"]] = event["text"]
        else:
            elements[event["paper_id"]] = KeyElements(
                answers=tuple(event["answers"]),
                source_id=event["paper_id"],
                raw_reply=event.get("raw_reply", ""),
            )
    return elements


def _summary_path(run_dir: Path, record_id: str, system: str) -> Path:
    return run_dir / f"{record_id}.{system}.txt"


def _write_summary(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + ("\n" if not text.endswith("\n") else ""), encoding="utf-8")


def run_single_record(record: DatasetRecord, cfg: RunConfig, run_dir: Path,
                      run_id: str) -> RecordOutcome:
    """Full pipeline for one record: elements, generation, summary artifact."""
    system = cfg.system_name()
    log_path = run_dir / record.record_id / "run.jsonl"
    snapshot = cfg.snapshot()
    snapshot["record_id"] = record.record_id
    writer = RunLogWriter.create(log_path, run_id=run_id, config_snapshot=snapshot)
    provider = make_provider(cfg, sink=writer)
    try:
        cfg.roles.validate(provider)
        if cfg.baseline:
            examples_text = (
                load_examples_file(cfg.examples_file) if cfg.baseline == "few_shot" else None
            )
            try:
                text = generate_baseline(
                    provider, record, cfg.baseline, cfg.roles,
                    examples_text=examples_text, char_budget=cfg.char_budget,
                )
            except Exception as exc:
                writer.append({"type": "error", "stage": "baseline", "message": str(exc)})
                raise
            final = CandidateSummary(
                text=text,
                turn=record.n_references,
                parent_index=None,
                sample_index=0,
                cited=frozenset(citation_indices(text)),
            )
            writer.append({"type": "final_selected", "candidate": candidate_to_dict(final)})
        else:
            try:
                elements = gather_elements(provider, record, cfg, log=writer)
            except Exception as exc:
                writer.append({"type": "error", "stage": "extract", "message": str(exc)})
                raise
            final, _ = run_generator(
                provider, record, elements, cfg.generator, cfg.roles, log=writer
            )
            text = final.text
        summary_path = _summary_path(run_dir, record.record_id, system)
        _write_summary(summary_path, text)
        return RecordOutcome(
            record_id=record.record_id,
            system=system,
            summary_path=summary_path,
            log_path=log_path,
        )
    finally:
        writer.close()


def extract_single_record(record: DatasetRecord, cfg: RunConfig, run_dir: Path,
                          run_id: str) -> Path:
    """Extraction only; writes ``<record-id>.elements.json``."""
    log_path = run_dir / record.record_id / "run.jsonl"
    snapshot = cfg.snapshot()
    snapshot["record_id"] = record.record_id
    writer = RunLogWriter.create(log_path, run_id=run_id, config_snapshot=snapshot)
    provider = make_provider(cfg, sink=writer)
    try:
        elements = gather_elements(provider, record, cfg, log=writer)
    finally:
        writer.close()
    payload = {}
    for paper_id, value in elements.items():
        if isinstance(value, str):
            payload[paper_id] = {"kind": "plain", "text": value}
        else:
            payload[paper_id] = {
                "kind": "key_elements",
                "answers": list(value.answers),
                "raw_reply": value.raw_reply,
            }
    out = run_dir / f"{record.record_id}.elements.json"
    out.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return out


def resume_run(log_path: str | Path, corpus: Corpus) -> RecordOutcome:
    """Continue an aborted record run from its last completed turn.

    The log's config snapshot is authoritative; the corpus only needs to
    still contain a matching record. A complete log is a no-op beyond
    re-writing the summary artifact if it went missing.
    """
    log_path = Path(log_path)
    run = read_run(log_path)
    point = resume_point(log_path)
    snap = run.config_snapshot
    record_id = snap.get("record_id")
    system = snap.get("system", "citeforge")
    if not record_id:
        raise ResumeMismatchError(f"{log_path}: header lacks a record_id")
    try:
        record = corpus.record(record_id)
    except KeyError:
        raise ResumeMismatchError(
            f"{log_path}: record {record_id!r} not present in the corpus"
        ) from None
    cfg = RunConfig.from_snapshot(snap)
    run_dir = log_path.parent.parent
    summary_path = _summary_path(run_dir, record_id, system)

    if point.complete:
        if not summary_path.exists():
            _write_summary(summary_path, point.final_text or "")
        logger.info("%s: run already complete", log_path)
        return RecordOutcome(
            record_id=record_id, system=system,
            summary_path=summary_path, log_path=log_path,
        )

    if point.completed_turn > record.n_references:
        raise ResumeMismatchError(
            f"{log_path}: log has {point.completed_turn} completed turns but the "
            f"record has only {record.n_references} references"
        )

    writer = RunLogWriter.reopen(log_path)
    provider = make_provider(cfg, sink=writer)
    try:
        cfg.roles.validate(provider)
        if cfg.baseline or cfg.generator.ablation_no_incremental:
            # Single-shot paths have no turn state worth keeping: redo them.
            writer.close()
            fresh = log_path.with_suffix(".jsonl.resume")
            if fresh.exists():
                fresh.unlink()
            stale = log_path.rename(fresh)
            logger.warning("%s: single-shot run restarted (old log at %s)", log_path, stale)
            return run_single_record(record, cfg, run_dir, run_id=run.run_id)
        known = elements_from_events(run.events)
        elements = gather_elements(provider, record, cfg, log=writer, have=known)
        resume_state = None
        if point.completed_turn > 0:
            resume_state = BeamState(
                turn=point.completed_turn,
                retained=tuple(point.retained),
                tally=None,
                pool_size=len(point.retained),
            )
        final, _ = run_generator(
            provider, record, elements, cfg.generator, cfg.roles,
            log=writer, resume_state=resume_state,
        )
    finally:
        writer.close()
    _write_summary(summary_path, final.text)
    return RecordOutcome(
        record_id=record_id, system=system,
        summary_path=summary_path, log_path=log_path,
    )


# --- scoring and judging -------------------------------------------------------


def discover_candidates(directory: str | Path, corpus: Corpus) -> dict:
    """Map ``<record-id>.<system>.txt`` files to ``{system: {record_id: text}}``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"candidates directory not found: {directory}")
    ids = sorted(corpus.record_ids, key=len, reverse=True)
    by_system: dict = {}
    for path in sorted(directory.glob("*.txt")):
        stem = path.name[: -len(".txt")]
        record_id = next((rid for rid in ids if stem.startswith(rid + ".")), None)
        if record_id is None:
            raise ConfigError(
                f"unmatched candidate file {path.name}: no record id prefix "
                f"matches (expected <record-id>.<system>.txt)"
            )
        system = stem[len(record_id) + 1 :]
        if not system:
            raise ConfigError(f"unmatched candidate file {path.name}: empty system name")
        by_system.setdefault(system, {})[record_id] = path.read_text(encoding="utf-8")
    if not by_system:
        raise ConfigError(f"no candidate *.txt files found in {directory}")
    return by_system


def score_candidates(corpus: Corpus, by_system: dict) -> dict:
    """Per-record and mean ROUGE for every system; skips gold-less records."""
    result: dict = {"systems": {}, "skipped_records": []}
    skipped = set()
    for system in sorted(by_system):
        per_record = {}
        for record_id, candidate in sorted(by_system[system].items()):
            record = corpus.record(record_id)
            if not record.gold_related_work.strip():
                skipped.add(record_id)
                continue
            per_record[record_id] = score_pair(candidate, record.gold_related_work).to_dict()
        means = {}
        if per_record:
            for metric in ("rouge1", "rouge2", "rougeL"):
                means[metric] = {
                    component: sum(r[metric][component] for r in per_record.values())
                    / len(per_record)
                    for component in ("precision", "recall", "f1")
                }
        result["systems"][system] = {
            "records_scored": len(per_record),
            "per_record": per_record,
            "mean": means,
        }
    for record_id in sorted(skipped):
        logger.warning("record %s skipped: no gold related work", record_id)
    result["skipped_records"] = sorted(skipped)
    return result


def judge_candidates(
    corpus: Corpus, by_system: dict, cfg: RunConfig, log_path: Path | None = None
) -> dict:
    """Judge every covered record across all systems; returns the report JSON."""
    systems = sorted(by_system)
    records = [r for r in corpus.records if any(r.record_id in by_system[s] for s in systems)]
    if not records:
        raise ConfigError("no records covered by the candidate files")
    for record in records:
        missing = [s for s in systems if record.record_id not in by_system[s]]
        if missing:
            raise ConfigError(
                f"record {record.record_id}: missing candidate for system(s) "
                + ", ".join(missing)
            )
        if not record.gold_related_work.strip():
            raise ConfigError(
                f"record {record.record_id}: no gold related work; judging needs one"
            )

    writer = None
    if log_path is not None:
        writer = RunLogWriter.create(
            log_path, run_id="judge", config_snapshot={**cfg.snapshot(), "systems": systems}
        )
    provider = make_provider(cfg, sink=writer)
    per_record: dict = {}
    try:
        cfg.roles.validate(provider)
        for record in records:
            candidates = [(s, by_system[s][record.record_id]) for s in systems]
            rng = random.Random(f"{cfg.seed}:{record.record_id}:judge")
            verdicts = judge(
                provider,
                record.gold_related_work,
                candidates,
                cfg.roles,
                repetitions=cfg.judge_repetitions,
                temperature=cfg.judge_temperature,
                rng=rng,
            )
            if writer is not None:
                for verdict in verdicts:
                    writer.append(
                        {
                            "type": "verdict",
                            "record_id": record.record_id,
                            **verdict_to_dict(verdict),
                        }
                    )
            per_record[record.record_id] = verdicts
    finally:
        if writer is not None:
            writer.close()

    report = aggregate(per_record, systems)
    lint = {
        system: sum(
            lint_citations(by_system[system][r.record_id], r.n_references).coverage
            for r in records
        )
        / len(records)
        for system in systems
    }
    expected = len(records) * cfg.judge_repetitions
    got = sum(len(v) for v in per_record.values())
    payload = report.to_dict()
    payload["cite_lint_coverage"] = lint
    payload["repetitions"] = cfg.judge_repetitions
    payload["dropped_repetitions"] = expected - got
    return payload
