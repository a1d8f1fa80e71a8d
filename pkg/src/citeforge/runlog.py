"""Append-only JSONL run log: provider calls, turn states, verdicts, errors.

One JSON object per line, schema-versioned by a header line. Events are
flushed as they are appended, so a killed run leaves at worst one corrupt
trailing line, which readers tolerate by truncating to the last intact
event. The log is self-contained: the beam trace and the extracted elements
can be rebuilt from events alone, which is what resuming relies on.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from .generator import BeamState, CandidateSummary, beam_state_from_dict, candidate_from_dict

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class RunLogError(Exception):
    """Unreadable, unparseable, or misused run log."""


class RunLogClosed(RunLogError):
    """Append attempted after the writer was closed."""


@dataclass
class RunRecord:
    """A parsed run log: header metadata plus the ordered event sequence."""

    run_id: str
    config_snapshot: dict
    events: list[dict]
    totals: dict
    truncated_tail: bool = False


@dataclass
class ResumePoint:
    """Everything needed to continue a run from its last finished turn."""

    run_id: str
    config_snapshot: dict
    completed_turn: int
    retained: list[CandidateSummary]
    complete: bool
    final_text: str | None


class RunLogWriter:
    """Serialized single-file event writer; safe for concurrent producers."""

    def __init__(self, path: Path, handle, next_seq: int, fsync: bool = False):
        self.path = path
        self._handle = handle
        self._seq = next_seq
        self._fsync = fsync
        self._lock = threading.Lock()
        self._closed = False

    @classmethod
    def create(cls, path: str | Path, run_id: str, config_snapshot: dict,
               fsync: bool = False) -> "RunLogWriter":
        """Start a fresh log; refuses to overwrite an existing one."""
        path = Path(path)
        if path.exists():
            raise RunLogError(f"run log already exists: {path}")
        path.parent.mkdir(parents=True, exist_ok=True)
        handle = path.open("w", encoding="utf-8")
        writer = cls(path=path, handle=handle, next_seq=0, fsync=fsync)
        writer.append(
            {
                "type": "header",
                "schema": SCHEMA_VERSION,
                "run_id": run_id,
                "config": config_snapshot,
            }
        )
        return writer

    @classmethod
    def reopen(cls, path: str | Path, fsync: bool = False) -> "RunLogWriter":
        """Open an existing log for appending, dropping any corrupt tail."""
        path = Path(path)
        lines, truncated, keep_bytes = _scan_lines(path)
        if not lines:
            raise RunLogError(f"{path}: no intact header line")
        if truncated:
            logger.warning("%s: dropping corrupt trailing data on reopen", path)
            with path.open("r+b") as raw:
                raw.truncate(keep_bytes)
        last_seq = lines[-1].get("seq", len(lines) - 1)
        handle = path.open("a", encoding="utf-8")
        return cls(path=path, handle=handle, next_seq=last_seq + 1, fsync=fsync)

    def append(self, event: dict) -> int:
        """Durably append one event; returns its sequence number."""
        with self._lock:
            if self._closed:
                raise RunLogClosed(f"run log {self.path} is closed")
            seq = self._seq
            self._seq += 1
            line = json.dumps({"seq": seq, **event}, ensure_ascii=False, sort_keys=True)
            self._handle.write(line + "\n")
            self._handle.flush()
            if self._fsync:
                os.fsync(self._handle.fileno())
            return seq

    def close(self) -> None:
        with self._lock:
            if not self._closed:
                self._closed = True
                self._handle.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def _scan_lines(path: Path) -> tuple[list[dict], bool, int]:
    """Parse a log file; returns (events, saw_corrupt_tail, intact_byte_count)."""
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise RunLogError(f"cannot read run log {path}: {exc}") from exc
    events: list[dict] = []
    offset = 0
    truncated = False
    for raw_line in blob.splitlines(keepends=True):
        try:
            parsed = json.loads(raw_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            truncated = True
            break
        if not isinstance(parsed, dict):
            truncated = True
            break
        events.append(parsed)
        offset += len(raw_line)
    if truncated:
        logger.warning("%s: corrupt trailing line ignored", path)
    return events, truncated, offset


def compute_totals(events: list[dict]) -> dict:
    totals = {"prompt_tokens": 0, "completion_tokens": 0, "calls": 0}
    for event in events:
        if event.get("type") == "provider_call":
            totals["prompt_tokens"] += event.get("prompt_tokens", 0)
            totals["completion_tokens"] += event.get("completion_tokens", 0)
            totals["calls"] += 1
    return totals


def read_run(path: str | Path) -> RunRecord:
    """Read and validate a run log; tolerates a corrupt trailing line."""
    lines, truncated, _ = _scan_lines(Path(path))
    if not lines:
        raise RunLogError(f"{path}: empty or unparseable run log")
    header = lines[0]
    if header.get("type") != "header" or "run_id" not in header:
        raise RunLogError(f"{path}: first line is not a valid header")
    if header.get("schema") != SCHEMA_VERSION:
        raise RunLogError(
            f"{path}: unsupported schema {header.get('schema')!r}, expected {SCHEMA_VERSION}"
        )
    events = lines[1:]
    return RunRecord(
        run_id=header["run_id"],
        config_snapshot=header.get("config", {}),
        events=events,
        totals=compute_totals(events),
        truncated_tail=truncated,
    )


def rebuild_trace(path: str | Path) -> list[BeamState]:
    """Reconstruct the beam trace from ``turn_completed`` events."""
    record = read_run(path)
    return [
        beam_state_from_dict(event)
        for event in record.events
        if event.get("type") == "turn_completed"
    ]


def resume_point(path: str | Path) -> ResumePoint:
    """Locate the last completed turn and the state needed to continue."""
    record = read_run(path)
    completed_turn = 0
    retained: list[CandidateSummary] = []
    final_text = None
    for event in record.events:
        if event.get("type") == "turn_completed":
            turn = event["turn"]
            if turn <= completed_turn:
                raise RunLogError(
                    f"{path}: turn_completed events out of order at turn {turn}"
                )
            completed_turn = turn
            retained = [candidate_from_dict(c) for c in event["retained"]]
        elif event.get("type") == "final_selected":
            final_text = event["candidate"]["text"]
    return ResumePoint(
        run_id=record.run_id,
        config_snapshot=record.config_snapshot,
        completed_turn=completed_turn,
        retained=retained,
        complete=final_text is not None,
        final_text=final_text,
    )
