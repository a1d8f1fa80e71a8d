import json

import pytest

from citeforge.corpus import Corpus, DatasetRecord, PaperDocument, record_to_dict
from citeforge.mock import MockBackend, MockScript
from citeforge.provider import DecoderRoles, Provider


def make_paper(pid, role, body=None):
    return PaperDocument(
        id=pid,
        title=f"Title of {pid}",
        authors=("Ada Author", "Ben Author"),
        body=body if body is not None else f"Body of {pid}: problem, method, and results.",
        role=role,
        year=2020,
    )


def make_record(record_id="rec1", n_refs=3, gold="A gold related work section."):
    return DatasetRecord(
        target=make_paper(record_id, "target"),
        gold_related_work=gold,
        references=tuple(
            make_paper(f"{record_id}-ref{i}", "reference") for i in range(1, n_refs + 1)
        ),
    )


class ListSink:
    """Minimal in-memory event sink mirroring the run-log append contract."""

    def __init__(self):
        self.events = []

    def append(self, event):
        self.events.append(event)

    def by_type(self, event_type):
        return [e for e in self.events if e.get("type") == event_type]


def mock_provider(script=None, seed=0, sink=None, **kwargs):
    script = script if script is not None else MockScript.builtin()
    if isinstance(script, dict):
        script = MockScript.from_dict(script)
    backend = MockBackend(script=script, seed=seed)
    kwargs.setdefault("backoff_base", 0.0)
    return Provider(default_backend=backend, sink=sink, **kwargs)


@pytest.fixture
def roles():
    return DecoderRoles(extraction="m-extract", generation="m-gen", evaluation="m-eval")


@pytest.fixture
def sink():
    return ListSink()


def write_corpus_dir(path, records):
    path.mkdir(parents=True, exist_ok=True)
    for record in records:
        (path / f"{record.record_id}.json").write_text(
            json.dumps(record_to_dict(record), ensure_ascii=False, indent=2),
            encoding="utf-8",
        )
    return path


@pytest.fixture
def toy_corpus_dir(tmp_path):
    return write_corpus_dir(
        tmp_path / "corpus", [make_record("rec1", 2), make_record("rec2", 3)]
    )
