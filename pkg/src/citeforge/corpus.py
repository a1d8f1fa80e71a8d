"""Dataset ingestion: target papers, gold related-work sections, references.

One record = one target paper (without its related work section), an optional
gold related work text, and an ordered list of reference papers. Records are
stored as one JSON file each; a corpus directory holds one ``*.json`` per
record. Reference order in the file is significant: it is the order the
generator walks the references in.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

ROLE_TARGET = "target"
ROLE_REFERENCE = "reference"
ROLE_GOLD = "gold"

_PAPER_KEYS = {"id", "title", "authors", "year", "body"}


class CorpusError(Exception):
    """Raised for unreadable or invalid corpus files."""


@dataclass(frozen=True)
class PaperDocument:
    """One paper: identity metadata plus its full text content."""

    id: str
    title: str
    authors: tuple[str, ...]
    body: str
    role: str
    year: int | None = None


@dataclass(frozen=True)
class DatasetRecord:
    """A target paper, its optional gold related work, and its references.

    References are indexed 1..n by their position; the citation tag
    ``[Reference i]`` is valid iff 1 <= i <= n.
    """

    target: PaperDocument
    gold_related_work: str
    references: tuple[PaperDocument, ...]

    @property
    def record_id(self) -> str:
        return self.target.id

    @property
    def n_references(self) -> int:
        return len(self.references)

    def citation_in_range(self, index: int) -> bool:
        return 1 <= index <= self.n_references


@dataclass(frozen=True)
class Corpus:
    name: str
    records: tuple[DatasetRecord, ...]

    def record(self, record_id: str) -> DatasetRecord:
        for rec in self.records:
            if rec.record_id == record_id:
                return rec
        raise KeyError(record_id)

    @property
    def record_ids(self) -> list[str]:
        return [r.record_id for r in self.records]


def validate_record(record: DatasetRecord) -> list[str]:
    """Return a list of invariant violations; empty iff the record is valid.

    Violations are data, not errors: each entry names the offending field and
    the broken rule.
    """
    violations = []
    if record.target.role != ROLE_TARGET:
        violations.append(f"target.role is {record.target.role!r}, expected {ROLE_TARGET!r}")
    if not record.target.id.strip():
        violations.append("target.id empty")
    if not record.target.body.strip():
        violations.append("target.body empty")
    if not record.references:
        violations.append("references empty")
    seen = {record.target.id}
    for pos, ref in enumerate(record.references, start=1):
        label = ref.id or f"references[{pos}]"
        if ref.role != ROLE_REFERENCE:
            violations.append(f"{label}.role is {ref.role!r}, expected {ROLE_REFERENCE!r}")
        if not ref.id.strip():
            violations.append(f"references[{pos}].id empty")
        elif ref.id in seen:
            violations.append(f"duplicate id: {ref.id}")
        seen.add(ref.id)
        if not ref.body.strip():
            violations.append(f"{label}.body empty")
    return violations


def _paper_from_dict(raw: dict, role: str, where: str) -> PaperDocument:
    if not isinstance(raw, dict):
        raise CorpusError(f"{where}: paper entry must be an object")
    unknown = set(raw) - _PAPER_KEYS
    if unknown:
        raise CorpusError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        paper_id = raw["id"]
        body = raw["body"]
    except KeyError as exc:
        raise CorpusError(f"{where}: missing required key {exc.args[0]!r}") from None
    if not isinstance(paper_id, str) or not isinstance(body, str):
        raise CorpusError(f"{where}: 'id' and 'body' must be strings")
    authors = raw.get("authors") or []
    if not isinstance(authors, list) or any(not isinstance(a, str) for a in authors):
        raise CorpusError(f"{where}: 'authors' must be a list of strings")
    year = raw.get("year")
    if year is not None and not isinstance(year, int):
        raise CorpusError(f"{where}: 'year' must be an integer or null")
    return PaperDocument(
        id=paper_id,
        title=raw.get("title", ""),
        authors=tuple(authors),
        body=body,
        role=role,
        year=year,
    )


def record_from_dict(raw: dict, source: str = "<record>") -> DatasetRecord:
    """Build and validate one record from its JSON object form."""
    if not isinstance(raw, dict):
        raise CorpusError(f"{source}: record must be a JSON object")
    if "target" not in raw or "references" not in raw:
        raise CorpusError(f"{source}: record needs 'target' and 'references'")
    target = _paper_from_dict(raw["target"], ROLE_TARGET, f"{source}: target")
    refs_raw = raw["references"]
    if not isinstance(refs_raw, list):
        raise CorpusError(f"{source}: 'references' must be a list")
    references = tuple(
        _paper_from_dict(r, ROLE_REFERENCE, f"{source}: references[{i}]")
        for i, r in enumerate(refs_raw, start=1)
    )
    gold = raw.get("gold_related_work", "")
    if not isinstance(gold, str):
        raise CorpusError(f"{source}: 'gold_related_work' must be a string")
    record = DatasetRecord(target=target, gold_related_work=gold, references=references)
    violations = validate_record(record)
    if violations:
        raise CorpusError(
            f"record {record.target.id or source}: " + "; ".join(violations)
        )
    return record


def _paper_to_dict(paper: PaperDocument) -> dict:
    return {
        "id": paper.id,
        "title": paper.title,
        "authors": list(paper.authors),
        "year": paper.year,
        "body": paper.body,
    }


def record_to_dict(record: DatasetRecord) -> dict:
    return {
        "target": _paper_to_dict(record.target),
        "gold_related_work": record.gold_related_work,
        "references": [_paper_to_dict(r) for r in record.references],
    }


def load_corpus(path: str | Path) -> Corpus:
    """Load a corpus from a record file or a directory of ``*.json`` records.

    Every record is validated on load; reference order is preserved exactly
    as it appears in each file.
    """
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.json"))
        if not files:
            raise CorpusError(f"{path}: no *.json record files found")
        name = path.name
    elif path.is_file():
        files = [path]
        name = path.stem
    else:
        raise CorpusError(f"{path}: no such file or directory")

    records = []
    seen_ids: set[str] = set()
    for file in files:
        try:
            raw = json.loads(file.read_text(encoding="utf-8"))
        except OSError as exc:
            raise CorpusError(f"{file}: cannot read: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{file}: invalid JSON: {exc}") from exc
        record = record_from_dict(raw, source=str(file))
        if record.record_id in seen_ids:
            raise CorpusError(f"{file}: duplicate record id {record.record_id!r}")
        seen_ids.add(record.record_id)
        records.append(record)
    return Corpus(name=name, records=tuple(records))


def save_corpus(corpus: Corpus, directory: str | Path) -> list[Path]:
    """Write one JSON file per record; returns the paths written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for record in corpus.records:
        out = directory / f"{record.record_id}.json"
        out.write_text(
            json.dumps(record_to_dict(record), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
        paths.append(out)
    return paths
