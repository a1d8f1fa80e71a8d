"""Command-line front end: run, extract, score, judge, resume, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import (
    ABLATIONS,
    ConfigError,
    RunConfig,
    apply_ablation,
    load_config_file,
    validate_run_config,
)
from .corpus import CorpusError, load_corpus
from .generator import BASELINE_MODES
from .mock import MockScriptError
from .pipeline import (
    RecordOutcome,
    discover_candidates,
    extract_single_record,
    judge_candidates,
    resume_run,
    run_single_record,
    score_candidates,
)
from .runlog import compute_totals, read_run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

_BASELINE_CHOICES = tuple(mode.replace("_", "-") for mode in BASELINE_MODES)


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file (flags override it)")
    parser.add_argument("--seed", type=int, help="deterministic seed (default 0)")
    parser.add_argument(
        "--mock",
        metavar="SCRIPT",
        help="offline mock script (JSON path, or 'builtin' for the bundled one)",
    )


def _add_generator_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-s", type=int, help="samples per candidate per turn")
    parser.add_argument("--n-c", type=int, help="candidates retained per turn")
    parser.add_argument("--n-v", type=int, help="evaluator votes per turn (0 disables voting)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="citeforge",
        description=(
            "Generate comparative related-work sections from a paper corpus, "
            "then score them with ROUGE and an LLM judge."
        ),
    )
    parser.add_argument("--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="extract, generate, and log one summary per record")
    run.add_argument("--corpus", required=True, help="record file or directory of records")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--run-id", help="run directory name (default: timestamp; never overwrites)")
    run.add_argument("--jobs", type=int, help="records processed in parallel (default 1)")
    run.add_argument("--ablation", choices=ABLATIONS, help="pipeline ablation variant")
    run.add_argument("--baseline", choices=_BASELINE_CHOICES, help="plain baseline instead of the full loop")
    run.add_argument("--examples", help="few-shot examples file ('---'-separated blocks)")
    run.add_argument("--questions", help="guiding questions file (exactly 7 lines)")
    run.add_argument("--digest-only", action="store_true",
                     help="log prompt/reply digests instead of full payloads")
    _add_backend_flags(run)
    _add_generator_flags(run)
    run.set_defaults(func=cmd_run)

    extract = sub.add_parser("extract", help="run key-element extraction only")
    extract.add_argument("--corpus", required=True)
    extract.add_argument("--out", default="out")
    extract.add_argument("--run-id")
    extract.add_argument("--questions")
    _add_backend_flags(extract)
    extract.set_defaults(func=cmd_extract)

    score = sub.add_parser("score", help="ROUGE-score candidate summaries against golds")
    score.add_argument("--candidates", required=True, help="directory of <record-id>.<system>.txt files")
    score.add_argument("--corpus", required=True)
    score.add_argument("--out", help="where rouge.json goes (default: candidates dir)")
    score.set_defaults(func=cmd_score)

    judge = sub.add_parser("judge", help="LLM-judge candidate summaries per system")
    judge.add_argument("--candidates", required=True, help="directory of <record-id>.<system>.txt files")
    judge.add_argument("--corpus", required=True)
    judge.add_argument("--out", help="where gscore.json goes (default: candidates dir)")
    judge.add_argument("--repetitions", type=int, help="judge repetitions per record (default 1)")
    _add_backend_flags(judge)
    judge.set_defaults(func=cmd_judge)

    resume = sub.add_parser("resume", help="continue an aborted run from its log")
    resume.add_argument("--log", required=True, help="run.jsonl of the aborted record run")
    resume.add_argument("--corpus", required=True)
    resume.set_defaults(func=cmd_resume)

    report = sub.add_parser("report", help="merge rouge.json and gscore.json into one table")
    report.add_argument("--out", default="out", help="directory holding rouge.json / gscore.json")
    report.set_defaults(func=cmd_report)

    return parser


def _config_from_args(args, needs_backend: bool = True) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config_file(args.config, cfg)
    if getattr(args, "corpus", None):
        cfg.corpus = Path(args.corpus)
    if getattr(args, "out", None):
        cfg.out = Path(args.out)
    for attr in ("seed", "jobs", "run_id", "ablation", "questions", "examples"):
        value = getattr(args, attr, None)
        if value is not None:
            if attr == "questions":
                cfg.questions_file = value
            elif attr == "examples":
                cfg.examples_file = value
            else:
                setattr(cfg, attr, value)
    if getattr(args, "mock", None):
        cfg.mock_script = args.mock
    if getattr(args, "baseline", None):
        cfg.baseline = args.baseline.replace("-", "_")
    if getattr(args, "repetitions", None) is not None:
        cfg.judge_repetitions = args.repetitions
    if getattr(args, "digest_only", False):
        cfg.store_payloads = False

    overrides = {}
    for attr in ("n_s", "n_c", "n_v"):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[attr] = value
    if overrides:
        from dataclasses import replace

        try:
            cfg.generator = replace(cfg.generator, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    cfg = apply_ablation(cfg)
    return validate_run_config(cfg, needs_backend=needs_backend)


def _fresh_run_dir(cfg: RunConfig) -> tuple[Path, str]:
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.run_id:
        run_dir = cfg.out / cfg.run_id
        if run_dir.exists():
            raise ConfigError(f"run directory already exists: {run_dir}")
        run_dir.mkdir()
        return run_dir, cfg.run_id
    base = time.strftime("run-%Y%m%d-%H%M%S")
    run_id = base
    counter = 1
    while (cfg.out / run_id).exists():
        run_id = f"{base}-{counter}"
        counter += 1
    (cfg.out / run_id).mkdir()
    return cfg.out / run_id, run_id


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    def fmt(cells):
        first = cells[0].ljust(widths[0])
        rest = [cell.rjust(w) for cell, w in zip(cells[1:], widths[1:])]
        return "  ".join([first, *rest]).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines)


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    corpus = load_corpus(cfg.corpus)
    run_dir, run_id = _fresh_run_dir(cfg)

    def one(record):
        try:
            return run_single_record(record, cfg, run_dir, run_id)
        except Exception as exc:  # keep going; the record is reported failed
            logger.debug("record %s failed", record.record_id, exc_info=True)
            return RecordOutcome(
                record_id=record.record_id,
                system=cfg.system_name(),
                summary_path=None,
                log_path=None,
                error=str(exc),
            )

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(one, corpus.records))
    else:
        outcomes = [one(record) for record in corpus.records]

    manifest = {"run_id": run_id, "system": cfg.system_name(), "records": {}}
    failures = 0
    for outcome in outcomes:
        entry: dict = {"status": "ok" if outcome.ok else "error"}
        if outcome.ok:
            entry["summary"] = str(outcome.summary_path.relative_to(run_dir))
            entry["log"] = str(outcome.log_path.relative_to(run_dir))
            entry["totals"] = compute_totals(read_run(outcome.log_path).events)
            print(f"record {outcome.record_id}: ok -> {outcome.summary_path}")
        else:
            failures += 1
            entry["error"] = outcome.error
            print(f"record {outcome.record_id}: ERROR {outcome.error}", file=sys.stderr)
        manifest["records"][outcome.record_id] = entry
    manifest["failures"] = failures
    _write_json(run_dir / "manifest.json", manifest)
    print(f"run {run_id}: {len(outcomes) - failures}/{len(outcomes)} records ok -> {run_dir}")
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config_from_args(args)
    corpus = load_corpus(cfg.corpus)
    run_dir, run_id = _fresh_run_dir(cfg)
    failures = 0
    for record in corpus.records:
        try:
            out = extract_single_record(record, cfg, run_dir, run_id)
            print(f"record {record.record_id}: ok -> {out}")
        except Exception as exc:
            failures += 1
            print(f"record {record.record_id}: ERROR {exc}", file=sys.stderr)
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_score(args) -> int:
    corpus = load_corpus(args.corpus)
    by_system = discover_candidates(args.candidates, corpus)
    payload = score_candidates(corpus, by_system)
    out_dir = Path(args.out) if args.out else Path(args.candidates)
    _write_json(out_dir / "rouge.json", payload)

    rows = []
    for system, entry in sorted(payload["systems"].items()):
        mean = entry["mean"]
        if not mean:
            rows.append([system, "0", "-", "-", "-"])
            continue
        rows.append(
            [
                system,
                str(entry["records_scored"]),
                f"{100 * mean['rouge1']['f1']:.2f}",
                f"{100 * mean['rouge2']['f1']:.2f}",
                f"{100 * mean['rougeL']['f1']:.2f}",
            ]
        )
    print(_format_table(["System", "Recs", "ROUGE-1", "ROUGE-2", "ROUGE-L"], rows))
    print(f"wrote {out_dir / 'rouge.json'}")
    return EXIT_OK


def cmd_judge(args) -> int:
    cfg = _config_from_args(args)
    corpus = load_corpus(args.corpus)
    by_system = discover_candidates(args.candidates, corpus)
    out_dir = Path(args.out) if args.out else Path(args.candidates)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "gscore.run.jsonl"
    if log_path.exists():
        log_path.unlink()
    payload = judge_candidates(corpus, by_system, cfg, log_path=log_path)
    _write_json(out_dir / "gscore.json", payload)

    rows = [
        [
            system,
            f"{payload['g_score'][system]:.4f}",
            f"{payload['g_prf'][system]:.2f}",
            f"{payload['cite_lint_coverage'][system]:.2f}",
        ]
        for system in payload["systems"]
    ]
    print(_format_table(["System", "G-Score", "G-Prf %", "CiteLint"], rows))
    if payload["dropped_repetitions"]:
        print(f"dropped repetitions: {payload['dropped_repetitions']}", file=sys.stderr)
    print(f"wrote {out_dir / 'gscore.json'}")
    return EXIT_OK


def cmd_resume(args) -> int:
    corpus = load_corpus(args.corpus)
    outcome = resume_run(args.log, corpus)
    print(f"record {outcome.record_id}: ok -> {outcome.summary_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    rouge_path = out_dir / "rouge.json"
    gscore_path = out_dir / "gscore.json"
    rouge = json.loads(rouge_path.read_text(encoding="utf-8")) if rouge_path.exists() else None
    gscore = json.loads(gscore_path.read_text(encoding="utf-8")) if gscore_path.exists() else None
    if rouge is None and gscore is None:
        raise ConfigError(f"nothing to report: no rouge.json or gscore.json under {out_dir}")

    systems: list[str] = []
    if rouge:
        systems.extend(rouge["systems"].keys())
    if gscore:
        systems.extend(s for s in gscore["systems"] if s not in systems)

    merged = {"systems": {}}
    rows = []
    for system in sorted(systems):
        entry: dict = {}
        cells = [system]
        mean = (rouge or {}).get("systems", {}).get(system, {}).get("mean") or {}
        for metric in ("rouge1", "rouge2", "rougeL"):
            if mean:
                entry[metric + "_f1"] = mean[metric]["f1"]
                cells.append(f"{100 * mean[metric]['f1']:.2f}")
            else:
                cells.append("-")
        if gscore and system in gscore.get("g_score", {}):
            entry["g_score"] = gscore["g_score"][system]
            entry["g_prf"] = gscore["g_prf"][system]
            cells.append(f"{gscore['g_score'][system]:.4f}")
            cells.append(f"{gscore['g_prf'][system]:.2f}")
        else:
            cells.extend(["-", "-"])
        merged["systems"][system] = entry
        rows.append(cells)

    _write_json(out_dir / "report.json", merged)
    print(_format_table(
        ["System", "ROUGE-1", "ROUGE-2", "ROUGE-L", "G-Score", "G-Prf %"], rows
    ))
    print(f"wrote {out_dir / 'report.json'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, CorpusError, MockScriptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
