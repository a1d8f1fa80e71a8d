"""Run configuration: defaults, an INI config file, and flag overrides.

Precedence is defaults < config file < command-line flags. The effective
configuration is snapshotted into every run log header, with the guiding
questions embedded as text, so a log alone is enough to resume a run.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .extractor import DEFAULT_CHAR_BUDGET, GuidingQuestions
from .generator import BASELINE_MODES, GeneratorConfig
from .provider import DecoderRoles

ABLATIONS = ("no-extractor", "no-incremental", "no-reflective")

DEFAULT_SYSTEM = "citeforge"


class ConfigError(Exception):
    """Invalid configuration value, path, or flag combination."""


def _default_roles() -> DecoderRoles:
    return DecoderRoles(extraction="default", generation="default", evaluation="default")


@dataclass
class RunConfig:
    corpus: Path | None = None
    out: Path = Path("out")
    run_id: str | None = None
    seed: int = 0
    jobs: int = 1
    mock_script: str | None = None
    base_url: str | None = None
    roles: DecoderRoles = field(default_factory=_default_roles)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    ablation: str | None = None
    baseline: str | None = None
    examples_file: str | None = None
    judge_repetitions: int = 1
    judge_temperature: float = 0.0
    questions_file: str | None = None
    questions_override: tuple[str, ...] | None = None
    char_budget: int = DEFAULT_CHAR_BUDGET
    store_payloads: bool = True
    retry_budget: int = 3
    max_in_flight: int = 8

    def questions(self) -> GuidingQuestions:
        if self.questions_override is not None:
            return GuidingQuestions(questions=self.questions_override)
        if self.questions_file:
            return GuidingQuestions.from_file(self.questions_file)
        return GuidingQuestions.default()

    def system_name(self) -> str:
        if self.baseline:
            return self.baseline.replace("_", "-")
        if self.ablation:
            return f"{DEFAULT_SYSTEM}-{self.ablation}"
        return DEFAULT_SYSTEM

    def snapshot(self) -> dict:
        """Content-complete configuration for the run log header."""
        return {
            "seed": self.seed,
            "mock_script": self.mock_script,
            "base_url": self.base_url,
            "roles": {
                "extraction": self.roles.extraction,
                "generation": self.roles.generation,
                "evaluation": self.roles.evaluation,
            },
            "generator": {
                "n_s": self.generator.n_s,
                "n_c": self.generator.n_c,
                "n_v": self.generator.n_v,
                "temperature_generate": self.generator.temperature_generate,
                "temperature_vote": self.generator.temperature_vote,
                "ablation_no_extractor": self.generator.ablation_no_extractor,
                "ablation_no_incremental": self.generator.ablation_no_incremental,
            },
            "ablation": self.ablation,
            "baseline": self.baseline,
            "judge": {
                "repetitions": self.judge_repetitions,
                "temperature": self.judge_temperature,
            },
            "questions": list(self.questions().questions),
            "char_budget": self.char_budget,
            "store_payloads": self.store_payloads,
            "retry_budget": self.retry_budget,
            "max_in_flight": self.max_in_flight,
            "system": self.system_name(),
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "RunConfig":
        roles = snap.get("roles", {})
        gen = snap.get("generator", {})
        judge = snap.get("judge", {})
        return cls(
            seed=snap.get("seed", 0),
            mock_script=snap.get("mock_script"),
            base_url=snap.get("base_url"),
            roles=DecoderRoles(
                extraction=roles.get("extraction", "default"),
                generation=roles.get("generation", "default"),
                evaluation=roles.get("evaluation", "default"),
            ),
            generator=GeneratorConfig(
                n_s=gen.get("n_s", 2),
                n_c=gen.get("n_c", 2),
                n_v=gen.get("n_v", 5),
                temperature_generate=gen.get("temperature_generate", 0.7),
                temperature_vote=gen.get("temperature_vote", 0.0),
                ablation_no_extractor=gen.get("ablation_no_extractor", False),
                ablation_no_incremental=gen.get("ablation_no_incremental", False),
            ),
            ablation=snap.get("ablation"),
            baseline=snap.get("baseline"),
            judge_repetitions=judge.get("repetitions", 1),
            judge_temperature=judge.get("temperature", 0.0),
            questions_override=tuple(snap["questions"]) if snap.get("questions") else None,
            char_budget=snap.get("char_budget", DEFAULT_CHAR_BUDGET),
            store_payloads=snap.get("store_payloads", True),
            retry_budget=snap.get("retry_budget", 3),
            max_in_flight=snap.get("max_in_flight", 8),
        )


def _get(parser: configparser.ConfigParser, section: str, key: str, cast, current):
    if not parser.has_option(section, key):
        return current
    raw = parser.get(section, key).strip()
    if raw == "":
        return current
    try:
        if cast is bool:
            return parser.getboolean(section, key)
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: bad value {raw!r}") from exc


def load_config_file(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Apply a key=value sections config file over ``base`` (or defaults)."""
    cfg = base or RunConfig()
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"bad config file {path}: {exc}") from exc

    cfg = replace(
        cfg,
        base_url=_get(parser, "provider", "base_url", str, cfg.base_url),
        mock_script=_get(parser, "provider", "mock_script", str, cfg.mock_script),
        retry_budget=_get(parser, "provider", "retry_budget", int, cfg.retry_budget),
        max_in_flight=_get(parser, "provider", "max_in_flight", int, cfg.max_in_flight),
        roles=DecoderRoles(
            extraction=_get(parser, "provider", "model_extraction", str, cfg.roles.extraction),
            generation=_get(parser, "provider", "model_generation", str, cfg.roles.generation),
            evaluation=_get(parser, "provider", "model_evaluation", str, cfg.roles.evaluation),
        ),
        judge_repetitions=_get(parser, "judge", "repetitions", int, cfg.judge_repetitions),
        judge_temperature=_get(parser, "judge", "temperature", float, cfg.judge_temperature),
        seed=_get(parser, "run", "seed", int, cfg.seed),
        jobs=_get(parser, "run", "jobs", int, cfg.jobs),
        questions_file=_get(parser, "run", "questions_file", str, cfg.questions_file),
        char_budget=_get(parser, "run", "char_budget", int, cfg.char_budget),
        store_payloads=_get(parser, "run", "store_payloads", bool, cfg.store_payloads),
    )
    try:
        cfg = replace(
            cfg,
            generator=GeneratorConfig(
                n_s=_get(parser, "generator", "n_s", int, cfg.generator.n_s),
                n_c=_get(parser, "generator", "n_c", int, cfg.generator.n_c),
                n_v=_get(parser, "generator", "n_v", int, cfg.generator.n_v),
                temperature_generate=_get(
                    parser, "generator", "temperature_generate", float,
                    cfg.generator.temperature_generate,
                ),
                temperature_vote=_get(
                    parser, "generator", "temperature_vote", float,
                    cfg.generator.temperature_vote,
                ),
                ablation_no_extractor=cfg.generator.ablation_no_extractor,
                ablation_no_incremental=cfg.generator.ablation_no_incremental,
            ),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def apply_ablation(cfg: RunConfig) -> RunConfig:
    """Map the ablation flag onto the generator knobs it stands for."""
    if cfg.ablation is None:
        return cfg
    if cfg.ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {cfg.ablation!r}; expected one of {ABLATIONS}")
    gen = cfg.generator
    if cfg.ablation == "no-reflective":
        gen = replace(gen, n_v=0)
    elif cfg.ablation == "no-extractor":
        gen = replace(gen, ablation_no_extractor=True)
    elif cfg.ablation == "no-incremental":
        gen = replace(gen, ablation_no_incremental=True)
    return replace(cfg, generator=gen)


def validate_run_config(cfg: RunConfig, needs_backend: bool = True) -> RunConfig:
    """Check path existence and flag combinations; returns the config."""
    if cfg.baseline is not None and cfg.baseline not in BASELINE_MODES:
        raise ConfigError(
            f"unknown baseline {cfg.baseline!r}; expected one of {BASELINE_MODES}"
        )
    if cfg.baseline == "few_shot" and not cfg.examples_file:
        raise ConfigError("baseline few_shot requires --examples FILE")
    if cfg.examples_file and not Path(cfg.examples_file).is_file():
        raise ConfigError(f"examples file not found: {cfg.examples_file}")
    if cfg.questions_file and not Path(cfg.questions_file).is_file():
        raise ConfigError(f"questions file not found: {cfg.questions_file}")
    if cfg.mock_script and cfg.mock_script != "builtin":
        if not Path(cfg.mock_script).is_file():
            raise ConfigError(f"mock script not found: {cfg.mock_script}")
    if needs_backend and not cfg.mock_script and not cfg.base_url:
        raise ConfigError(
            "no backend configured: pass --mock SCRIPT or set [provider] base_url"
        )
    if cfg.baseline and cfg.ablation:
        raise ConfigError("--baseline and --ablation are mutually exclusive")
    if cfg.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    try:
        cfg.questions()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
