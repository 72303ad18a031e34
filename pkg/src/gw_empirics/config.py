"""Scenario configuration files and the run manifest.

A config is YAML (or JSON) with a global ``seed`` and a list of
``scenarios``. Unknown keys are errors.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .errors import ConfigError
from .gw import GwOptions
from .harness import MRule, ScenarioConfig, TrueD
from .measures import SamplerSpec

SEED_ENV = "GW_EMPIRICS_SEED"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=False)


class SamplerModel(_Strict):
    family: str
    dim: int = 1
    params: dict[str, Any] = Field(default_factory=dict)


class MRuleModel(_Strict):
    kind: Literal["equal", "fixed", "ratio"] = "equal"
    value: Optional[float] = None


class TrueDModel(_Strict):
    kind: Literal["exact", "self-zero", "reference-run", "population"] = "self-zero"
    value: Optional[float] = None
    n_ref: Optional[int] = None
    repetitions: int = 3


class SolverModel(_Strict):
    tol: float = Field(1e-9, gt=0)
    max_iter: int = Field(100, ge=1)
    n_random: int = Field(8, ge=0)
    principal_starts: bool = True
    start_subsample: Optional[int] = Field(None, ge=2)
    refine_top: int = Field(1, ge=1)
    max_relaxation: float = Field(1.0, ge=1.0)
    method: Literal["auto", "exact", "entropic"] = "auto"
    exact_only: bool = False


class ScenarioModel(_Strict):
    name: str
    kind: Literal["rate", "deviation", "lecam", "semidiscrete"] = "rate"
    mu: SamplerModel
    nu: SamplerModel
    n_grid: list[int]
    m_rule: MRuleModel = Field(default_factory=MRuleModel)
    replications: int = 50
    true_d: TrueDModel = Field(default_factory=TrueDModel)
    solver: SolverModel = Field(default_factory=SolverModel)
    seed: Optional[int] = None
    lecam_c: float = 0.1
    target_exponent: Optional[float] = None
    merge_atoms: bool = True


class ConfigModel(_Strict):
    seed: int = 0
    scenarios: list[ScenarioModel] = Field(default_factory=list)


@dataclass
class RunManifest:
    config_path: str
    scenarios: list[ScenarioConfig]
    output_dir: str
    version: str = __version__
    seed: int = 0
    exact_only: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config_path": self.config_path,
            "output_dir": self.output_dir,
            "version": self.version,
            "seed": self.seed,
            "exact_only": self.exact_only,
            "scenarios": [s.to_dict() for s in self.scenarios],
        }

    def config_dict(self) -> dict:
        """A config document that parses back to the same scenarios."""
        scenarios = []
        for s in self.scenarios:
            d = s.to_dict()
            d["solver"].pop("seed", None)
            scenarios.append(d)
        return {"seed": self.seed, "scenarios": scenarios}


def _load_text(text: str, fmt: str) -> Any:
    if fmt == "json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}", "<parse>") from exc
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"{where}{exc.problem or exc}", "<parse>") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(str(exc), "<parse>") from exc


def _loc(loc) -> str:
    out = ""
    for part in loc:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


def build_scenarios(doc: Any, seed_override: int | None = None) -> tuple[int, list[ScenarioConfig]]:
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping with 'seed' and 'scenarios'", "<root>")
    try:
        model = ConfigModel.model_validate(doc)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(err["msg"], _loc(err["loc"])) from exc
    seed = model.seed if seed_override is None else seed_override
    scenarios = []
    names = set()
    for i, s in enumerate(model.scenarios):
        prefix = f"scenarios[{i}]"
        if s.name in names:
            raise ConfigError(f"duplicate scenario name {s.name!r}", f"{prefix}.name")
        names.add(s.name)
        if len(s.n_grid) < 4:
            raise ConfigError(f"n-grid length ≥ 4 required, got {len(s.n_grid)}", f"{prefix}.n_grid")
        try:
            mu = SamplerSpec(s.mu.family, s.mu.dim, dict(s.mu.params))
        except ConfigError as exc:
            raise ConfigError(exc.message, f"{prefix}.mu.{exc.field}") from exc
        try:
            nu = SamplerSpec(s.nu.family, s.nu.dim, dict(s.nu.params))
        except ConfigError as exc:
            raise ConfigError(exc.message, f"{prefix}.nu.{exc.field}") from exc
        scenario_seed = s.seed if s.seed is not None else seed
        if seed_override is not None:
            scenario_seed = seed_override
        try:
            cfg = ScenarioConfig(
                name=s.name, kind=s.kind, mu=mu, nu=nu, n_grid=tuple(s.n_grid),
                m_rule=MRule(s.m_rule.kind, s.m_rule.value),
                replications=s.replications,
                true_d=TrueD(s.true_d.kind, s.true_d.value, s.true_d.n_ref, s.true_d.repetitions),
                solver=GwOptions(seed=scenario_seed, **s.solver.model_dump()),
                seed=scenario_seed, lecam_c=s.lecam_c, target_exponent=s.target_exponent,
                merge_atoms=s.merge_atoms,
            )
        except ConfigError as exc:
            raise ConfigError(exc.message, f"{prefix}.{exc.field}") from exc
        scenarios.append(cfg)
    return seed, scenarios


def resolve_seed_override(flag: int | None) -> int | None:
    """Flag beats the environment; both beat the config file."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return None
    try:
        value = int(env)
    except ValueError as exc:
        raise ConfigError(f"not an integer: {env!r}", SEED_ENV) from exc
    if not 0 <= value < 2**64:
        raise ConfigError("must be an unsigned 64-bit integer", SEED_ENV)
    return value


def parse_config_text(text: str, fmt: str = "yaml", seed_override: int | None = None,
                      config_path: str = "<string>", output_dir: str = "results") -> RunManifest:
    doc = _load_text(text, fmt)
    seed, scenarios = build_scenarios(doc, seed_override)
    return RunManifest(config_path, scenarios, output_dir, seed=seed)


def parse_config(path, seed_override: int | None = None, output_dir: str = "results") -> RunManifest:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such file: {path}", "--config")
    fmt = "json" if path.suffix.lower() == ".json" else "yaml"
    return parse_config_text(path.read_text(encoding="utf-8"), fmt, seed_override, str(path), output_dir)


def serialize_config(manifest: RunManifest, fmt: str = "yaml") -> str:
    doc = manifest.config_dict()
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    return yaml.safe_dump(doc, sort_keys=True)
