"""Run configuration: defaults, TOML loading and flag overrides."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple

from .encoder.base import HybridConfig
from .guidance import GuidanceConfig
from .proposals import ProposalGenConfig

ABLATIONS = ("no-relations", "no-coherence", "no-position")
ENCODERS = ("toy", "clip")
CACHE_ENV = "HYBRIDGL_CACHE_DIR"


class ConfigError(ValueError):
    pass


def _toy_default():
    return {"layers": 4, "dim": 16, "grid": 4}


@dataclass(frozen=True)
class RunConfig:
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    proposals: ProposalGenConfig = field(default_factory=ProposalGenConfig)
    encoder: str = "toy"
    toy: Dict[str, int] = field(default_factory=_toy_default)
    clip_model: str = "openai/clip-vit-base-patch16"
    ablations: Tuple[str, ...] = ()
    seed: int = 0
    on_coherence_failure: str = "error"

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ConfigError(f"unknown encoder {self.encoder!r}; expected one of {ENCODERS}")
        bad = [a for a in self.ablations if a not in ABLATIONS]
        if bad:
            raise ConfigError(f"unknown ablation(s) {bad}; expected any of {ABLATIONS}")
        object.__setattr__(self, "ablations", tuple(sorted(set(self.ablations))))
        if self.on_coherence_failure not in ("error", "ones"):
            raise ConfigError("on_coherence_failure must be 'error' or 'ones'")
        unknown = set(self.toy) - {"layers", "dim", "grid", "input_side"}
        if unknown:
            raise ConfigError(f"unknown toy encoder keys: {sorted(unknown)}")

    @property
    def use_relations(self) -> bool:
        return "no-relations" not in self.ablations

    @property
    def use_coherence(self) -> bool:
        return "no-coherence" not in self.ablations

    @property
    def use_position(self) -> bool:
        return "no-position" not in self.ablations

    def to_dict(self) -> Dict[str, Any]:
        return {
            "hybrid": dataclasses.asdict(self.hybrid),
            "guidance": dataclasses.asdict(self.guidance),
            "proposals": dataclasses.asdict(self.proposals),
            "encoder": self.encoder,
            "toy": dict(self.toy),
            "clip_model": self.clip_model,
            "ablations": list(self.ablations),
            "seed": self.seed,
            "on_coherence_failure": self.on_coherence_failure,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        sections = {"hybrid": HybridConfig, "guidance": GuidanceConfig, "proposals": ProposalGenConfig}
        top = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - top
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            if key in sections:
                if not isinstance(value, dict):
                    raise ConfigError(f"[{key}] must be a table")
                allowed = {f.name for f in dataclasses.fields(sections[key])}
                bad = set(value) - allowed
                if bad:
                    raise ConfigError(f"unknown key(s) in [{key}]: {sorted(bad)}")
                try:
                    kwargs[key] = sections[key](**value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"[{key}]: {exc}") from exc
            elif key == "ablations":
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **sections) -> "RunConfig":
        """Copy with per-section field overrides, e.g. ``replace(guidance={"alpha": 0})``."""
        data = self.to_dict()
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return RunConfig.from_dict(data)


def load_config(path) -> RunConfig:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib

    with open(Path(path), "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return RunConfig.from_dict(data)
