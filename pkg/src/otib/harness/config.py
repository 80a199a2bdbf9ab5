"""Experiment configuration: YAML presets with inheritance, typed and digested.

A preset file may name a parent via ``extends`` (path relative to the file);
child mappings override parent keys, nested dictionaries merge recursively.
Every resolved configuration digests to a stable content hash, and each
pipeline stage derives its own digest from exactly the fields that influence
that stage's artifact.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from ..baselines import BaselineConfig
from ..codec import CodecConfig
from ..dataset_io import digest_of
from ..domains import ARITHMETIC, DOMAINS, GRID, IMAGE
from ..neo import NeoConfig
from ..splits import ALPHAS, REGIMES

METHOD_NEO = "neo"
METHOD_DISC = "disc_mono"
METHOD_CONT = "cont_mono"
METHOD_CONT_OPT = "cont_mono_opt"
METHOD_STUB = "oracle_stub"
METHODS = (METHOD_NEO, METHOD_DISC, METHOD_CONT, METHOD_CONT_OPT, METHOD_STUB)

DEFAULT_EVAL_K_MAX = {
    GRID: {"id": 4, "comp_ood": 4, "len_ood": 10},
    ARITHMETIC: {"id": 3, "comp_ood": 3, "len_ood": 6},
    IMAGE: {"id": 3, "comp_ood": 3, "len_ood": 6},
}


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class SeedConfig:
    split: int = 0
    train: int = 0
    eval: int = 0


@dataclass
class DataConfig:
    n_train: int = 20000
    n_id: int = 1000
    n_comp: int = 1000
    n_len: int = 1000
    image_size: int = 32
    retention_threshold: float = 0.02
    codec_corpus: int = 20000


@dataclass
class EvalConfig:
    regimes: list[str] = field(default_factory=lambda: ["id", "comp_ood", "len_ood"])
    n_instances: Optional[int] = None  # cap; None evaluates the whole set
    k_max: dict = field(default_factory=dict)  # per-regime unroll caps
    epsilon: Optional[float] = None  # None: domain default acceptance threshold
    lambda_mdl: Optional[float] = None  # None: training end value
    chunk_size: int = 256
    n_probes: int = 200  # alignment / primitiveness probes per primitive
    emit_instances: bool = True


@dataclass
class ScaleConfig:
    budgets: list[int] = field(default_factory=lambda: [1, 2, 4, 8, 16, 32, 64])
    temperatures: list[float] = field(default_factory=lambda: [1.0])
    regime: str = "len_ood"
    n_instances: int = 200


@dataclass
class ExperimentConfig:
    name: str
    domain: str
    alpha: float
    method: str
    seeds: SeedConfig
    data: DataConfig
    codec: CodecConfig
    model: NeoConfig | BaselineConfig | None
    eval: EvalConfig
    scale: Optional[ScaleConfig] = None

    def __post_init__(self) -> None:
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.alpha not in ALPHAS:
            raise ConfigError(f"alpha must be one of {ALPHAS}, got {self.alpha}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        for regime in self.eval.regimes:
            if regime not in REGIMES:
                raise ConfigError(f"unknown regime {regime!r}")
        if self.codec.domain != self.domain:
            raise ConfigError("codec domain must match the experiment domain")
        if self.method == METHOD_NEO and not isinstance(self.model, NeoConfig):
            raise ConfigError("method neo requires a NeoConfig model section")
        if self.method in (METHOD_DISC, METHOD_CONT, METHOD_CONT_OPT):
            if not isinstance(self.model, BaselineConfig):
                raise ConfigError(f"method {self.method} requires a baseline model section")
            expected_kind = "disc" if self.method == METHOD_DISC else "cont"
            if self.model.kind != expected_kind:
                raise ConfigError(
                    f"method {self.method} requires model.kind={expected_kind!r}"
                )

    # --- stage digests ------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "domain": self.domain,
            "alpha": self.alpha,
            "method": self.method,
            "seeds": dataclasses.asdict(self.seeds),
            "data": dataclasses.asdict(self.data),
            "codec": dataclasses.asdict(self.codec),
            "model": dataclasses.asdict(self.model) if self.model is not None else None,
            "eval": dataclasses.asdict(self.eval),
            "scale": dataclasses.asdict(self.scale) if self.scale else None,
        }
        return out

    def digest(self) -> str:
        return digest_of(self.to_dict())

    def dataset_digest(self) -> str:
        return digest_of(
            {
                "stage": "dataset",
                "domain": self.domain,
                "alpha": self.alpha,
                "split_seed": self.seeds.split,
                "data": dataclasses.asdict(self.data),
            }
        )

    def codec_digest(self) -> str:
        return digest_of(
            {
                "stage": "codec",
                "dataset": self.dataset_digest(),
                "codec": dataclasses.asdict(self.codec),
                "train_seed": self.seeds.train,
            }
        )

    def run_digest(self) -> str:
        return digest_of(
            {
                "stage": "run",
                "codec": self.codec_digest(),
                "method": self.method,
                "model": dataclasses.asdict(self.model) if self.model is not None else None,
                "train_seed": self.seeds.train,
            }
        )

    def eval_digest(self) -> str:
        return digest_of(
            {
                "stage": "eval",
                "run": self.run_digest(),
                "eval": dataclasses.asdict(self.eval),
                "eval_seed": self.seeds.eval,
            }
        )

    def scale_digest(self) -> str:
        if self.scale is None:
            raise ConfigError("no scale section configured")
        return digest_of(
            {
                "stage": "scale",
                "run": self.run_digest(),
                "scale": dataclasses.asdict(self.scale),
                "eval_seed": self.seeds.eval,
            }
        )

    def eval_k_max(self, regime: str) -> int:
        defaults = DEFAULT_EVAL_K_MAX[self.domain]
        return int(self.eval.k_max.get(regime, defaults[regime]))

    def domain_opts(self) -> dict:
        if self.domain != IMAGE:
            return {}
        return {
            "image_size": self.data.image_size,
            "retention_threshold": self.data.retention_threshold,
        }


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_raw_config(path: Path | str) -> dict:
    """Read a YAML preset, following its ``extends`` chain."""
    path = Path(path)
    try:
        payload = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"{path} must contain a mapping")
    parent_ref = payload.pop("extends", None)
    if parent_ref is None:
        return payload
    parent = load_raw_config((path.parent / parent_ref).resolve())
    return _deep_merge(parent, payload)


def _build_section(cls, payload: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where} section: {exc}") from None


def build_experiment(raw: dict, name: Optional[str] = None) -> ExperimentConfig:
    raw = dict(raw)
    for required in ("domain", "method"):
        if required not in raw:
            raise ConfigError(f"missing required key {required!r}")
    domain = raw["domain"]
    method = raw["method"]
    codec_raw = dict(raw.get("codec", {}))
    codec_raw.setdefault("domain", domain)
    model_raw = dict(raw.get("model", {}))
    if method == METHOD_NEO:
        model = _build_section(NeoConfig, model_raw, "model")
    elif method in (METHOD_DISC, METHOD_CONT, METHOD_CONT_OPT):
        model_raw.setdefault("kind", "disc" if method == METHOD_DISC else "cont")
        model = _build_section(BaselineConfig, model_raw, "model")
    elif method == METHOD_STUB:
        model = None
    else:
        raise ConfigError(f"unknown method {method!r}")
    scale_raw = raw.get("scale")
    return ExperimentConfig(
        name=raw.get("name", name or "experiment"),
        domain=domain,
        alpha=float(raw.get("alpha", 1.00)),
        method=method,
        seeds=_build_section(SeedConfig, dict(raw.get("seeds", {})), "seeds"),
        data=_build_section(DataConfig, dict(raw.get("data", {})), "data"),
        codec=_build_section(CodecConfig, codec_raw, "codec"),
        model=model,
        eval=_build_section(EvalConfig, dict(raw.get("eval", {})), "eval"),
        scale=_build_section(ScaleConfig, dict(scale_raw), "scale") if scale_raw else None,
    )


def load_experiment(path: Path | str, overrides: Optional[dict] = None) -> ExperimentConfig:
    raw = load_raw_config(path)
    if overrides:
        raw = _deep_merge(raw, overrides)
    return build_experiment(raw, name=Path(path).stem)


def preset_root() -> Path:
    return Path(resources.files("otib") / "presets")


def preset_path(relative: str) -> Path:
    path = preset_root() / relative
    if not path.exists():
        raise ConfigError(f"no preset named {relative!r} under {preset_root()}")
    return path


def list_presets() -> list[str]:
    root = preset_root()
    return sorted(str(p.relative_to(root)) for p in root.rglob("*.yaml"))


def load_preset(relative: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    return load_experiment(preset_path(relative), overrides)
