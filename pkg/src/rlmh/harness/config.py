"""Run configuration: parsing, defaults, validation and overrides.

Documents are YAML (JSON is accepted too). Unknown keys are rejected, absent
optional keys take their defaults, and every error names the offending key.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..errors import InvalidValue, ParseError, UnknownKey


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class DdpgSettings(_Strict):
    lr_actor: float = Field(1e-6, ge=0)
    lr_critic: float = Field(1e-2, ge=0)
    tau: float = Field(0.005, ge=0, le=1)
    gamma: float = Field(0.99, ge=0, lt=1)
    eta: float = Field(1e-3, ge=0)
    batch_size: int = Field(48, ge=1)
    clip_norm: float = Field(1.0, gt=0)
    buffer_capacity: int = Field(25_000, ge=1)
    hidden: list[int] = Field(default_factory=lambda: [8, 8])
    reward_centring: Literal["td-residual", "raw-reward"] = "td-residual"
    passes_per_episode: int = Field(50, ge=0)
    # exploration noise sd on the raw actor output; "auto" uses the initial step size
    noise_sd: Union[float, Literal["auto"]] = "auto"

    @field_validator("hidden")
    @classmethod
    def _widths(cls, v):
        if any(w < 1 for w in v):
            raise ValueError("hidden widths must be positive")
        return v

    @field_validator("noise_sd")
    @classmethod
    def _noise(cls, v):
        if v != "auto" and v < 0:
            raise ValueError("noise_sd must be non-negative")
        return v


class PretrainSettings(_Strict):
    epochs: int = Field(100, ge=0)
    batch_size: int = Field(16, ge=1)
    lr: float = Field(0.01, ge=0)
    tolerance: float = Field(0.05, gt=0)


class ReferenceSettings(_Strict):
    n_samples: int = Field(10_000, ge=2)
    seed: int = 0
    path: Optional[str] = None
    thin: int = Field(100, ge=1)


class FailureSettings(_Strict):
    clamp_fraction: float = Field(0.95, gt=0, le=1)
    saturation_tol: float = Field(1e-4, gt=0, lt=0.5)
    reject_episodes: int = Field(2, ge=1)


class RunConfig(_Strict):
    target: str
    target_params: dict[str, Any] = Field(default_factory=dict)
    kernel: Literal["rmala", "barker", "mala"] = "rmala"
    policy: Optional[Literal["constant", "neural"]] = None
    tuner: Literal["none", "aar", "esjd", "ddpg"] = "none"
    reward: Literal["sjd", "rb_sjd", "lesjd", "cdlb"] = "cdlb"
    total_iterations: int = Field(30_000, ge=2)
    freeze_window: int = Field(5_000, ge=1)
    episode_length: int = Field(500, ge=1)
    seed: int = 0
    replicates: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)
    g0_source: Literal["reference-covariance", "identity", "file"] = "reference-covariance"
    g0_file: Optional[str] = None
    step_size: Union[float, Literal["auto"]] = "auto"
    actor_checkpoint: Optional[str] = None
    tuner_window: Optional[int] = Field(None, ge=1)
    tuner_two_window: bool = False
    mmd_lengthscale: Optional[float] = Field(None, gt=0)
    output_dir: str = "runs/out"
    write_trace: bool = True
    ddpg: DdpgSettings = Field(default_factory=DdpgSettings)
    pretrain: PretrainSettings = Field(default_factory=PretrainSettings)
    reference: ReferenceSettings = Field(default_factory=ReferenceSettings)
    failure: FailureSettings = Field(default_factory=FailureSettings)

    @field_validator("step_size")
    @classmethod
    def _step(cls, v):
        if v != "auto" and not 1e-6 <= v <= 10.0:
            raise ValueError("step_size must lie in [1e-6, 10]")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.freeze_window >= self.total_iterations:
            raise _KeyedError("freeze_window", "freeze_window must be smaller than total_iterations")
        if self.policy is None:
            object.__setattr__(
                self, "policy",
                "neural" if self.tuner == "ddpg" or self.actor_checkpoint else "constant",
            )
        if self.tuner == "ddpg" and self.policy != "neural":
            raise _KeyedError("policy", "the ddpg tuner trains a neural policy")
        if self.tuner in ("aar", "esjd") and self.policy != "constant":
            raise _KeyedError("policy", f"the {self.tuner} tuner adapts a constant step size")
        if self.policy == "neural" and self.tuner == "none" and not self.actor_checkpoint:
            raise _KeyedError("actor_checkpoint", "a fixed neural policy needs an actor checkpoint")
        if self.g0_source == "file" and not self.g0_file:
            raise _KeyedError("g0_file", "g0_source=file needs g0_file")
        return self

    @property
    def train_iterations(self) -> int:
        return self.total_iterations - self.freeze_window

    def resolved_tuner_window(self) -> int:
        if self.tuner_window is not None:
            return self.tuner_window
        return 5000 if self.total_iterations >= 30_000 else max(1, self.total_iterations // 6)

    def config_hash(self) -> str:
        doc = self.model_dump(mode="json", exclude={"output_dir", "replicates", "workers"})
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


class _KeyedError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


def _translate(exc: ValidationError) -> Exception:
    err = exc.errors()[0]
    loc = ".".join(str(p) for p in err.get("loc", ()))
    ctx = err.get("ctx") or {}
    inner = ctx.get("error")
    if isinstance(inner, _KeyedError):
        return InvalidValue(f"{inner.key}: {inner}", key=inner.key)
    if err["type"] == "extra_forbidden":
        return UnknownKey(f"unknown key {loc!r}", key=loc)
    if err["type"] == "missing":
        return InvalidValue(f"missing required key {loc!r}", key=loc)
    return InvalidValue(f"{loc}: {err['msg']}", key=loc)


def build_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ParseError("configuration document must be a mapping")
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise _translate(exc) from None


def parse_document(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"cannot parse configuration: {exc}") from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ParseError("configuration document must be a mapping")
    return doc


def load_config(document: str, overrides: list[str] | None = None) -> RunConfig:
    """Parse a YAML/JSON document, apply ``key=value`` overrides and validate."""
    doc = parse_document(document)
    for item in overrides or []:
        apply_override(doc, item)
    return build_config(doc)


def load_config_file(path: str | Path, overrides: list[str] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return load_config(text, overrides)


def apply_override(doc: dict, item: str) -> None:
    """Set a dotted key (``ddpg.lr_actor=1e-3``) in a raw document; values parse as YAML."""
    if "=" not in item:
        raise ParseError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    if not key:
        raise ParseError(f"override {item!r} has an empty key")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    node = doc
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise InvalidValue(f"{key}: {part!r} is not a section", key=key)
        node = child
    node[parts[-1]] = value


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)
