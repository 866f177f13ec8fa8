"""Run configuration shared by the CLI subcommands."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidInputError, ManifestSchemaError
from .recombine import LossWeights
from .synth import SynthConfig
from .validation import check_open_unit


@dataclass(frozen=True)
class RunConfig:
    """Loss weights, thresholds, synthesis settings, parallelism and seed."""

    loss_weights: LossWeights = field(default_factory=LossWeights)
    binarize_threshold: float = 0.5
    iou_threshold: float = 0.5
    dice_threshold: float = 0.7
    dice_mode: str = "instance"
    synth: SynthConfig | None = None
    jobs: int = 1
    seed: int | None = None

    def __post_init__(self):
        check_open_unit(self.binarize_threshold, "binarize_threshold")
        check_open_unit(self.iou_threshold, "iou_threshold")
        check_open_unit(self.dice_threshold, "dice_threshold")
        if self.dice_mode not in ("instance", "union"):
            raise InvalidInputError("dice_mode must be 'instance' or 'union'")
        if self.jobs < 1:
            raise InvalidInputError("jobs must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise InvalidInputError("config must be a JSON object")
        kwargs = dict(data)
        if "loss_weights" in kwargs:
            try:
                kwargs["loss_weights"] = LossWeights(**kwargs["loss_weights"])
            except TypeError as exc:
                raise InvalidInputError(f"bad loss_weights: {exc}") from exc
        if kwargs.get("synth") is not None:
            kwargs["synth"] = SynthConfig.from_dict(kwargs["synth"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InvalidInputError(f"bad config: {exc}") from exc


def load_run_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"{path}: not valid JSON ({exc})") from exc
    return RunConfig.from_dict(data)


def load_synth_config(path) -> SynthConfig:
    """Load a synthesis config: either a bare SynthConfig object or a full
    RunConfig document with a ``synth`` key."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise InvalidInputError("synth config must be a JSON object")
    if "synth" in data:
        cfg = RunConfig.from_dict(data).synth
        if cfg is None:
            raise InvalidInputError("config has a null 'synth' section")
        return cfg
    return SynthConfig.from_dict(data)
