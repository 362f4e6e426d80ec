"""Experiment configuration, presets and strict JSON loading."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError
from .fdaf import FdafParams
from .rir import RoomScenario
from .signal import Excitation

ALGORITHMS = ("baseline", "gpud", "lpud")


@dataclass(frozen=True)
class DatasetConfig:
    G: int = 500
    L: int = 512


@dataclass(frozen=True)
class ModelConfig:
    n_clusters: int = 8
    local_dim: int = 20
    global_dim: int = 275
    n_eigenfilters: int = 5
    forgetting: float = 0.99
    diagonal_evidence: bool = False
    kmeans_max_iters: int = 100


@dataclass(frozen=True)
class ExcitationConfig:
    kind: str = "wgn"
    duration_s: float = 10.0
    pole: float = 0.9
    modulation_period_s: float = 0.5
    off_gain: float = 0.0
    path: str | None = None

    def recipe(self) -> Excitation:
        return Excitation(self.kind, self.pole, self.modulation_period_s, self.off_gain, self.path)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: RoomScenario = field(default_factory=lambda: RoomScenario(rir_length=1024))
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    filter: FdafParams = field(default_factory=FdafParams)
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    snr_db: tuple = (-5.0,)
    algorithms: tuple = ALGORITHMS
    n_trials: int = 10
    seed: int = 0
    out_dir: str = "results"
    n_jobs: int = 1

    def __post_init__(self):
        snr = self.snr_db
        snr = (float(snr),) if isinstance(snr, (int, float)) else tuple(float(s) for s in snr)
        object.__setattr__(self, "snr_db", snr)
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown or not self.algorithms:
            raise ConfigurationError(f"algorithms must be a non-empty subset of {ALGORITHMS}")
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be at least 1")
        self.excitation.recipe()
        L = self.dataset.L
        if L > self.scenario.rir_length:
            raise ConfigurationError("filter length L exceeds the RIR length W")
        if self.n_blocks < 2:
            raise ConfigurationError("excitation too short for two blocks")
        if self.n_samples < self.scenario.rir_length:
            raise ConfigurationError("excitation shorter than the RIR length W")

    @property
    def n_samples(self) -> int:
        return int(round(self.excitation.duration_s * self.scenario.fs))

    @property
    def n_blocks(self) -> int:
        return self.n_samples // self.dataset.L

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["scenario"] = self.scenario.to_dict()
        d["snr_db"] = list(self.snr_db)
        d["algorithms"] = list(self.algorithms)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _reject_unknown(cls, d, "config")
        kwargs = dict(d)
        if "scenario" in d:
            from .rir import SourceSector
            sc = dict(d["scenario"])
            _reject_unknown(RoomScenario, sc, "scenario")
            if "source_sector" in sc:
                _reject_unknown(SourceSector, sc["source_sector"], "scenario.source_sector")
            kwargs["scenario"] = RoomScenario.from_dict(sc)
        for key, sub in (("dataset", DatasetConfig), ("model", ModelConfig),
                         ("filter", FdafParams), ("excitation", ExcitationConfig)):
            if key in d:
                _reject_unknown(sub, d[key], key)
                kwargs[key] = sub(**d[key])
        return cls(**kwargs)


def _reject_unknown(cls, d, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


def desk_preset(**changes) -> ExperimentConfig:
    """Laptop-scale setup: W=1024, L=512, G=500, I=8, D_i=20, K_i=5, 10 trials of 10 s."""
    return ExperimentConfig(**changes)


def full_preset(**changes) -> ExperimentConfig:
    """Full-scale setup: W=4096, L=1024, G=5000, I=40, D_i=50, D_1=550, K_i=5, 50 trials."""
    base = dict(
        scenario=RoomScenario(rir_length=4096),
        dataset=DatasetConfig(G=5000, L=1024),
        model=ModelConfig(n_clusters=40, local_dim=50, global_dim=550, n_eigenfilters=5),
        n_trials=50,
    )
    base.update(changes)
    return ExperimentConfig(**base)


PRESETS = {"desk": desk_preset, "full": full_preset}
