"""Request/response schemas for the sweep service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..channel import (
    ChannelConfig,
    DEFAULT_ASA_DEG,
    DEFAULT_ASD_DEG,
    DEFAULT_AVG_POWER,
)
from ..config import DEFAULT_SNR_GRID_DB, SystemConfig
from ..montecarlo import SweepResult

__all__ = [
    "ChannelSettings",
    "SweepRequest",
    "SweepResponse",
    "SweepRowModel",
    "TrialFailureModel",
]


class ChannelSettings(BaseModel):
    """Cluster-channel parameters exposed through the API."""

    model_config = ConfigDict(extra="forbid")

    num_clusters: int = Field(5, ge=1)
    rays_per_cluster: int = Field(8, ge=1)
    asd_deg: float = Field(DEFAULT_ASD_DEG, ge=0)
    asa_deg: float = Field(DEFAULT_ASA_DEG, ge=0)
    avg_power: float = Field(DEFAULT_AVG_POWER, gt=0)
    delay_max: Optional[int] = Field(None, ge=0)

    def to_channel_config(self) -> ChannelConfig:
        return ChannelConfig(
            num_clusters=self.num_clusters,
            rays_per_cluster=self.rays_per_cluster,
            asd_deg=self.asd_deg,
            asa_deg=self.asa_deg,
            avg_power=self.avg_power,
            delay_max=self.delay_max,
        )


class SweepRequest(BaseModel):
    """Everything needed to run one Monte Carlo throughput sweep."""

    model_config = ConfigDict(extra="forbid")

    n_t: int = Field(32, ge=1)
    n_r: int = Field(32, ge=1)
    n_rf: int = Field(2, ge=1)
    n_s: int = Field(2, ge=1)
    k: int = Field(512, ge=1)
    m: int = Field(2, ge=1)
    snr_grid_db: list[float] = Field(default_factory=lambda: list(DEFAULT_SNR_GRID_DB))
    trials: int = Field(500, ge=1)
    seed: int = Field(0, ge=0)
    codebook_kind: Literal["orthogonal", "weak", "strong"] = "orthogonal"
    criterion: Literal["eig", "fro", "det"] = "eig"
    noise_free_training: bool = False
    channel: ChannelSettings = Field(default_factory=ChannelSettings)
    workers: int = Field(1, ge=1)

    def to_system_config(self) -> SystemConfig:
        """Convert to the core dataclass; raises ConfigurationError when the
        combination violates a system invariant pydantic cannot see."""
        return SystemConfig(
            n_t=self.n_t,
            n_r=self.n_r,
            n_rf=self.n_rf,
            n_s=self.n_s,
            k=self.k,
            m=self.m,
            snr_grid_db=tuple(self.snr_grid_db),
            trials=self.trials,
            seed=self.seed,
            codebook_kind=self.codebook_kind,
            criterion=self.criterion,
            noise_free_training=self.noise_free_training,
            channel=self.channel.to_channel_config(),
        )

    @classmethod
    def from_system_config(cls, cfg: SystemConfig, workers: int = 1) -> "SweepRequest":
        return cls(
            n_t=cfg.n_t,
            n_r=cfg.n_r,
            n_rf=cfg.n_rf,
            n_s=cfg.n_s,
            k=cfg.k,
            m=cfg.m,
            snr_grid_db=list(cfg.snr_grid_db),
            trials=cfg.trials,
            seed=cfg.seed,
            codebook_kind=cfg.codebook_kind,
            criterion=cfg.criterion,
            noise_free_training=cfg.noise_free_training,
            channel=ChannelSettings(
                num_clusters=cfg.channel.num_clusters,
                rays_per_cluster=cfg.channel.rays_per_cluster,
                asd_deg=cfg.channel.asd_deg,
                asa_deg=cfg.channel.asa_deg,
                avg_power=cfg.channel.avg_power,
                delay_max=cfg.channel.delay_max,
            ),
            workers=workers,
        )


class SweepRowModel(BaseModel):
    """One aggregate row, mirroring the CSV schema."""

    snr_db: float
    codebook: str
    criterion: str
    m: int
    trials: int
    mean_rate: float
    dbf_mean_rate: float
    normalized_rate: float
    ci95_halfwidth: float


class TrialFailureModel(BaseModel):
    trial_index: int
    stage: str
    message: str


class SweepResponse(BaseModel):
    rows: list[SweepRowModel]
    reference_mean_rates: list[float]
    failures: list[TrialFailureModel]
    num_trials_succeeded: int
    failure_fraction: float

    @classmethod
    def from_result(cls, result: SweepResult) -> "SweepResponse":
        return cls(
            rows=[SweepRowModel(**vars(r)) for r in result.rows],
            reference_mean_rates=list(result.reference_mean_rates),
            failures=[TrialFailureModel(**vars(f)) for f in result.failures],
            num_trials_succeeded=result.num_trials_succeeded,
            failure_fraction=result.failure_fraction,
        )
