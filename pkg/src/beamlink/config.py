"""Run configuration for the Monte Carlo link simulator.

A :class:`SystemConfig` pins down everything a sweep needs: array sizes,
codebook family, selection criterion, SNR grid, trial count, and the
cluster-channel parameters.  Configurations can be assembled from a flat
``key = value`` text file, programmatic overrides (e.g. CLI flags), or both;
overrides always win.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .channel import ChannelConfig
from .codebooks import (
    Codebook,
    orthogonal_codebook,
    strong_coherent_codebook,
    weak_coherent_codebook,
)

__all__ = [
    "CODEBOOK_KINDS",
    "CRITERIA",
    "DEFAULT_SNR_GRID_DB",
    "ConfigurationError",
    "SystemConfig",
    "build_codebooks",
    "config_from_sources",
    "parse_config_file",
    "snr_db_to_gamma",
    "snr_db_to_sigma2",
]

CODEBOOK_KINDS = ("orthogonal", "weak", "strong")
CRITERIA = ("eig", "fro", "det")

DEFAULT_SNR_GRID_DB = tuple(float(s) for s in range(-20, 35, 5))


class ConfigurationError(ValueError):
    """A configuration file or flag combination is invalid."""


def snr_db_to_gamma(snr_db: float) -> float:
    """Per-stream post-processing SNR (linear) for a given link SNR in dB."""
    return 10.0 ** (snr_db / 10.0)


def snr_db_to_sigma2(snr_db: float, n_s: int) -> float:
    """Training/receiver noise variance so that ``gamma = 1 / (n_s * sigma2)``."""
    return 1.0 / (n_s * snr_db_to_gamma(snr_db))


def _codebook_num_beams(kind: str, num_antennas: int) -> int:
    """Beam count the named codebook family puts on ``num_antennas`` antennas."""
    if kind == "orthogonal":
        if num_antennas % 2 != 0:
            raise ConfigurationError(
                "orthogonal codebook needs an even antenna count, got "
                f"{num_antennas}"
            )
        return num_antennas
    if kind == "weak":
        # oversampled arcsine grid, 36 beams for the reference 32-antenna
        # array; the construction needs an even beam count
        num_beams = max(num_antennas + 1, -(-num_antennas * 9 // 8))
        return num_beams + num_beams % 2
    if kind == "strong":
        return num_antennas
    raise ConfigurationError(f"unknown codebook kind: {kind!r}")


@dataclass(frozen=True)
class SystemConfig:
    """Complete description of one simulation run.

    Attributes:
        n_t: Transmit antennas.
        n_r: Receive antennas.
        n_rf: RF chains per side.
        n_s: Spatial streams.
        k: OFDM subcarriers.
        m: Initially selected beam pairs fed to the combinatorial search.
        snr_grid_db: SNR points (dB) to sweep.
        trials: Monte Carlo trials per SNR point.
        seed: Root seed; trial ``t`` derives its streams from ``(seed, t)``.
        codebook_kind: One of ``orthogonal`` / ``weak`` / ``strong``.
        criterion: Beam-pair scoring rule, one of ``eig`` / ``fro`` / ``det``.
        noise_free_training: Skip training noise (genie coupling measurements).
        channel: Cluster-channel parameters.
    """

    n_t: int = 32
    n_r: int = 32
    n_rf: int = 2
    n_s: int = 2
    k: int = 512
    m: int = 2
    snr_grid_db: tuple = DEFAULT_SNR_GRID_DB
    trials: int = 500
    seed: int = 0
    codebook_kind: str = "orthogonal"
    criterion: str = "eig"
    noise_free_training: bool = False
    channel: ChannelConfig = field(default_factory=ChannelConfig)

    def __post_init__(self):
        for name in ("n_t", "n_r", "n_rf", "n_s", "k", "m", "trials"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigurationError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.codebook_kind not in CODEBOOK_KINDS:
            raise ConfigurationError(
                f"codebook_kind must be one of {CODEBOOK_KINDS}, got {self.codebook_kind!r}"
            )
        if self.criterion not in CRITERIA:
            raise ConfigurationError(
                f"criterion must be one of {CRITERIA}, got {self.criterion!r}"
            )
        if not self.n_s <= self.n_rf <= self.m:
            raise ConfigurationError(
                f"need n_s <= n_rf <= m, got n_s={self.n_s}, n_rf={self.n_rf}, m={self.m}"
            )
        beam_budget = min(
            _codebook_num_beams(self.codebook_kind, self.n_t),
            _codebook_num_beams(self.codebook_kind, self.n_r),
        )
        if self.m > beam_budget:
            raise ConfigurationError(
                f"m={self.m} exceeds the {self.codebook_kind} codebook size {beam_budget}"
            )
        grid = tuple(float(s) for s in self.snr_grid_db)
        if not grid:
            raise ConfigurationError("snr_grid_db must not be empty")
        if not all(math.isfinite(s) for s in grid):
            raise ConfigurationError("snr_grid_db entries must be finite")
        object.__setattr__(self, "snr_grid_db", grid)
        if not isinstance(self.channel, ChannelConfig):
            raise ConfigurationError("channel must be a ChannelConfig")

    def sigma2(self, snr_db: float) -> float:
        """Noise variance at an SNR grid point."""
        return snr_db_to_sigma2(snr_db, self.n_s)

    def gamma(self, snr_db: float) -> float:
        return snr_db_to_gamma(snr_db)


def build_codebooks(cfg: SystemConfig) -> tuple[Codebook, Codebook]:
    """Construct the (transmit, receive) codebooks the configuration names."""
    out = []
    for num_antennas in (cfg.n_t, cfg.n_r):
        num_beams = _codebook_num_beams(cfg.codebook_kind, num_antennas)
        if cfg.codebook_kind == "orthogonal":
            out.append(orthogonal_codebook(num_beams))
        elif cfg.codebook_kind == "weak":
            out.append(weak_coherent_codebook(num_antennas, num_beams))
        else:
            out.append(strong_coherent_codebook(num_antennas, num_beams))
    return out[0], out[1]


# --------------------------------------------------------------------------
# config file / override plumbing

def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple:
    items = [piece.strip() for piece in text.split(",") if piece.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(float(piece) for piece in items)


def _parse_optional_int(text: str):
    if text.strip().lower() in ("none", ""):
        return None
    return int(text)


_SYSTEM_PARSERS = {
    "n_t": int,
    "n_r": int,
    "n_rf": int,
    "n_s": int,
    "k": int,
    "m": int,
    "snr_grid_db": _parse_float_list,
    "trials": int,
    "seed": int,
    "codebook_kind": str.strip,
    "criterion": str.strip,
    "noise_free_training": _parse_bool,
}

_CHANNEL_PARSERS = {
    "num_clusters": int,
    "rays_per_cluster": int,
    "asd_deg": float,
    "asa_deg": float,
    "avg_power": float,
    "delay_max": _parse_optional_int,
}


def parse_config_file(path: str) -> dict:
    """Read a flat ``key = value`` file into a typed option mapping.

    Blank lines and ``#`` comments (full-line or trailing) are ignored.
    Unknown keys and malformed values raise :class:`ConfigurationError`
    naming the offending line.
    """
    options = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.readlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(raw_lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        parser = _SYSTEM_PARSERS.get(key) or _CHANNEL_PARSERS.get(key)
        if parser is None:
            raise ConfigurationError(f"{path}:{lineno}: unknown configuration key {key!r}")
        if key in options:
            raise ConfigurationError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            options[key] = parser(value.strip())
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return options


def config_from_sources(config_path: str | None = None, overrides: dict | None = None) -> SystemConfig:
    """Build a :class:`SystemConfig` from an optional file plus overrides.

    Args:
        config_path: Flat config file, or None to start from defaults.
        overrides: Already-typed option values (e.g. parsed CLI flags) that
            take precedence over the file.  ``None`` values are ignored so
            unset flags fall through.

    Raises:
        ConfigurationError: Unknown keys, malformed values, or a combination
            that violates the system invariants.
    """
    merged = parse_config_file(config_path) if config_path else {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _SYSTEM_PARSERS and key not in _CHANNEL_PARSERS:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        merged[key] = value

    channel_kwargs = {k: merged.pop(k) for k in list(merged) if k in _CHANNEL_PARSERS}
    try:
        channel = ChannelConfig(**channel_kwargs)
        system_fields = {f.name for f in fields(SystemConfig)}
        assert set(merged) <= system_fields
        return SystemConfig(channel=channel, **merged)
    except ConfigurationError:
        raise
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
