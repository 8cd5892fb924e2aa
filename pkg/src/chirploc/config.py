"""Scenario files: JSON documents with unit-suffixed keys, validated strictly."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from chirploc.baselines import PathLossModel
from chirploc.channel import SPEED_OF_LIGHT, ChannelConfig
from chirploc.locator import Gateway, PipelineOptions, Scene
from chirploc.receiver import ReceiverConfig
from chirploc.signal import ChirpConfig

SWEEP_VARIABLES = ("distance_difference", "f_s", "snr", "clock_offset", "tx_freq_bias")


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending field."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class ChirpSection(_Strict):
    sf: int = 7
    bw_hz: float = 125e3
    fc_hz: float = 868.1e6
    theta_tx_rad: float = 0.0
    direction: Literal["up", "down"] = "up"
    n_chirps: int = 8
    amplitude: float = 1.0


class ChannelSection(_Strict):
    v_m_per_s: float = SPEED_OF_LIGHT
    alpha_scale: float = 1.0
    noise_std: float = 0.0
    snr_db: Optional[float] = None
    tx_freq_bias_hz: float = 0.0
    rng_seed: int = 0


class ReceiverSection(_Strict):
    f_s_hz: float = 20e6
    fc_hz: Optional[float] = None
    lpf_cutoff_hz: Optional[float] = None
    theta_rx_rad: float = 0.0
    rx_freq_bias_hz: float = 0.0


class GatewaySection(_Strict):
    id: str
    pos_m: List[float]
    clock_offset_s: float = 0.0
    theta_rx_rad: Optional[float] = None
    rx_freq_bias_hz: Optional[float] = None

    @field_validator("pos_m")
    @classmethod
    def _coords(cls, v):
        if len(v) not in (2, 3):
            raise ValueError("position needs 2 or 3 coordinates")
        return v


class SceneSection(_Strict):
    device_pos_m: List[float]
    gateways: List[GatewaySection] = Field(min_length=2)

    @field_validator("device_pos_m")
    @classmethod
    def _coords(cls, v):
        if len(v) not in (2, 3):
            raise ValueError("position needs 2 or 3 coordinates")
        return v


class SweepSection(_Strict):
    variable: Literal[SWEEP_VARIABLES]
    from_: Optional[float] = Field(default=None, alias="from")
    to: Optional[float] = None
    steps: Optional[int] = None
    values: Optional[List[float]] = None


class RssiSection(_Strict):
    p0_dbm: float = -40.0
    d0_m: float = 1.0
    n: float = 2.7
    sigma_db: float = 0.0
    trials: int = 1


class TdoaSection(_Strict):
    resolution_s: float = 1e-6
    trials: int = 100


class MatchedFilterSection(_Strict):
    template_theta_rad: float = 0.0
    grid_points: int = 16


class ExperimentSection(_Strict):
    type: Optional[Literal["simulate", "sweep", "baseline"]] = None
    capture_start_s: float = 0.0
    capture_span_s: Optional[float] = None
    max_lag_samples: Optional[int] = None
    smoothing_window: int = 1
    refine_peak: bool = False
    include_flagged: bool = False
    gate_fraction: float = 0.1
    receive_path: Literal["analytic", "passband"] = "analytic"
    sim_rate_hz: Optional[float] = None
    seeds: List[int] = Field(default_factory=list)
    sweep: Optional[SweepSection] = None
    rssi: RssiSection = Field(default_factory=RssiSection)
    tdoa: TdoaSection = Field(default_factory=TdoaSection)
    matched_filter: MatchedFilterSection = Field(default_factory=MatchedFilterSection)
    output_dir: Optional[str] = None
    plot: bool = False


class ScenarioFile(_Strict):
    chirp: ChirpSection = Field(default_factory=ChirpSection)
    channel: ChannelSection = Field(default_factory=ChannelSection)
    receiver: ReceiverSection = Field(default_factory=ReceiverSection)
    scene: SceneSection
    experiment: ExperimentSection = Field(default_factory=ExperimentSection)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


class Scenario:
    """A validated scenario file plus the domain objects built from it."""

    def __init__(self, doc: ScenarioFile):
        self.doc = doc
        c, ch, r = doc.chirp, doc.channel, doc.receiver
        try:
            self.chirp = ChirpConfig(
                sf=c.sf, bw=c.bw_hz, fc=c.fc_hz, theta_tx=c.theta_tx_rad,
                direction=c.direction, n_chirps=c.n_chirps, amplitude=c.amplitude,
            )
        except ValueError as exc:
            raise ConfigError(f"chirp: {exc}") from exc
        try:
            self.channel = ChannelConfig(
                v=ch.v_m_per_s, alpha_scale=ch.alpha_scale, noise_std=ch.noise_std,
                tx_freq_bias=ch.tx_freq_bias_hz, rng_seed=ch.rng_seed, snr_db=ch.snr_db,
            )
        except ValueError as exc:
            raise ConfigError(f"channel: {exc}") from exc
        if not r.f_s_hz > c.bw_hz:
            raise ConfigError(
                f"receiver.f_s_hz: sampling rate {r.f_s_hz:g} Hz must exceed chirp.bw_hz "
                f"{c.bw_hz:g} Hz (f_s > BW), otherwise the differential phase is ambiguous"
            )
        try:
            self.receiver = ReceiverConfig(
                fc=c.fc_hz if r.fc_hz is None else r.fc_hz,
                theta_rx=r.theta_rx_rad,
                f_s=r.f_s_hz,
                lpf_cutoff=c.bw_hz if r.lpf_cutoff_hz is None else r.lpf_cutoff_hz,
                rx_freq_bias=r.rx_freq_bias_hz,
            )
        except ValueError as exc:
            raise ConfigError(f"receiver: {exc}") from exc
        if not self.receiver.lpf_cutoff > c.bw_hz / 2:
            raise ConfigError(
                f"receiver.lpf_cutoff_hz: {self.receiver.lpf_cutoff:g} Hz would cut the "
                f"chirp band (needs > bw/2 = {c.bw_hz / 2:g} Hz)"
            )
        gateways = []
        for n, g in enumerate(doc.scene.gateways):
            try:
                gateways.append(Gateway(
                    id=g.id,
                    pos=tuple(g.pos_m),
                    clock_offset=g.clock_offset_s,
                    theta_rx=r.theta_rx_rad if g.theta_rx_rad is None else g.theta_rx_rad,
                    rx_freq_bias=r.rx_freq_bias_hz if g.rx_freq_bias_hz is None else g.rx_freq_bias_hz,
                ))
            except ValueError as exc:
                raise ConfigError(f"scene.gateways.{n}: {exc}") from exc
        try:
            self.scene = Scene(
                device_pos=tuple(doc.scene.device_pos_m),
                gateways=gateways,
                chirp=self.chirp,
                channel=self.channel,
                receiver=self.receiver,
            )
        except ValueError as exc:
            raise ConfigError(f"scene: {exc}") from exc
        e = doc.experiment
        if e.smoothing_window < 1 or e.smoothing_window % 2 == 0:
            raise ConfigError("experiment.smoothing_window: must be a positive odd integer")
        if e.receive_path == "passband" and e.sim_rate_hz is None:
            raise ConfigError("experiment.sim_rate_hz: required for the passband receive path")

    @property
    def experiment(self) -> ExperimentSection:
        return self.doc.experiment

    @property
    def seeds(self) -> list:
        return list(self.experiment.seeds) or [0]

    def options(self, refine: Optional[bool] = None, keep_signals: bool = False) -> PipelineOptions:
        e = self.experiment
        return PipelineOptions(
            capture_start=e.capture_start_s,
            capture_span=e.capture_span_s,
            max_lag=e.max_lag_samples,
            smoothing_window=e.smoothing_window,
            refine=e.refine_peak if refine is None else refine,
            include_flagged=e.include_flagged,
            gate_fraction=e.gate_fraction,
            receive_path=e.receive_path,
            sim_rate=e.sim_rate_hz,
            keep_signals=keep_signals,
        )

    def path_loss(self) -> PathLossModel:
        s = self.experiment.rssi
        try:
            return PathLossModel(p0=s.p0_dbm, d0=s.d0_m, n=s.n, sigma=s.sigma_db)
        except ValueError as exc:
            raise ConfigError(f"experiment.rssi: {exc}") from exc

    def with_scene(self, scene: Scene) -> "Scenario":
        clone = object.__new__(Scenario)
        clone.__dict__.update(self.__dict__)
        clone.scene = scene
        return clone


def parse_scenario(data: dict) -> Scenario:
    try:
        doc = ScenarioFile.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    return Scenario(doc)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return parse_scenario(data)


def scene_with(scene: Scene, variable: str, value: float) -> Scene:
    """Copy of ``scene`` with one sweep variable set to ``value``."""
    if variable == "distance_difference":
        g0, g1 = scene.gateway_positions[:2]
        baseline = float(np.linalg.norm(g1 - g0))
        if not abs(value) < baseline:
            raise ValueError(
                f"distance difference {value:g} m is not below the first baseline {baseline:g} m"
            )
        s = (baseline + value) / 2
        pos = g0 + s * (g1 - g0) / baseline
        return replace(scene, device_pos=tuple(pos))
    if variable == "f_s":
        return replace(scene, receiver=replace(scene.receiver, f_s=value))
    if variable == "snr":
        return replace(scene, channel=replace(scene.channel, snr_db=value))
    if variable == "clock_offset":
        gws = list(scene.gateways)
        gws[0] = replace(gws[0], clock_offset=value)
        return replace(scene, gateways=gws)
    if variable == "tx_freq_bias":
        return replace(scene, channel=replace(scene.channel, tx_freq_bias=value))
    raise ValueError(f"unknown sweep variable {variable!r}; choose from {', '.join(SWEEP_VARIABLES)}")
