"""
Synthetic waterway traffic with rule-based sidestepping.

Upstream vessels keep a preferred lane. When a downstream vessel comes within
the trigger distance ahead, the upstream vessel shifts toward the right border
by a fixed offset and drifts back to its lane once the other vessel has
passed. Every sign change of the longitudinal offset between an upstream
vessel and any other vessel is written to an event log.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.data.pipeline import Direction, Interaction, RawFix, SequenceSample
from src.navigation.geometry import FairwayGeometry
from src.utils.logger import get_logger

logger = get_logger(__name__)


class ScenarioConfig(BaseModel):
    """Generator parameters; lengths in m, speeds in m/s, times in s."""

    segment_lengths: List[float] = Field(default_factory=lambda: [2000.0] * 5)
    segment_curvatures: List[float] = Field(default_factory=lambda: [0.0, 1 / 2000, 0.0, -1 / 2000, 0.0])
    fairway_width: float = Field(default=150.0, gt=0)

    upstream_count: int = Field(default=2, ge=0)
    downstream_count: int = Field(default=2, ge=0)
    upstream_speed: Tuple[float, float] = (2.0, 3.0)
    downstream_speed: Tuple[float, float] = (3.5, 5.0)
    upstream_lane: Tuple[float, float] = (45.0, 55.0)
    downstream_lane: Tuple[float, float] = (85.0, 95.0)
    include_stationary_neighbor: bool = False
    stationary_lane: float = Field(default=10.0, ge=0)

    trigger_distance: float = Field(default=600.0, gt=0)
    sidestep_offset: float = Field(default=20.0, gt=0)
    sidestep_rate: float = Field(default=2.0, gt=0, description="Lateral speed while sidestepping (m/step)")
    return_rate: float = Field(default=1.0, gt=0, description="Lateral speed while returning (m/step)")

    sim_dt: float = Field(default=10.0, gt=0)
    duration: float = Field(default=1800.0, gt=0)
    scenario_spacing: float = Field(default=9000.0, gt=0, description="Start-time offset between scenarios")

    speed_noise: float = Field(default=0.05, ge=0)
    position_noise: float = Field(default=0.5, ge=0)
    time_jitter: float = Field(default=0.0, ge=0)
    dropout: float = Field(default=0.0, ge=0, lt=1)
    seed: int = 7

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.segment_lengths) != len(self.segment_curvatures):
            raise ValueError("segment_lengths and segment_curvatures differ in length")
        for name in ("upstream_speed", "downstream_speed", "upstream_lane", "downstream_lane"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is inverted")
        if self.upstream_speed[0] <= 0 or self.downstream_speed[0] <= 0:
            raise ValueError("vessel speeds must be positive")
        if self.trigger_distance >= 1500.0:
            raise ValueError("trigger_distance must stay inside the neighbor selection window")
        if self.sidestep_offset >= self.upstream_lane[0]:
            raise ValueError("sidestep would leave the fairway")
        if self.time_jitter >= self.sim_dt / 2:
            raise ValueError("time_jitter must stay below half a simulation step")
        return self

    @classmethod
    def from_json(cls, path: Path) -> "ScenarioConfig":
        with open(path, "r") as f:
            return cls.model_validate(json.load(f))

    def geometry(self) -> FairwayGeometry:
        return FairwayGeometry.from_segments(
            self.segment_lengths, self.segment_curvatures, self.fairway_width
        )


class ScenarioEvent(BaseModel):
    """Ground-truth sign change of the km offset between an upstream vessel and another vessel."""
    scenario: int
    target_id: str
    other_id: str
    kind: Literal["encounter", "overtaking"]
    t: float


@dataclass
class VesselSpec:
    """Initial state of one simulated vessel."""
    agent_id: str
    direction: Direction
    s0: float
    speed: float
    lane: float
    stationary: bool = False


@dataclass
class SyntheticStream:
    """Output of the generator."""
    geometry: FairwayGeometry
    fixes: List[RawFix] = field(default_factory=list)
    events: List[ScenarioEvent] = field(default_factory=list)


def sidestep_onset_step(gap: float, closing_speed: float, cfg: ScenarioConfig) -> int:
    """First simulation step at which an upstream vessel reacts to an oncoming one."""
    if gap <= cfg.trigger_distance:
        return 1
    return math.ceil((gap - cfg.trigger_distance) / (closing_speed * cfg.sim_dt))


def _draw_vessels(cfg: ScenarioConfig, rng: np.random.Generator, index: int, length: float) -> List[VesselSpec]:
    vessels = []
    for i in range(cfg.upstream_count):
        vessels.append(
            VesselSpec(
                agent_id=f"s{index:05d}-u{i}",
                direction=Direction.UPSTREAM,
                s0=float(rng.uniform(0.02, 0.3) * length),
                speed=float(rng.uniform(*cfg.upstream_speed)),
                lane=float(rng.uniform(*cfg.upstream_lane)),
            )
        )
    for i in range(cfg.downstream_count):
        vessels.append(
            VesselSpec(
                agent_id=f"s{index:05d}-d{i}",
                direction=Direction.DOWNSTREAM,
                s0=float(rng.uniform(0.5, 0.98) * length),
                speed=float(rng.uniform(*cfg.downstream_speed)),
                lane=float(rng.uniform(*cfg.downstream_lane)),
            )
        )
    if cfg.include_stationary_neighbor:
        vessels.append(
            VesselSpec(
                agent_id=f"s{index:05d}-m0",
                direction=Direction.UPSTREAM,
                s0=float(rng.uniform(0.3, 0.6) * length),
                speed=0.0,
                lane=cfg.stationary_lane,
                stationary=True,
            )
        )
    return vessels


def generate_scenario(
    cfg: ScenarioConfig,
    vessels: Sequence[VesselSpec],
    index: int = 0,
    geometry: Optional[FairwayGeometry] = None,
    rng: Optional[np.random.Generator] = None,
) -> SyntheticStream:
    """
    Simulate one scenario from explicit initial vessel states.

    Each step advances positions, then evaluates threats on the new positions,
    then moves every upstream vessel laterally toward its desired offset.
    """
    g = geometry or cfg.geometry()
    rng = rng if rng is not None else np.random.default_rng([cfg.seed, index])
    t0 = index * cfg.scenario_spacing
    n_steps = int(round(cfg.duration / cfg.sim_dt))

    s = np.array([v.s0 for v in vessels], dtype=np.float64)
    lateral = np.array([v.lane for v in vessels], dtype=np.float64)
    sign = np.array([v.direction.sign for v in vessels])
    base = np.array([0.0 if v.stationary else v.speed for v in vessels])
    moving_up = np.array([v.direction is Direction.UPSTREAM and not v.stationary for v in vessels])
    downstream = np.array([v.direction is Direction.DOWNSTREAM for v in vessels])
    active = (s >= 0) & (s <= g.length)

    stream = SyntheticStream(geometry=g)
    lateral_rate = np.zeros(len(vessels))
    speeds = base.copy()

    def record(t: float):
        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            return
        # positions follow the current velocity to the stamped time
        jitter = rng.uniform(-cfg.time_jitter, cfg.time_jitter, len(idx)) if cfg.time_jitter else np.zeros(len(idx))
        along = s[idx] + sign[idx] * speeds[idx] * jitter
        outside = (along < 0) | (along > g.length)
        jitter[outside] = 0.0
        along[outside] = s[idx][outside]
        km = g.km_of(along)
        points = g.from_nav_frame_many(km, lateral[idx] + lateral_rate[idx] * jitter)
        for k, i in enumerate(idx):
            if cfg.dropout and rng.random() < cfg.dropout:
                continue
            v = vessels[i]
            tangent = g.tangent_at(float(km[k]))
            normal = g.normal_at(float(km[k]))
            vel = tangent * sign[i] * speeds[i] + normal * lateral_rate[i]
            noise = rng.normal(0.0, cfg.position_noise, 2) if cfg.position_noise else np.zeros(2)
            stream.fixes.append(
                RawFix(
                    agent_id=v.agent_id,
                    t=float(t + jitter[k]),
                    x=float(points[k, 0] + noise[0]),
                    y=float(points[k, 1] + noise[1]),
                    direction=v.direction,
                    vx=float(vel[0]),
                    vy=float(vel[1]),
                    heading=math.atan2(vel[1], vel[0]),
                )
            )

    record(t0)
    for step in range(1, n_steps + 1):
        t = t0 + step * cfg.sim_dt
        before = s.copy()
        was_active = active.copy()

        if cfg.speed_noise:
            speeds = np.where(base > 0, base + rng.normal(0.0, cfg.speed_noise, len(vessels)), 0.0)
        s = s + sign * speeds * cfg.sim_dt
        active = was_active & (s >= 0) & (s <= g.length)

        # threat: an active downstream vessel within trigger distance ahead
        gaps = s[None, :] - s[:, None]
        threat = (gaps > 0) & (gaps <= cfg.trigger_distance) & downstream[None, :] & active[None, :]
        threatened = threat.any(axis=1) & moving_up

        lanes = np.array([v.lane for v in vessels])
        desired = np.where(threatened, lanes - cfg.sidestep_offset, lanes)
        delta = desired - lateral
        rate = np.where(threatened, cfg.sidestep_rate, cfg.return_rate)
        move = np.where(moving_up, np.clip(delta, -rate, rate), 0.0)
        lateral = lateral + move
        lateral_rate = move / cfg.sim_dt

        for i in np.nonzero(moving_up & active)[0]:
            for j in range(len(vessels)):
                if j == i or not active[j] or not was_active[j]:
                    continue
                a = before[j] - before[i]
                b = s[j] - s[i]
                if (a > 0 and b <= 0) or (a < 0 and b >= 0):
                    stream.events.append(
                        ScenarioEvent(
                            scenario=index,
                            target_id=vessels[i].agent_id,
                            other_id=vessels[j].agent_id,
                            kind="encounter" if downstream[j] else "overtaking",
                            t=t,
                        )
                    )
        record(t)

    return stream


def generate(cfg: ScenarioConfig, count: int) -> SyntheticStream:
    """
    Generate `count` independent scenarios on one geometry.

    Scenario k uses its own generator seeded with (seed, k), so any prefix of a
    longer run is identical to a shorter run.
    """
    g = cfg.geometry()
    stream = SyntheticStream(geometry=g)
    for k in range(count):
        rng = np.random.default_rng([cfg.seed, k])
        vessels = _draw_vessels(cfg, rng, k, g.length)
        part = generate_scenario(cfg, vessels, index=k, geometry=g, rng=rng)
        stream.fixes.extend(part.fixes)
        stream.events.extend(part.events)
    logger.info(f"Generated {count} scenarios: {len(stream.fixes)} fixes, {len(stream.events)} events")
    return stream


def label_interactions(
    samples: Sequence[SequenceSample],
    events: Sequence[ScenarioEvent],
) -> Dict[Tuple[str, float], List[Interaction]]:
    """
    Annotate samples from the generator's event log.

    An event at time tau falls into horizon step k = ceil((tau - t_anchor) / dt)
    when 1 <= k <= n, where t_anchor is the time of the last observed position.

    Returns:
        (target trip id, start time) -> interactions; other_id holds the agent id
    """
    by_target: Dict[str, List[ScenarioEvent]] = {}
    for event in events:
        by_target.setdefault(event.target_id, []).append(event)

    annotations: Dict[Tuple[str, float], List[Interaction]] = {}
    for sample in samples:
        t_anchor = sample.start_t + sample.t_obs * sample.dt
        found = []
        for event in by_target.get(sample.agent_id, []):
            k = math.ceil((event.t - t_anchor) / sample.dt - 1e-9)
            if 1 <= k <= sample.n:
                found.append(Interaction(other_id=event.other_id, kind=event.kind, step=k))
        annotations[(sample.target_id, sample.start_t)] = found
    return annotations
