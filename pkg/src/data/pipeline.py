"""
Raw position logs to training sequences.

Trip splitting, outlier rejection, velocity-aware resampling, windowing and
surrounding-vessel selection.
"""

import bisect
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.interpolate import CubicHermiteSpline

from src.navigation.codec import LabelCodec
from src.navigation.context import lookahead_context
from src.navigation.geometry import FairwayGeometry, NavFrameState
from src.utils.config import Config
from src.utils.errors import TooShort
from src.utils.logger import get_logger

logger = get_logger(__name__)


class Direction(str, Enum):
    UPSTREAM = "upstream"
    DOWNSTREAM = "downstream"

    @property
    def sign(self) -> float:
        """+1 when km grows along the direction of travel."""
        return 1.0 if self is Direction.UPSTREAM else -1.0


class TripRole(str, Enum):
    TARGET_ELIGIBLE = "target_eligible"
    SURROUNDING_ONLY = "surrounding_only"


class PipelineConfig(BaseModel):
    """Preprocessing thresholds and window layout."""

    dt: float = Field(default=60.0, gt=0, description="Resampling interval (s)")
    t_obs: int = Field(default=5, ge=1, description="Observed steps")
    n: int = Field(default=5, ge=1, description="Predicted steps")
    stride: Optional[int] = Field(default=None, ge=1, description="Window stride in steps (default t_obs)")

    max_trip_gap: float = Field(default=3600.0, gt=0, description="Signal loss that splits a trip (s)")
    max_resample_gap: float = Field(default=120.0, gt=0, description="Source gap left empty by resampling (s)")
    max_speed: float = Field(default=8.0, gt=0, description="Outlier speed bound (m/s)")
    max_accel: float = Field(default=0.5, gt=0, description="Outlier acceleration bound (m/s^2)")
    mooring_speed: float = Field(default=0.3, ge=0, description="Below this a trip counts as moored (m/s)")

    ahead_km: float = Field(default=1.5, gt=0, description="Neighbor window ahead of the target (km)")
    behind_km: float = Field(default=0.75, gt=0, description="Neighbor window behind the target (km)")

    context_spacing: float = Field(default=200.0, gt=0, description="Lookahead segment length (m)")
    context_count: int = Field(default=5, ge=1, description="Lookahead segments")

    @property
    def window(self) -> int:
        """Positions per sample: one anchor plus t_obs + n dislocations."""
        return self.t_obs + self.n + 1

    @property
    def step_stride(self) -> int:
        return self.stride or self.t_obs


@dataclass(frozen=True)
class RawFix:
    """One position report."""
    agent_id: str
    t: float
    x: float
    y: float
    direction: Direction = Direction.UPSTREAM
    vx: Optional[float] = None
    vy: Optional[float] = None
    heading: Optional[float] = None

    @property
    def has_velocity(self) -> bool:
        return self.vx is not None and self.vy is not None


@dataclass(eq=False)
class Trip:
    """Time-ordered fixes of one agent in one direction without long signal loss."""
    agent_id: str
    fixes: List[RawFix]
    direction: Direction
    role: TripRole = TripRole.TARGET_ELIGIBLE
    index: int = 0
    dt: Optional[float] = None  # set once resampled onto the grid

    _nav: Optional[Tuple[int, np.ndarray, np.ndarray]] = field(default=None, init=False, repr=False)
    _steps: Optional[Dict[int, int]] = field(default=None, init=False, repr=False)

    @property
    def key(self) -> str:
        return f"{self.agent_id}#{self.index}"

    @property
    def start(self) -> float:
        return self.fixes[0].t

    @property
    def end(self) -> float:
        return self.fixes[-1].t

    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.fixes], dtype=np.float64)

    def points(self) -> np.ndarray:
        return np.array([(f.x, f.y) for f in self.fixes], dtype=np.float64).reshape(-1, 2)

    def velocities(self) -> np.ndarray:
        """Reported velocities, or finite-difference estimates when any is missing."""
        if all(f.has_velocity for f in self.fixes):
            return np.array([(f.vx, f.vy) for f in self.fixes], dtype=np.float64)
        return finite_difference_velocities(self.times(), self.points())

    def nav_frame(self, g: FairwayGeometry) -> Tuple[np.ndarray, np.ndarray]:
        """(km, f) per fix, NaN where the fix lies outside the geometry span."""
        if self._nav is None or self._nav[0] != id(g):
            km, f = g.to_nav_frame_many(self.points(), strict=False)
            self._nav = (id(g), km, f)
        return self._nav[1], self._nav[2]

    def step_lookup(self) -> Dict[int, int]:
        """Grid step number -> fix index; resampled trips only."""
        if self.dt is None:
            raise ValueError(f"trip {self.key} is not resampled")
        if self._steps is None:
            self._steps = {int(round(f.t / self.dt)): i for i, f in enumerate(self.fixes)}
        return self._steps


class Interaction(BaseModel):
    """A sign change of a neighbor's km offset during the prediction horizon."""
    other_id: str
    kind: Literal["encounter", "overtaking"]
    step: int = Field(ge=1, description="Horizon step at whose end the offset has flipped")


class NeighborTrack(BaseModel):
    """Per-position state of one surrounding vessel; None where unobserved."""
    other_id: str
    direction: Direction
    km: List[Optional[float]]
    f: List[Optional[float]]

    def observed(self) -> List[bool]:
        return [k is not None for k in self.km]

    def state(self, i: int) -> Optional[NavFrameState]:
        if self.km[i] is None:
            return None
        return NavFrameState(km=self.km[i], f=self.f[i])


class SequenceSample(BaseModel):
    """One target window with its surrounding vessels, all in the navigation frame."""
    target_id: str
    agent_id: str
    start_t: float
    dt: float
    t_obs: int
    n: int
    direction: Direction = Direction.UPSTREAM
    target_km: List[float]
    target_f: List[float]
    target_xy: List[Tuple[float, float]]
    target_v: List[Tuple[float, float]]
    neighbors: List[NeighborTrack] = Field(default_factory=list)
    context: List[float] = Field(default_factory=list)
    interactions: List[Interaction] = Field(default_factory=list)

    @model_validator(mode="after")
    def _lengths(self):
        expected = self.t_obs + self.n + 1
        for name in ("target_km", "target_f", "target_xy", "target_v"):
            if len(getattr(self, name)) != expected:
                raise ValueError(f"{name} must hold {expected} positions")
        for track in self.neighbors:
            if len(track.km) != expected or len(track.f) != expected:
                raise ValueError(f"neighbor {track.other_id} must hold {expected} positions")
        return self

    def target_states(self) -> List[NavFrameState]:
        return [NavFrameState(km=k, f=f) for k, f in zip(self.target_km, self.target_f)]

    @property
    def anchor(self) -> int:
        """Index of the last observed position."""
        return self.t_obs

    @property
    def has_encounter(self) -> bool:
        return any(i.kind == "encounter" for i in self.interactions)


# ----------------------------------------------------------------------
# trip-level operations
# ----------------------------------------------------------------------

def finite_difference_velocities(t: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Central differences inside, one-sided at the ends."""
    if len(t) < 2:
        return np.zeros_like(p)
    return np.gradient(p, t, axis=0, edge_order=1)


def _min_speed(trip: Trip) -> float:
    if len(trip.fixes) < 2:
        return math.inf
    speeds = np.hypot(*trip.velocities().T)
    return float(speeds.min())


def split_trips(
    fixes: Iterable[RawFix],
    max_gap: float = 3600.0,
    mooring_speed: float = 0.3,
) -> List[Trip]:
    """
    Group fixes per agent and cut at direction changes or signal loss.

    A gap strictly longer than max_gap starts a new trip. Repeated timestamps
    keep the first fix. Downstream trips and trips that slow below
    mooring_speed are only used as surrounding vessels.

    Args:
        fixes: Raw fixes in any order
        max_gap: Longest tolerated signal loss (s)
        mooring_speed: Speed below which the trip is considered moored (m/s)

    Returns:
        Trips ordered by agent id, then time
    """
    by_agent: Dict[str, List[RawFix]] = defaultdict(list)
    for fix in fixes:
        by_agent[fix.agent_id].append(fix)

    trips: List[Trip] = []
    for agent_id in sorted(by_agent):
        ordered = sorted(by_agent[agent_id], key=lambda f: f.t)
        current: List[RawFix] = []
        index = 0
        for fix in ordered:
            if current and fix.t == current[-1].t:
                continue
            if current and (fix.direction != current[-1].direction or fix.t - current[-1].t > max_gap):
                trips.append(Trip(agent_id, current, current[0].direction, index=index))
                index += 1
                current = []
            current.append(fix)
        if current:
            trips.append(Trip(agent_id, current, current[0].direction, index=index))

    for trip in trips:
        if trip.direction is Direction.DOWNSTREAM or _min_speed(trip) < mooring_speed:
            trip.role = TripRole.SURROUNDING_ONLY

    logger.debug(f"Split {len(by_agent)} agents into {len(trips)} trips")
    return trips


def filter_outliers(trip: Trip, max_speed: float = 8.0, max_accel: float = 0.5) -> Trip:
    """
    Drop fixes that imply an implausible speed or acceleration.

    Each fix is compared against the last kept fix; the acceleration uses the
    speed implied by the previous kept pair.
    """
    if len(trip.fixes) < 2:
        return replace(trip, fixes=list(trip.fixes))

    kept = [trip.fixes[0]]
    prev_speed: Optional[float] = None
    for fix in trip.fixes[1:]:
        last = kept[-1]
        dt = fix.t - last.t
        speed = math.hypot(fix.x - last.x, fix.y - last.y) / dt
        if speed > max_speed:
            continue
        if prev_speed is not None and abs(speed - prev_speed) / dt > max_accel:
            continue
        kept.append(fix)
        prev_speed = speed

    dropped = len(trip.fixes) - len(kept)
    if dropped:
        logger.debug(f"Trip {trip.key}: dropped {dropped} outlier fixes")
    return replace(trip, fixes=kept)


def hermite_resample(trip: Trip, dt: float, max_gap: float = 120.0) -> Trip:
    """
    Resample a trip onto the absolute grid of multiples of dt.

    Positions come from a cubic Hermite spline through the fixes using their
    velocities as tangents. Grid points inside a source gap longer than max_gap
    are skipped, except where they coincide with a fix.

    Raises:
        TooShort: With fewer than 2 fixes
    """
    if len(trip.fixes) < 2:
        raise TooShort(f"trip {trip.key} has {len(trip.fixes)} fix(es), need at least 2")

    t = trip.times()
    p = trip.points()
    spline = CubicHermiteSpline(t, p, trip.velocities(), axis=0)
    velocity = spline.derivative()

    grid = np.arange(math.ceil(t[0] / dt), math.floor(t[-1] / dt) + 1) * dt
    seg = np.clip(np.searchsorted(t, grid, side="right") - 1, 0, len(t) - 2)
    keep = (t[seg + 1] - t[seg] <= max_gap) | np.isin(grid, t)
    grid = grid[keep]

    xy = spline(grid)
    v = velocity(grid)
    fixes = [
        RawFix(
            agent_id=trip.agent_id,
            t=float(ti),
            x=float(pi[0]),
            y=float(pi[1]),
            direction=trip.direction,
            vx=float(vi[0]),
            vy=float(vi[1]),
            heading=math.atan2(vi[1], vi[0]),
        )
        for ti, pi, vi in zip(grid, xy, v)
    ]
    return Trip(trip.agent_id, fixes, trip.direction, role=trip.role, index=trip.index, dt=dt)


# ----------------------------------------------------------------------
# neighbor selection and windowing
# ----------------------------------------------------------------------

def km_offset(target: NavFrameState, other: NavFrameState, direction: Direction) -> float:
    """Neighbor km offset, positive ahead of the target."""
    return direction.sign * (other.km - target.km)


def within_window(offset_km: float, cfg: PipelineConfig) -> bool:
    return -cfg.behind_km <= offset_km <= cfg.ahead_km


def select_neighbors(
    target: Trip,
    others: Sequence[Trip],
    t: float,
    g: FairwayGeometry,
    cfg: Optional[PipelineConfig] = None,
) -> Dict[str, NavFrameState]:
    """
    Surrounding vessels within [-behind_km, +ahead_km] of the target at time t.

    Args:
        target: Resampled target trip
        others: Resampled candidate trips; the target itself is ignored
        t: Grid timestamp (s)
        g: Fairway geometry
        cfg: Pipeline configuration (selection window)

    Returns:
        Trip key -> navigation-frame state, ordered by trip key
    """
    cfg = cfg or PipelineConfig()
    step = int(round(t / target.dt))
    i = target.step_lookup().get(step)
    if i is None:
        return {}
    km, f = target.nav_frame(g)
    if not np.isfinite(km[i]):
        return {}
    here = NavFrameState(float(km[i]), float(f[i]))

    selected: Dict[str, NavFrameState] = {}
    for other in sorted(others, key=lambda o: o.key):
        if other is target or other.agent_id == target.agent_id:
            continue
        j = other.step_lookup().get(step)
        if j is None:
            continue
        okm, of = other.nav_frame(g)
        if not np.isfinite(okm[j]):
            continue
        state = NavFrameState(float(okm[j]), float(of[j]))
        if within_window(km_offset(here, state, target.direction), cfg):
            selected[other.key] = state
    return selected


def detect_interactions(sample: SequenceSample) -> List[Interaction]:
    """
    Encounters and overtakings during the prediction horizon.

    A neighbor interacts at horizon step k when its km offset changes sign
    between positions t_obs+k-1 and t_obs+k (strictly positive to non-positive
    or strictly negative to non-negative).
    """
    found: List[Interaction] = []
    for track in sample.neighbors:
        kind = "encounter" if track.direction is Direction.DOWNSTREAM else "overtaking"
        for k in range(1, sample.n + 1):
            i0, i1 = sample.t_obs + k - 1, sample.t_obs + k
            if track.km[i0] is None or track.km[i1] is None:
                continue
            a = track.km[i0] - sample.target_km[i0]
            b = track.km[i1] - sample.target_km[i1]
            if (a > 0 and b <= 0) or (a < 0 and b >= 0):
                found.append(Interaction(other_id=track.other_id, kind=kind, step=k))
    return found


def _contiguous_starts(steps: List[int], window: int, stride: int) -> List[int]:
    """Start indices of windows over runs of consecutive grid steps."""
    starts = []
    run_start = 0
    for i in range(1, len(steps) + 1):
        if i == len(steps) or steps[i] != steps[i - 1] + 1:
            for s in range(run_start, i - window + 1, stride):
                starts.append(s)
            run_start = i
    return starts


def extract_sequences(
    target: Trip,
    others: Sequence[Trip],
    cfg,
    g: FairwayGeometry,
) -> List[SequenceSample]:
    """
    Cut a resampled upstream target trip into samples with surrounding vessels.

    A window holds t_obs + n + 1 consecutive grid positions and is kept only if
    at least one neighbor crosses the target's km during the prediction horizon.

    Args:
        target: Resampled trip
        others: Resampled candidate neighbor trips
        cfg: PipelineConfig, or a config exposing one as `.pipeline`
        g: Fairway geometry

    Returns:
        Samples ordered by start time
    """
    pc: PipelineConfig = getattr(cfg, "pipeline", cfg)
    if target.direction is not Direction.UPSTREAM or target.role is not TripRole.TARGET_ELIGIBLE:
        return []
    if target.dt is None:
        raise ValueError(f"trip {target.key} is not resampled")

    km, f = target.nav_frame(g)
    steps = [int(round(fix.t / target.dt)) for fix in target.fixes]
    finite = np.isfinite(km)

    candidates = []
    for other in sorted(others, key=lambda o: o.key):
        if other is target or other.agent_id == target.agent_id or other.dt != target.dt:
            continue
        candidates.append((other, other.step_lookup(), other.nav_frame(g)))

    samples: List[SequenceSample] = []
    for s in _contiguous_starts(steps, pc.window, pc.step_stride):
        idx = range(s, s + pc.window)
        if not finite[s:s + pc.window].all():
            continue

        tracks = []
        for other, lookup, (okm, of) in candidates:
            row_km: List[Optional[float]] = []
            row_f: List[Optional[float]] = []
            for i in idx:
                j = lookup.get(steps[i])
                if j is not None and np.isfinite(okm[j]) and within_window(
                    target.direction.sign * (okm[j] - km[i]), pc
                ):
                    row_km.append(float(okm[j]))
                    row_f.append(float(of[j]))
                else:
                    row_km.append(None)
                    row_f.append(None)
            if any(k is not None for k in row_km):
                tracks.append(
                    NeighborTrack(other_id=other.key, direction=other.direction, km=row_km, f=row_f)
                )
        if not tracks:
            continue

        anchor = s + pc.t_obs
        fixes = target.fixes[s:s + pc.window]
        sample = SequenceSample(
            target_id=target.key,
            agent_id=target.agent_id,
            start_t=fixes[0].t,
            dt=target.dt,
            t_obs=pc.t_obs,
            n=pc.n,
            direction=target.direction,
            target_km=[float(v) for v in km[s:s + pc.window]],
            target_f=[float(v) for v in f[s:s + pc.window]],
            target_xy=[(fx.x, fx.y) for fx in fixes],
            target_v=[(fx.vx, fx.vy) for fx in fixes],
            neighbors=tracks,
            context=list(
                lookahead_context(
                    g,
                    NavFrameState(float(km[anchor]), float(f[anchor])),
                    spacing=pc.context_spacing,
                    count=pc.context_count,
                ).features
            ),
        )
        sample.interactions = detect_interactions(sample)
        if sample.interactions:
            samples.append(sample)
    return samples


def prepare_trips(fixes: Iterable[RawFix], g: FairwayGeometry, cfg: PipelineConfig) -> List[Trip]:
    """Split, clean and resample; trips too short to resample are dropped."""
    trips = split_trips(fixes, cfg.max_trip_gap, cfg.mooring_speed)
    resampled: List[Trip] = []
    for trip in trips:
        cleaned = filter_outliers(trip, cfg.max_speed, cfg.max_accel)
        try:
            out = hermite_resample(cleaned, cfg.dt, cfg.max_resample_gap)
        except TooShort as e:
            logger.debug(str(e))
            continue
        if out.fixes:
            out.nav_frame(g)
            resampled.append(out)
    return resampled


def run_pipeline(
    fixes: Iterable[RawFix],
    g: FairwayGeometry,
    cfg: Optional[PipelineConfig] = None,
    workers: Optional[int] = None,
) -> List[SequenceSample]:
    """
    Full preprocessing: raw fixes to relevant training samples.

    Args:
        fixes: Raw fixes of all agents
        g: Fairway geometry
        cfg: Pipeline configuration
        workers: Thread count for per-target extraction (default from Config)

    Returns:
        Samples ordered by (agent_id, start time)
    """
    cfg = cfg or PipelineConfig()
    trips = prepare_trips(fixes, g, cfg)
    logger.info(f"Prepared {len(trips)} resampled trips")

    by_start = sorted(trips, key=lambda tr: tr.start)
    starts = [tr.start for tr in by_start]
    targets = [
        tr for tr in trips
        if tr.direction is Direction.UPSTREAM and tr.role is TripRole.TARGET_ELIGIBLE
    ]

    def extract(target: Trip) -> List[SequenceSample]:
        hi = bisect.bisect_right(starts, target.end)
        others = [o for o in by_start[:hi] if o.end >= target.start and o is not target]
        return extract_sequences(target, others, cfg, g)

    workers = workers or Config.worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(extract, targets))
    else:
        results = [extract(target) for target in targets]

    samples = [s for batch in results for s in batch]
    samples.sort(key=lambda s: (s.agent_id, s.start_t))
    logger.info(f"Extracted {len(samples)} samples from {len(targets)} target trips")
    return samples


def validate_sample(sample: SequenceSample, cfg, g: Optional[FairwayGeometry] = None, codec: Optional[LabelCodec] = None):
    """
    Re-check a sample's invariants independently of its construction.

    Returns:
        Validation report with "valid", "errors" and "warnings"
    """
    pc: PipelineConfig = getattr(cfg, "pipeline", cfg)
    errors: List[str] = []
    warnings: List[str] = []

    if sample.t_obs != pc.t_obs or sample.n != pc.n:
        errors.append(f"window layout {sample.t_obs}+{sample.n} differs from config {pc.t_obs}+{pc.n}")
    if sample.dt != pc.dt:
        errors.append(f"dt {sample.dt} differs from config {pc.dt}")

    values = np.array(sample.target_km + sample.target_f + [c for xy in sample.target_xy for c in xy])
    if not np.all(np.isfinite(values)):
        errors.append("target contains non-finite values")

    if len(sample.context) != 2 * pc.context_count:
        errors.append(f"context has {len(sample.context)} values, expected {2 * pc.context_count}")
    elif not np.all(np.isfinite(sample.context)):
        errors.append("context contains non-finite values")

    if not sample.neighbors:
        errors.append("sample has no surrounding vessels")
    targets = sample.target_states()
    for track in sample.neighbors:
        if not any(track.observed()):
            errors.append(f"neighbor {track.other_id} is never observed")
        for i, (k, f) in enumerate(zip(track.km, track.f)):
            if (k is None) != (f is None):
                errors.append(f"neighbor {track.other_id} step {i}: km/f presence differs")
            elif k is not None and not within_window(km_offset(targets[i], track.state(i), sample.direction), pc):
                errors.append(f"neighbor {track.other_id} step {i}: outside selection window")

    if detect_interactions(sample) != sample.interactions:
        errors.append("interaction annotations disagree with the neighbor tracks")
    if not sample.interactions:
        errors.append("no encounter or overtaking in the prediction horizon")

    if g is not None:
        for i, state in enumerate(targets):
            if not g.contains(state):
                warnings.append(f"target position {i} lies outside the fairway slack")

    if codec is not None:
        dx = np.diff(sample.target_f)
        dy = np.diff(sample.target_km) * 1000.0
        lat, lon = codec.lateral_edges, codec.longitudinal_edges
        if np.any((dx < lat[0]) | (dx >= lat[-1])) or np.any((dy < lon[0]) | (dy >= lon[-1])):
            warnings.append("dislocations outside the codec range will be clamped")

    return {
        "valid": len(errors) == 0,
        "target_id": sample.target_id,
        "errors": errors,
        "warnings": warnings,
    }
