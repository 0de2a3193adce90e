"""Fairway geometry and the navigation-area frame (waterway kilometer, border distance)."""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from src.utils.errors import ProjectionOutOfRange

KM_TO_M = 1000.0

# points per projection chunk; bounds the (points x segments) work arrays
_CHUNK = 512


@dataclass(frozen=True)
class NavFrameState:
    """Position relative to the navigable area."""
    km: float  # waterway kilometer
    f: float  # distance to the right fairway border (m), positive into the fairway


class FairwayGeometryFile(BaseModel):
    """On-disk JSON layout of a fairway geometry."""
    centerline: List[Tuple[float, float]] = Field(min_length=2)
    right_border: List[Tuple[float, float]] = Field(min_length=2)
    left_border: List[Tuple[float, float]] = Field(min_length=2)
    km_origin: float = 0.0
    km_per_meter: float = 0.001

    @field_validator("km_per_meter")
    @classmethod
    def _monotone(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("km_per_meter must be > 0 (centerline is oriented upstream)")
        return value


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(eq=False)
class FairwayGeometry:
    """
    Centerline plus both fairway borders, all polylines in meters.

    The centerline runs upstream; the right border is on the right-hand side of a
    vessel travelling upstream, i.e. on the negative side of the left normal.
    """

    centerline: np.ndarray
    right_border: np.ndarray
    left_border: np.ndarray
    km_origin: float = 0.0
    km_per_meter: float = 0.001
    span_slack: float = 50.0

    _seg_start: np.ndarray = field(init=False, repr=False)
    _seg_vec: np.ndarray = field(init=False, repr=False)
    _seg_len: np.ndarray = field(init=False, repr=False)
    _cum: np.ndarray = field(init=False, repr=False)
    _normals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.centerline = np.asarray(self.centerline, dtype=np.float64)
        self.right_border = np.asarray(self.right_border, dtype=np.float64)
        self.left_border = np.asarray(self.left_border, dtype=np.float64)

        if self.centerline.ndim != 2 or self.centerline.shape[0] < 2:
            raise ValueError("centerline needs at least 2 points")
        if not self.km_per_meter > 0:
            raise ValueError("km_per_meter must be > 0")

        self._seg_start = self.centerline[:-1]
        self._seg_vec = np.diff(self.centerline, axis=0)
        self._seg_len = np.hypot(self._seg_vec[:, 0], self._seg_vec[:, 1])
        if np.any(self._seg_len <= 0):
            raise ValueError("centerline contains repeated points")
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        tangents = self._seg_vec / self._seg_len[:, None]
        self._normals = np.stack([-tangents[:, 1], tangents[:, 0]], axis=1)

        # borders must sit on their own side of the centerline everywhere
        vertex_s = self._cum[:-1] + 0.5 * self._seg_len
        right = self._border_offsets(vertex_s, self.right_border)
        left = self._border_offsets(vertex_s, self.left_border)
        if np.any(right >= 0) or np.any(left <= 0):
            raise ValueError("fairway borders cross the centerline or have zero width")

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @classmethod
    def from_json(cls, path: Path) -> "FairwayGeometry":
        """Load a geometry from its JSON file."""
        with open(path, "r") as f:
            spec = FairwayGeometryFile.model_validate(json.load(f))
        return cls(
            centerline=np.array(spec.centerline),
            right_border=np.array(spec.right_border),
            left_border=np.array(spec.left_border),
            km_origin=spec.km_origin,
            km_per_meter=spec.km_per_meter,
        )

    def to_json(self, path: Path) -> Path:
        """Write the geometry in its JSON file layout."""
        spec = FairwayGeometryFile(
            centerline=[tuple(p) for p in self.centerline.tolist()],
            right_border=[tuple(p) for p in self.right_border.tolist()],
            left_border=[tuple(p) for p in self.left_border.tolist()],
            km_origin=self.km_origin,
            km_per_meter=self.km_per_meter,
        )
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write(spec.model_dump_json(indent=2))
        return path

    @classmethod
    def from_segments(
        cls,
        lengths: Sequence[float],
        curvatures: Sequence[float],
        width: float,
        step: float = 10.0,
        origin: Tuple[float, float] = (0.0, 0.0),
        heading: float = 0.0,
        km_origin: float = 0.0,
        km_per_meter: float = 0.001,
    ) -> "FairwayGeometry":
        """
        Build a fairway by integrating piecewise-constant curvature.

        Args:
            lengths: Segment lengths along the centerline (m)
            curvatures: Signed curvature per segment (1/m), positive turns left
            width: Constant fairway width (m)
            step: Centerline sampling distance (m)
            origin: Cartesian position of the downstream end (m)
            heading: Initial heading of the upstream direction (rad)

        Returns:
            FairwayGeometry with borders offset by width/2 on either side
        """
        if len(lengths) != len(curvatures):
            raise ValueError("lengths and curvatures must have the same length")
        if width <= 0:
            raise ValueError("width must be > 0")

        x, y, theta = float(origin[0]), float(origin[1]), float(heading)
        points = [(x, y)]
        for length, kappa in zip(lengths, curvatures):
            n_steps = max(1, math.ceil(length / step))
            ds = length / n_steps
            for _ in range(n_steps):
                mid = theta + 0.5 * kappa * ds
                x += ds * math.cos(mid)
                y += ds * math.sin(mid)
                theta += kappa * ds
                points.append((x, y))

        centerline = np.array(points)
        seg = np.diff(centerline, axis=0)
        seg /= np.hypot(seg[:, 0], seg[:, 1])[:, None]
        seg_normals = np.stack([-seg[:, 1], seg[:, 0]], axis=1)
        vertex_normals = np.empty_like(centerline)
        vertex_normals[0] = seg_normals[0]
        vertex_normals[-1] = seg_normals[-1]
        vertex_normals[1:-1] = seg_normals[:-1] + seg_normals[1:]
        vertex_normals /= np.hypot(vertex_normals[:, 0], vertex_normals[:, 1])[:, None]

        half = 0.5 * width
        return cls(
            centerline=centerline,
            right_border=centerline - half * vertex_normals,
            left_border=centerline + half * vertex_normals,
            km_origin=km_origin,
            km_per_meter=km_per_meter,
        )

    # ------------------------------------------------------------------
    # arclength <-> km
    # ------------------------------------------------------------------

    @property
    def length(self) -> float:
        """Total centerline arclength (m)."""
        return float(self._cum[-1])

    def km_of(self, s):
        return self.km_origin + self.km_per_meter * np.asarray(s, dtype=np.float64)

    def s_of(self, km):
        return (np.asarray(km, dtype=np.float64) - self.km_origin) / self.km_per_meter

    # ------------------------------------------------------------------
    # local frame helpers
    # ------------------------------------------------------------------

    def _check_span(self, s: np.ndarray) -> None:
        bad = (s < -self.span_slack) | (s > self.length + self.span_slack)
        if np.any(bad):
            worst = float(np.asarray(s)[bad][0])
            raise ProjectionOutOfRange(
                f"arclength {worst:.2f} m outside geometry span [0, {self.length:.2f}] m"
            )

    def _segment_of(self, s: np.ndarray) -> np.ndarray:
        # a vertex belongs to the segment with the lower arclength
        seg = np.searchsorted(self._cum, s, side="left") - 1
        return np.clip(seg, 0, len(self._seg_len) - 1)

    def _frame(self, s: np.ndarray, seg: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        u = (s - self._cum[seg]) / self._seg_len[seg]
        foot = self._seg_start[seg] + u[:, None] * self._seg_vec[seg]
        return foot, self._normals[seg]

    def _border_offsets(self, s: np.ndarray, border: np.ndarray, seg: np.ndarray = None) -> np.ndarray:
        """Signed distance along the local normal from the centerline to a border."""
        s = np.atleast_1d(np.asarray(s, dtype=np.float64))
        if seg is None:
            seg = self._segment_of(s)
        foot, normal = self._frame(s, seg)

        a = border[:-1][None, :, :]
        e = np.diff(border, axis=0)[None, :, :]
        c = foot[:, None, :]
        n = normal[:, None, :]
        denom = _cross(n, e)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = _cross(a - c, e) / denom
            w = _cross(a - c, n) / denom
        # end segments of the border extend as rays, matching centerline extrapolation
        n_seg = e.shape[1]
        lower_ok = (w >= -1e-12) | (np.arange(n_seg) == 0)[None, :]
        upper_ok = (w <= 1 + 1e-12) | (np.arange(n_seg) == n_seg - 1)[None, :]
        valid = (np.abs(denom) > 1e-12) & lower_ok & upper_ok
        t = np.where(valid, t, np.inf)
        best = np.argmin(np.abs(t), axis=1)
        result = t[np.arange(len(s)), best]
        if np.any(~np.isfinite(result)):
            raise ProjectionOutOfRange("normal line does not reach the fairway border")
        return result

    def _project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest-segment orthogonal projection; ties go to the lower arclength."""
        s_all, seg_all, off_all = [], [], []
        last = len(self._seg_len) - 1
        for start in range(0, len(points), _CHUNK):
            p = points[start:start + _CHUNK]
            d = p[:, None, :] - self._seg_start[None, :, :]
            u = np.einsum("psk,sk->ps", d, self._seg_vec) / self._seg_len[None, :] ** 2
            uc = np.clip(u, 0.0, 1.0)
            foot = self._seg_start[None, :, :] + uc[:, :, None] * self._seg_vec[None, :, :]
            dist2 = np.sum((p[:, None, :] - foot) ** 2, axis=2)
            floor = dist2.min(axis=1, keepdims=True)
            best = np.argmax(dist2 <= floor + 1e-9 * (1.0 + floor), axis=1)

            rows = np.arange(len(p))
            ub = u[rows, best]
            # extrapolate beyond the two ends, clamp elsewhere
            extrapolate = ((best == 0) & (ub < 0)) | ((best == last) & (ub > 1))
            ub = np.where(extrapolate, ub, np.clip(ub, 0.0, 1.0))
            s = self._cum[best] + ub * self._seg_len[best]
            foot_b = self._seg_start[best] + ub[:, None] * self._seg_vec[best]
            offset = np.einsum("pk,pk->p", p - foot_b, self._normals[best])

            s_all.append(s)
            seg_all.append(best)
            off_all.append(offset)
        return np.concatenate(s_all), np.concatenate(seg_all), np.concatenate(off_all)

    # ------------------------------------------------------------------
    # public frame conversions
    # ------------------------------------------------------------------

    def to_nav_frame_many(self, points: np.ndarray, strict: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        """
        Vectorized to_nav_frame: (P, 2) points -> (km, f) arrays.

        With strict=False, points beyond the span yield NaN instead of raising.
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        s, seg, offset = self._project(points)
        if strict:
            self._check_span(s)
            t_right = self._border_offsets(s, self.right_border, seg)
            return self.km_of(s), offset - t_right

        inside = (s >= -self.span_slack) & (s <= self.length + self.span_slack)
        km = np.full(len(s), np.nan)
        f = np.full(len(s), np.nan)
        if np.any(inside):
            t_right = self._border_offsets(s[inside], self.right_border, seg[inside])
            km[inside] = self.km_of(s[inside])
            f[inside] = offset[inside] - t_right
        return km, f

    def from_nav_frame_many(self, km: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Vectorized inverse map: (km, f) arrays -> (P, 2) points."""
        s = np.atleast_1d(self.s_of(km))
        f = np.atleast_1d(np.asarray(f, dtype=np.float64))
        self._check_span(s)
        seg = self._segment_of(s)
        foot, normal = self._frame(s, seg)
        t_right = self._border_offsets(s, self.right_border, seg)
        return foot + (t_right + f)[:, None] * normal

    def tangent_at(self, km: float) -> np.ndarray:
        """Unit centerline direction (upstream) at a waterway kilometer."""
        s = np.atleast_1d(self.s_of(km))
        seg = self._segment_of(s)
        return self._seg_vec[seg[0]] / self._seg_len[seg[0]]

    def normal_at(self, km: float) -> np.ndarray:
        """Unit left normal at a waterway kilometer."""
        seg = self._segment_of(np.atleast_1d(self.s_of(km)))
        return self._normals[seg[0]].copy()

    def width_at(self, km: float) -> float:
        """Fairway width (m) measured along the local normal."""
        s = np.atleast_1d(self.s_of(km))
        return float(
            self._border_offsets(s, self.left_border)[0] - self._border_offsets(s, self.right_border)[0]
        )

    def curvature_at(self, km: float, half_window: float = 50.0) -> float:
        """Signed centerline curvature (1/m) from the heading change over a window."""
        s = float(self.s_of(km))
        lo = max(0.0, s - half_window)
        hi = min(self.length, s + half_window)
        if hi <= lo:
            return 0.0
        seg = self._segment_of(np.array([lo, hi]))
        t0 = self._seg_vec[seg[0]]
        t1 = self._seg_vec[seg[1]]
        angle = math.atan2(float(_cross(t0, t1)), float(np.dot(t0, t1)))
        return angle / (hi - lo)

    def contains(self, state: NavFrameState, f_slack: float = 50.0) -> bool:
        """Whether a state lies inside the span and within the lateral slack."""
        s = float(self.s_of(state.km))
        if s < -self.span_slack or s > self.length + self.span_slack:
            return False
        return -f_slack <= state.f <= self.width_at(state.km) + f_slack


def to_nav_frame(p: Sequence[float], g: FairwayGeometry) -> NavFrameState:
    """Express a Cartesian point (m) in the navigation-area frame."""
    km, f = g.to_nav_frame_many(np.asarray(p, dtype=np.float64)[None, :])
    return NavFrameState(km=float(km[0]), f=float(f[0]))


def from_nav_frame(state: NavFrameState, g: FairwayGeometry) -> np.ndarray:
    """Inverse of to_nav_frame: Cartesian point (m) for a navigation-frame state."""
    return g.from_nav_frame_many(np.array([state.km]), np.array([state.f]))[0]
