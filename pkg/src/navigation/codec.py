"""Dislocation features and their discrete class labels."""

from dataclasses import dataclass
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from src.navigation.geometry import KM_TO_M, FairwayGeometry, NavFrameState
from src.utils.errors import IndexOutOfRange


@dataclass(frozen=True)
class Dislocation:
    """Per-step position change: lateral dx (m) and longitudinal dy (m)."""
    dx: float
    dy: float


@dataclass(frozen=True)
class DislocationLabel:
    """Lateral and longitudinal class indices for one step."""
    x: int
    y: int


def dislocation(a: NavFrameState, b: NavFrameState) -> Dislocation:
    """Dislocation between two consecutive navigation-frame states."""
    return Dislocation(dx=b.f - a.f, dy=(b.km - a.km) * KM_TO_M)


@dataclass(frozen=True, eq=False)
class LabelCodec:
    """
    Half-open binning of continuous dislocations.

    Bin k covers [edges[k], edges[k+1]); values beyond the outer edges clamp
    to the first or last bin.
    """

    lateral_edges: np.ndarray
    longitudinal_edges: np.ndarray

    def __post_init__(self):
        for name in ("lateral_edges", "longitudinal_edges"):
            edges = np.asarray(getattr(self, name), dtype=np.float64)
            if edges.ndim != 1 or len(edges) < 2:
                raise ValueError(f"{name} needs at least 2 entries")
            if np.any(np.diff(edges) <= 0):
                raise ValueError(f"{name} must be strictly ascending")
            object.__setattr__(self, name, edges)

    @classmethod
    def uniform(
        cls,
        n_lateral: int = 21,
        lateral_range: Tuple[float, float] = (-15.0, 15.0),
        n_longitudinal: int = 41,
        longitudinal_range: Tuple[float, float] = (0.0, 200.0),
    ) -> "LabelCodec":
        """Uniform-width bins over the given ranges (m per step)."""
        return cls(
            lateral_edges=np.linspace(lateral_range[0], lateral_range[1], n_lateral + 1),
            longitudinal_edges=np.linspace(longitudinal_range[0], longitudinal_range[1], n_longitudinal + 1),
        )

    @property
    def n_lateral(self) -> int:
        return len(self.lateral_edges) - 1

    @property
    def n_longitudinal(self) -> int:
        return len(self.longitudinal_edges) - 1

    @property
    def lateral_centers(self) -> np.ndarray:
        return 0.5 * (self.lateral_edges[:-1] + self.lateral_edges[1:])

    @property
    def longitudinal_centers(self) -> np.ndarray:
        return 0.5 * (self.longitudinal_edges[:-1] + self.longitudinal_edges[1:])

    @staticmethod
    def _bin(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(edges, values, side="right") - 1
        return np.clip(idx, 0, len(edges) - 2).astype(np.int64)

    def encode_array(self, dx: np.ndarray, dy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Vectorized encode over arrays of lateral and longitudinal dislocations."""
        return (
            self._bin(np.asarray(dx, dtype=np.float64), self.lateral_edges),
            self._bin(np.asarray(dy, dtype=np.float64), self.longitudinal_edges),
        )

    def decode_array(self, ix: np.ndarray, iy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Vectorized decode; raises IndexOutOfRange on any invalid index."""
        ix = np.asarray(ix, dtype=np.int64)
        iy = np.asarray(iy, dtype=np.int64)
        if np.any((ix < 0) | (ix >= self.n_lateral)):
            raise IndexOutOfRange(f"lateral label outside [0, {self.n_lateral})")
        if np.any((iy < 0) | (iy >= self.n_longitudinal)):
            raise IndexOutOfRange(f"longitudinal label outside [0, {self.n_longitudinal})")
        return self.lateral_centers[ix], self.longitudinal_centers[iy]

    def half_widths(self, ix: np.ndarray, iy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Half of the bin widths at the given labels."""
        return (
            0.5 * np.diff(self.lateral_edges)[np.asarray(ix)],
            0.5 * np.diff(self.longitudinal_edges)[np.asarray(iy)],
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lateral_edges": self.lateral_edges.tolist(),
            "longitudinal_edges": self.longitudinal_edges.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LabelCodec":
        return cls(
            lateral_edges=np.array(data["lateral_edges"], dtype=np.float64),
            longitudinal_edges=np.array(data["longitudinal_edges"], dtype=np.float64),
        )

    def matches(self, other: "LabelCodec") -> bool:
        return np.array_equal(self.lateral_edges, other.lateral_edges) and np.array_equal(
            self.longitudinal_edges, other.longitudinal_edges
        )


def encode(d: Dislocation, c: LabelCodec) -> DislocationLabel:
    """Class label of the bins containing each dislocation component."""
    ix, iy = c.encode_array(np.array([d.dx]), np.array([d.dy]))
    return DislocationLabel(x=int(ix[0]), y=int(iy[0]))


def decode(label: DislocationLabel, c: LabelCodec) -> Dislocation:
    """Bin-center dislocation for a label."""
    dx, dy = c.decode_array(np.array([label.x]), np.array([label.y]))
    return Dislocation(dx=float(dx[0]), dy=float(dy[0]))


def reconstruct(
    start: NavFrameState,
    labels: Sequence[DislocationLabel],
    c: LabelCodec,
    g: FairwayGeometry,
) -> np.ndarray:
    """
    Roll decoded dislocations forward from a start state.

    Args:
        start: Last observed navigation-frame state
        labels: Predicted labels, one per future step
        c: Codec the labels were produced with
        g: Fairway geometry

    Returns:
        (len(labels), 2) Cartesian points (m), one per future step
    """
    if len(labels) == 0:
        return np.zeros((0, 2))
    dx, dy = c.decode_array([l.x for l in labels], [l.y for l in labels])
    f = start.f + np.cumsum(dx)
    km = start.km + np.cumsum(dy) / KM_TO_M
    return g.from_nav_frame_many(km, f)
