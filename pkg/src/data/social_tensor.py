"""Target-centric occupancy grids of surrounding-vessel relative motion."""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from src.data.pipeline import SequenceSample
from src.navigation.geometry import KM_TO_M


class GridSpec(BaseModel):
    """Cell layout of one occupancy grid, oriented along the direction of navigation."""

    W: int = Field(default=5, ge=1, description="Lateral cells")
    L: int = Field(default=30, ge=1, description="Longitudinal cells")
    lat_cell: float = Field(default=25.0, gt=0, description="Lateral cell extent (m)")
    lon_cell: float = Field(default=75.0, gt=0, description="Longitudinal cell extent (m)")
    ahead_fraction: float = Field(default=2.0 / 3.0, ge=0, le=1, description="Share of L ahead of the target")

    @property
    def l_ahead(self) -> int:
        return int(round(self.L * self.ahead_fraction))

    @property
    def l_behind(self) -> int:
        return self.L - self.l_ahead

    @property
    def ahead_span(self) -> float:
        """Longitudinal reach ahead of the target (m)."""
        return self.l_ahead * self.lon_cell

    @property
    def behind_span(self) -> float:
        return self.l_behind * self.lon_cell


def cell_of(rel: Tuple[float, float], spec: GridSpec) -> Optional[Tuple[int, int]]:
    """
    Grid cell of a target-relative offset.

    Args:
        rel: (lateral offset m, longitudinal offset m), longitudinal positive ahead
        spec: Grid layout

    Returns:
        (w, l) indices, or None outside the grid
    """
    d_lat, d_lon = rel
    w = math.floor(d_lat / spec.lat_cell + spec.W / 2)
    l = math.floor(d_lon / spec.lon_cell) + spec.l_behind
    if 0 <= w < spec.W and 0 <= l < spec.L:
        return w, l
    return None


@dataclass(frozen=True)
class GridEntry:
    """One neighbor's contribution to a cell at one step."""
    order: int
    other_id: str
    rel: Tuple[float, float]
    value: Tuple[float, float]

    @property
    def distance(self) -> float:
        return math.hypot(*self.rel)


def collide(entries: Sequence[GridEntry]) -> GridEntry:
    """Nearest neighbor to the target wins a shared cell; ties go to the earlier agent."""
    best = entries[0]
    for entry in entries[1:]:
        if entry.distance < best.distance or (entry.distance == best.distance and entry.order < best.order):
            best = entry
    return best


@dataclass
class SocialTensor:
    """(W, L, T_obs, 2) relative change rates plus the (W, L, T_obs) occupancy mask."""
    values: np.ndarray
    mask: np.ndarray

    @classmethod
    def empty(cls, spec: GridSpec, t_obs: int) -> "SocialTensor":
        return cls(
            values=np.zeros((spec.W, spec.L, t_obs, 2)),
            mask=np.zeros((spec.W, spec.L, t_obs), dtype=bool),
        )

    @property
    def t_obs(self) -> int:
        return self.values.shape[2]

    def occupied(self) -> int:
        return int(self.mask.sum())

    def dump_csv(self, path: Path) -> Path:
        """Write every occupied cell as one CSV row for inspection."""
        w, l, t = np.nonzero(self.mask)
        frame = pd.DataFrame(
            {
                "step": t + 1,
                "w": w,
                "l": l,
                "d_lat": self.values[w, l, t, 0],
                "d_lon": self.values[w, l, t, 1],
            }
        ).sort_values(["step", "w", "l"])
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        return path


def relative_offsets(sample: SequenceSample, i: int) -> Dict[int, Tuple[float, float]]:
    """Target-relative (lateral m, longitudinal m) offsets of neighbors observed at position i."""
    out = {}
    for j, track in enumerate(sample.neighbors):
        if track.km[i] is None:
            continue
        out[j] = (
            track.f[i] - sample.target_f[i],
            (track.km[i] - sample.target_km[i]) * KM_TO_M,
        )
    return out


def build(sample: SequenceSample, spec: GridSpec) -> SocialTensor:
    """
    Build the social tensor of a sample's observation window.

    Slice t (1..t_obs) holds, for every neighbor observed at positions t-1 and t,
    the change of its target-relative offset between the two positions, written
    into the cell of its offset at t.
    """
    tensor = SocialTensor.empty(spec, sample.t_obs)
    order = sorted(range(len(sample.neighbors)), key=lambda j: sample.neighbors[j].other_id)
    rank = {j: r for r, j in enumerate(order)}

    previous = relative_offsets(sample, 0)
    for t in range(1, sample.t_obs + 1):
        current = relative_offsets(sample, t)
        cells: Dict[Tuple[int, int], List[GridEntry]] = {}
        for j in order:
            if j not in current or j not in previous:
                continue
            rel = current[j]
            cell = cell_of(rel, spec)
            if cell is None:
                continue
            value = (rel[0] - previous[j][0], rel[1] - previous[j][1])
            cells.setdefault(cell, []).append(
                GridEntry(rank[j], sample.neighbors[j].other_id, rel, value)
            )
        for (w, l), entries in cells.items():
            winner = collide(entries)
            tensor.values[w, l, t - 1] = winner.value
            tensor.mask[w, l, t - 1] = True
        previous = current
    return tensor


def stack(tensors: Sequence[SocialTensor]) -> Tuple[np.ndarray, np.ndarray]:
    """Batch tensors into (B, W, L, T, 2) values and (B, W, L, T) masks."""
    return (
        np.stack([t.values for t in tensors]),
        np.stack([t.mask for t in tensors]),
    )
