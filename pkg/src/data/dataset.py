"""Label streams and batched arrays assembled from sequence samples."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import GroupShuffleSplit

from src.data.pipeline import SequenceSample
from src.data.social_tensor import GridSpec, build
from src.navigation.codec import LabelCodec
from src.navigation.context import NavigationContext
from src.navigation.geometry import KM_TO_M, NavFrameState


class FeatureFrame(str, Enum):
    """How per-step dislocations are measured."""
    NAVIGATION = "navigation"  # border distance and waterway km
    HEADING = "heading"  # Cartesian, rotated into the heading at the last observed position


def heading_dislocations(xy: np.ndarray, heading: float) -> Tuple[np.ndarray, np.ndarray]:
    """Lateral (left positive) and longitudinal step displacements in a heading-aligned frame."""
    d = np.diff(xy, axis=0)
    c, s = np.cos(heading), np.sin(heading)
    lateral = -s * d[:, 0] + c * d[:, 1]
    longitudinal = c * d[:, 0] + s * d[:, 1]
    return lateral, longitudinal


def heading_to_cartesian(lateral: np.ndarray, longitudinal: np.ndarray, heading: float) -> np.ndarray:
    """Inverse rotation of heading-frame displacements back to (dx, dy)."""
    c, s = np.cos(heading), np.sin(heading)
    return np.column_stack([c * longitudinal - s * lateral, s * longitudinal + c * lateral])


def sample_labels(sample: SequenceSample, codec: LabelCodec, frame: FeatureFrame) -> Tuple[np.ndarray, np.ndarray]:
    """(t_obs + n) lateral and longitudinal labels of one sample."""
    if frame is FeatureFrame.NAVIGATION:
        dx = np.diff(sample.target_f)
        dy = np.diff(sample.target_km) * KM_TO_M
    else:
        vx, vy = sample.target_v[sample.anchor]
        dx, dy = heading_dislocations(np.asarray(sample.target_xy), float(np.arctan2(vy, vx)))
    return codec.encode_array(dx, dy)


@dataclass
class TrajectoryDataset:
    """
    Model-ready arrays for a list of samples.

    Labels are (N, t_obs) observed and (N, n) future index arrays per axis.
    Social arrays are present only when built with social context.
    """

    samples: List[SequenceSample]
    codec: LabelCodec
    frame: FeatureFrame
    obs_x: np.ndarray
    obs_y: np.ndarray
    fut_x: np.ndarray
    fut_y: np.ndarray
    context: np.ndarray
    grid: Optional[GridSpec] = None
    social_values: Optional[np.ndarray] = None
    social_mask: Optional[np.ndarray] = None
    headings: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[SequenceSample],
        codec: LabelCodec,
        frame: FeatureFrame = FeatureFrame.NAVIGATION,
        grid: Optional[GridSpec] = None,
    ) -> "TrajectoryDataset":
        """
        Encode samples into labels, context features and (optionally) social tensors.

        Args:
            samples: Samples sharing one window layout
            codec: Label codec
            frame: Dislocation frame for the labels
            grid: Build social tensors on this grid when given
        """
        samples = list(samples)
        if not samples:
            raise ValueError("cannot build a dataset from zero samples")
        t_obs, n = samples[0].t_obs, samples[0].n
        if any(s.t_obs != t_obs or s.n != n for s in samples):
            raise ValueError("samples mix different window layouts")

        xs, ys, headings = [], [], []
        for s in samples:
            ix, iy = sample_labels(s, codec, frame)
            xs.append(ix)
            ys.append(iy)
            vx, vy = s.target_v[s.anchor]
            headings.append(np.arctan2(vy, vx))
        x = np.stack(xs)
        y = np.stack(ys)
        context = np.stack([NavigationContext(tuple(s.context)).scaled() for s in samples])

        values = mask = None
        if grid is not None:
            tensors = [build(s, grid) for s in samples]
            values = np.stack([t.values for t in tensors])
            mask = np.stack([t.mask for t in tensors])

        return cls(
            samples=samples,
            codec=codec,
            frame=frame,
            obs_x=x[:, :t_obs],
            obs_y=y[:, :t_obs],
            fut_x=x[:, t_obs:],
            fut_y=y[:, t_obs:],
            context=context,
            grid=grid,
            social_values=values,
            social_mask=mask,
            headings=np.asarray(headings, dtype=np.float64),
        )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def t_obs(self) -> int:
        return self.obs_x.shape[1]

    @property
    def n(self) -> int:
        return self.fut_x.shape[1]

    @property
    def has_social(self) -> bool:
        return self.social_values is not None

    @property
    def groups(self) -> List[str]:
        return [s.target_id for s in self.samples]

    def subset(self, indices: Sequence[int]) -> "TrajectoryDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return TrajectoryDataset(
            samples=[self.samples[i] for i in idx],
            codec=self.codec,
            frame=self.frame,
            obs_x=self.obs_x[idx],
            obs_y=self.obs_y[idx],
            fut_x=self.fut_x[idx],
            fut_y=self.fut_y[idx],
            context=self.context[idx],
            grid=self.grid,
            social_values=None if self.social_values is None else self.social_values[idx],
            social_mask=None if self.social_mask is None else self.social_mask[idx],
            headings=self.headings[idx],
        )

    def batches(self, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterator[np.ndarray]:
        """Index batches; shuffled when an rng is given."""
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for start in range(0, len(order), batch_size):
            yield order[start:start + batch_size]

    def anchor_state(self, i: int) -> NavFrameState:
        s = self.samples[i]
        return NavFrameState(km=s.target_km[s.anchor], f=s.target_f[s.anchor])

    def future_xy(self, i: int) -> np.ndarray:
        """Ground-truth Cartesian positions of the n future steps."""
        s = self.samples[i]
        return np.asarray(s.target_xy[s.anchor + 1:], dtype=np.float64)

    def anchor_xy(self, i: int) -> np.ndarray:
        s = self.samples[i]
        return np.asarray(s.target_xy[s.anchor], dtype=np.float64)

    def encounter_flags(self) -> np.ndarray:
        return np.array([s.has_encounter for s in self.samples], dtype=bool)


def trip_split_indices(groups: Sequence[str], test_size: float = 0.2, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sorted train and test indices with every target trip on one side.

    Raises:
        ValueError: With fewer than two target trips
    """
    groups = np.asarray(groups)
    if len(set(groups.tolist())) < 2:
        raise ValueError("need at least two target trips to split")
    splitter = GroupShuffleSplit(n_splits=1, test_size=test_size, random_state=seed)
    train_idx, test_idx = next(splitter.split(np.zeros(len(groups)), groups=groups))
    return np.sort(train_idx), np.sort(test_idx)


def split_by_trip(
    dataset: TrajectoryDataset,
    test_size: float = 0.2,
    seed: int = 0,
) -> Tuple[TrajectoryDataset, TrajectoryDataset]:
    """Train/test split that keeps every target trip on one side."""
    train_idx, test_idx = trip_split_indices(dataset.groups, test_size, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)
