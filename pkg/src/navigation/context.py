"""Lookahead description of the fairway ahead of a vessel."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.navigation.geometry import FairwayGeometry, NavFrameState

# network input scaling for width (m) and curvature (1/m)
WIDTH_SCALE = 0.01
CURVATURE_SCALE = 1000.0


@dataclass(frozen=True)
class NavigationContext:
    """Width (m) and curvature (1/m) pairs at evenly spaced points ahead, flattened."""
    features: Tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.features, dtype=np.float64)

    def scaled(self) -> np.ndarray:
        """Features scaled to order one for the context embedding."""
        values = self.as_array().reshape(-1, 2)
        return (values * np.array([WIDTH_SCALE, CURVATURE_SCALE])).reshape(-1)


def lookahead_context(
    g: FairwayGeometry,
    state: NavFrameState,
    spacing: float = 200.0,
    count: int = 5,
    upstream: bool = True,
) -> NavigationContext:
    """
    Sample fairway width and curvature at the midpoints of `count` lookahead
    segments of `spacing` meters ahead of `state`.

    Points beyond the geometry's ends are clamped to the ends.
    """
    sign = 1.0 if upstream else -1.0
    s0 = float(g.s_of(state.km))
    features = []
    for i in range(count):
        s = min(max(s0 + sign * (i + 0.5) * spacing, 0.0), g.length)
        km = float(g.km_of(s))
        features.extend([g.width_at(km), sign * g.curvature_at(km)])
    return NavigationContext(features=tuple(features))
