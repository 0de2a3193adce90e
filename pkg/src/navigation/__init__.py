"""Navigation-area frame: fairway geometry, dislocation labels, lookahead context."""

from src.navigation.geometry import FairwayGeometry, NavFrameState, from_nav_frame, to_nav_frame
from src.navigation.codec import (
    Dislocation,
    DislocationLabel,
    LabelCodec,
    decode,
    dislocation,
    encode,
    reconstruct,
)
from src.navigation.context import NavigationContext, lookahead_context

__all__ = [
    "FairwayGeometry",
    "NavFrameState",
    "to_nav_frame",
    "from_nav_frame",
    "Dislocation",
    "DislocationLabel",
    "LabelCodec",
    "dislocation",
    "encode",
    "decode",
    "reconstruct",
    "NavigationContext",
    "lookahead_context",
]
