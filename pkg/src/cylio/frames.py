"""Point-cloud frame data model shared by the simulator, preprocessing and
the filter."""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class SemanticClass(IntEnum):
    GROUND = 0
    BUILDING = 1
    POLE_LIKE = 2
    TREE_LEAVES = 3
    DYNAMIC_OBJECT = 4
    UNKNOWN = 5


#: classes whose returns corrupt geometric constraints and are filtered out
UNSTRUCTURED_CLASSES = (SemanticClass.TREE_LEAVES, SemanticClass.DYNAMIC_OBJECT)


@dataclass(eq=False)
class LabeledFrame:
    """Timestamped point cloud with per-point class labels.

    Raw frames carry sensor-frame points with acquisition time offsets in
    [0, period); after merging/compensation the points sit in the body
    frame of the final epoch and all offsets are zero. truth_ids name the
    scene primitive each ray actually hit (-1 when unknown); truth_points,
    when present, are the exact noise-free world hit coordinates.
    """

    t_start: float
    period: float
    points: np.ndarray  # (N, 3)
    t_offsets: np.ndarray  # (N,)
    labels: np.ndarray  # (N,) SemanticClass integer values
    truth_ids: np.ndarray  # (N,)
    truth_points: np.ndarray | None = None  # (N, 3) world frame

    def __post_init__(self):
        n = len(self.points)
        assert self.t_offsets.shape == (n,) and self.labels.shape == (n,) and self.truth_ids.shape == (n,)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def point_times(self) -> np.ndarray:
        return self.t_start + self.t_offsets

    def select(self, mask: np.ndarray) -> "LabeledFrame":
        """Subset preserving order."""
        return LabeledFrame(
            t_start=self.t_start,
            period=self.period,
            points=self.points[mask],
            t_offsets=self.t_offsets[mask],
            labels=self.labels[mask],
            truth_ids=self.truth_ids[mask],
            truth_points=None if self.truth_points is None else self.truth_points[mask],
        )
