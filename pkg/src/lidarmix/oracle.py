"""Detector-oracle contract and the desk-scale reference implementation.

The reference detector clusters points by connected components on a 2D
occupancy grid and fits axis-aligned boxes; it has no trainable state, so
"training" passes in the pipeline reduce to loss evaluation. Real
detectors plug in through the same contract.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

from .adversarial import GradientField, surrogate_loss
from .geometry import Box3D, Scene


class DetectorOracle(Protocol):
    """Prediction plus loss/gradient evaluation over scenes. Read-only by
    construction, so a frozen teacher cannot drift during stage 2."""

    def predict(self, scene: Scene) -> list[Box3D]: ...

    def loss_and_gradient(
        self, scene: Scene, boxes: Sequence[Box3D]
    ) -> tuple[float, GradientField]: ...


@dataclass(frozen=True)
class GridClusterOracle:
    """Connected-component clustering detector.

    Points are binned into cell_size cells in the xy-plane; 8-connected
    components with at least min_points members become axis-aligned boxes
    with score = min(1, points / score_saturation).
    """

    cell_size: float = 1.0
    min_points: int = 5
    score_saturation: int = 50
    smooth_l1_knee: float = 1.0
    min_box_size: float = 0.1
    max_grid_cells: int = 16_000_000

    def predict(self, scene: Scene) -> list[Box3D]:
        if scene.n_points == 0:
            return []
        ij = np.floor(scene.xyz[:, :2] / self.cell_size).astype(np.int64)
        lo = ij.min(axis=0)
        ij -= lo
        shape = ij.max(axis=0) + 1
        if int(shape[0]) * int(shape[1]) > self.max_grid_cells:
            raise ValueError(f"scene extent too large for clustering grid ({shape})")
        grid = np.zeros(shape, dtype=bool)
        grid[ij[:, 0], ij[:, 1]] = True
        labels, n_labels = ndimage.label(grid, structure=np.ones((3, 3), dtype=bool))
        point_labels = labels[ij[:, 0], ij[:, 1]]
        boxes = []
        for label in range(1, n_labels + 1):
            member = point_labels == label
            count = int(member.sum())
            if count < self.min_points:
                continue
            pts = scene.xyz[member]
            mn, mx = pts.min(axis=0), pts.max(axis=0)
            sizes = np.maximum(mx - mn, self.min_box_size)
            center = (mn + mx) / 2.0
            boxes.append(
                Box3D(
                    *center,
                    w=float(sizes[1]),
                    l=float(sizes[0]),
                    h=float(sizes[2]),
                    yaw=0.0,
                    class_id=0,
                    score=min(1.0, count / self.score_saturation),
                )
            )
        return boxes

    def loss_and_gradient(
        self, scene: Scene, boxes: Sequence[Box3D]
    ) -> tuple[float, GradientField]:
        return surrogate_loss(scene, boxes, knee=self.smooth_l1_knee)

    def clone(self) -> "GridClusterOracle":
        return dataclasses.replace(self)
