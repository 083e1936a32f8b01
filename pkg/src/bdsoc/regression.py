"""Least-squares conditional expectations on a sample of states."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import SpaceGrid


class RegressionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RegressionBasis:
    """``polynomial`` (total degree ``degree``) or ``cells`` (piecewise constant).

    Cells come from ``grid`` when given, otherwise from the sample range with
    ``cells_per_axis`` bins. A polynomial design whose condition number exceeds
    ``cond_max`` falls back to cells with a warning.
    """

    kind: str = "polynomial"
    degree: int = 2
    cells_per_axis: int = 64
    grid: Optional[SpaceGrid] = None
    cond_max: float = 1e10

    def __post_init__(self):
        if self.kind not in ("polynomial", "cells"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")

    def projector(self, x: np.ndarray) -> "Projector":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if self.kind == "polynomial":
            design = _poly_design(x, self.degree, self.cond_max)
            if design is not None:
                return Projector(design=design)
            warnings.warn("rank-deficient polynomial design; falling back to piecewise-constant basis",
                          RegressionWarning, stacklevel=3)
        return Projector(labels=_cell_labels(x, self.grid, self.cells_per_axis if x.shape[1] == 1 else 8))


def _poly_design(x, degree, cond_max=1e10):
    m, n = x.shape
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    live = scale > 1e-12 * (1.0 + np.abs(mean))
    # axes without spread carry no information; they drop out of the design
    xs = (x[:, live] - mean[live]) / scale[live]
    cols = [np.ones(m)]
    k = xs.shape[1]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(k), deg):
            cols.append(np.prod(xs[:, combo], axis=1))
    design = np.stack(cols, axis=1)
    if design.shape[1] > m:
        return None
    if design.shape[1] > 1:
        s = np.linalg.svd(design, compute_uv=False)
        if s[-1] <= 0 or s[0] / s[-1] > cond_max:
            return None
    return design


def _cell_labels(x, grid, bins):
    m, n = x.shape
    label = np.zeros(m, dtype=np.int64)
    for axis in range(n):
        if grid is not None:
            lo, hi, c = grid.lower[axis], grid.upper[axis], grid.counts[axis] - 1
        else:
            lo, hi, c = x[:, axis].min(), x[:, axis].max(), bins
        width = (hi - lo) / c if hi > lo else 1.0
        k = np.clip(np.floor((x[:, axis] - lo) / width), 0, c - 1).astype(np.int64)
        label = label * c + k
    return np.unique(label, return_inverse=True)[1]


class Projector:
    """Fitted conditional-expectation operator for one sample of states."""

    def __init__(self, design=None, labels=None):
        self.design = design
        self.labels = labels
        if labels is not None:
            self.counts = np.bincount(labels).astype(float)

    @property
    def kind(self) -> str:
        return "polynomial" if self.design is not None else "cells"

    def __call__(self, targets: np.ndarray) -> np.ndarray:
        """Fitted values at the sample points; ``targets`` is (M,) or (M, q)."""
        t = np.asarray(targets, dtype=float)
        flat = t.reshape(t.shape[0], -1)
        if self.design is not None:
            coef, *_ = np.linalg.lstsq(self.design, flat, rcond=None)
            fit = self.design @ coef
        else:
            sums = np.stack([np.bincount(self.labels, weights=col) for col in flat.T], axis=1)
            fit = (sums / self.counts[:, None])[self.labels]
        return fit.reshape(t.shape)
