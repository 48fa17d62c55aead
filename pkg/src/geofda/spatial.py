"""Planar locations, pairwise distances and distance-class binning."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import ValidationError


class DuplicateLocationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LocationSet:
    """Points in the plane (km). Duplicates are allowed but flagged."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        if pts.shape[0] < 1:
            raise ValidationError("a location set needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("location coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.duplicate_pairs():
            warnings.warn("location set contains duplicate points", DuplicateLocationWarning, stacklevel=3)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def duplicate_pairs(self) -> list[tuple[int, int]]:
        _, inverse, counts = np.unique(self.points, axis=0, return_inverse=True, return_counts=True)
        out = []
        for g in np.flatnonzero(counts > 1):
            idx = np.flatnonzero(inverse.ravel() == g)
            out.extend((int(i), int(j)) for a, i in enumerate(idx) for j in idx[a + 1:])
        return out

    @classmethod
    def grid(cls, nx: int, ny: int, spacing: float = 1.0, origin=(0.0, 0.0)) -> "LocationSet":
        xs = origin[0] + spacing * np.arange(nx)
        ys = origin[1] + spacing * np.arange(ny)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        return cls(np.column_stack([X.ravel(), Y.ravel()]))


def pairwise_distances(locs: LocationSet) -> np.ndarray:
    """Symmetric Euclidean distance matrix with a zero diagonal."""
    if locs.n == 1:
        return np.zeros((1, 1))
    return squareform(pdist(locs.points))


@dataclass(frozen=True)
class DistanceBins:
    """Equal-width half-open distance classes ``(edges[j], edges[j+1]]``.

    ``pairs[j]`` is a ``(p, 2)`` integer array of index pairs ``i < j``.
    """

    edges: np.ndarray
    centers: np.ndarray
    pairs: tuple
    counts: np.ndarray
    n_excluded: int
    mean_distance: np.ndarray = None

    @property
    def m(self) -> int:
        return self.centers.size

    def pair_bin_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened ``(i, j, bin)`` arrays over all retained pairs."""
        if not any(len(p) for p in self.pairs):
            empty = np.zeros(0, dtype=int)
            return empty, empty, empty
        i = np.concatenate([p[:, 0] for p in self.pairs])
        j = np.concatenate([p[:, 1] for p in self.pairs])
        b = np.repeat(np.arange(self.m), self.counts)
        return i, j, b


def bin_pairs(dist: np.ndarray, m: int = 15, max_fraction: float = 0.5) -> DistanceBins:
    """Group location pairs into ``m`` equal-width distance classes.

    Classes cover ``(0, max_fraction * max distance]``; zero-distance pairs and
    pairs beyond the cutoff are excluded from every class.
    """
    dist = np.asarray(dist, dtype=float)
    if m < 1:
        raise ValidationError("number of bins must be >= 1")
    if not 0 < max_fraction <= 1:
        raise ValidationError("max_fraction must lie in (0, 1]")
    n = dist.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    d = dist[iu, ju]
    if d.size == 0 or d.max() <= 0:
        raise ValidationError("all pairwise distances are zero")
    cutoff = max_fraction * d.max()
    edges = np.linspace(0.0, cutoff, m + 1)
    edges[-1] = cutoff
    which = np.searchsorted(edges, d, side="left") - 1
    keep = (d > 0) & (d <= cutoff) & (which >= 0) & (which < m)
    order = np.argsort(which[keep], kind="stable")
    ik, jk, bk = iu[keep][order], ju[keep][order], which[keep][order]
    counts = np.bincount(bk, minlength=m)
    splits = np.cumsum(counts)[:-1]
    pairs = tuple(np.column_stack(p) for p in zip(np.split(ik, splits), np.split(jk, splits)))
    centers = 0.5 * (edges[:-1] + edges[1:])
    sums = np.bincount(bk, weights=d[keep][order], minlength=m)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_distance = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return DistanceBins(
        edges=edges,
        centers=centers,
        pairs=pairs,
        counts=counts,
        n_excluded=int(d.size - keep.sum()),
        mean_distance=mean_distance,
    )
