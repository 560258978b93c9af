"""Uniform trait and age grids."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TraitGrid:
    """Tensor grid over a trait box in dimension 1 or 2.

    Periodic grids omit the right end point, so the period equals the box
    length.
    """

    lo: tuple
    hi: tuple
    counts: tuple
    periodic: bool = False
    axes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        axes = []
        for a, b, m in zip(self.lo, self.hi, self.counts):
            if m == 1:
                axes.append(np.array([0.5 * (a + b)]))
            elif self.periodic:
                axes.append(a + (b - a) * np.arange(m) / m)
            else:
                axes.append(np.linspace(a, b, m))
        object.__setattr__(self, "axes", tuple(axes))

    @classmethod
    def from_spacing(cls, lo, hi, dy, periodic=False):
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        dy = np.broadcast_to(np.atleast_1d(dy), (len(lo),))
        counts = []
        for a, b, d in zip(lo, hi, dy):
            m = max(int(round((b - a) / d)), 1)
            counts.append(m if periodic else m + 1)
        return cls(lo, hi, tuple(counts), periodic)

    @classmethod
    def single(cls, y):
        y = tuple(float(v) for v in np.atleast_1d(y))
        return cls(y, y, (1,) * len(y))

    @property
    def n(self):
        return len(self.counts)

    @property
    def shape(self):
        return tuple(self.counts)

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def spacing(self):
        out = []
        for a, b, m in zip(self.lo, self.hi, self.counts):
            if m == 1:
                out.append(1.0)
            else:
                out.append((b - a) / (m if self.periodic else m - 1))
        return tuple(out)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def points(self):
        """Node coordinates, shape ``(size, n)``, C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def mesh(self):
        """Node coordinates, shape ``shape + (n,)``."""
        return self.points().reshape(self.shape + (self.n,))

    def nearest_index(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        idx = []
        for ax, v, h in zip(self.axes, y, self.spacing):
            i = int(np.clip(round((v - ax[0]) / h), 0, len(ax) - 1)) if len(ax) > 1 else 0
            idx.append(i)
        return tuple(idx)

    def window_mask(self, lo, hi):
        """Boolean mask of nodes inside the box [lo, hi] (per axis)."""
        lo = np.broadcast_to(np.atleast_1d(lo), (self.n,))
        hi = np.broadcast_to(np.atleast_1d(hi), (self.n,))
        m = self.mesh()
        return np.all((m >= lo - 1e-12) & (m <= hi + 1e-12), axis=-1)


def age_grid(x_bar, dx, x_max):
    """Uniform age grid with ``x_bar`` on a node when it is finite."""
    if np.isfinite(x_bar) and x_bar > 0:
        nb = max(int(round(x_bar / dx)), 1)
        h = x_bar / nb
    else:
        h = dx
    n = int(np.ceil(x_max / h - 1e-9))
    return h * np.arange(n + 1)
