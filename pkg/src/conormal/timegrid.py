"""Cell partitions of the half-line ``t = ln(1/r) > 0``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Cells ``[edges[j], edges[j+1]]`` covering ``[0, T_max]``.

    Sections that live on the grid are either cell averages (the unknowns
    of the integral equation) or point values at the cell midpoints.
    """

    edges: np.ndarray

    def __post_init__(self) -> None:
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 2:
            raise ValueError("need at least one cell")
        if e[0] != 0.0:
            raise ValueError("the first edge must be t = 0")
        if np.any(np.diff(e) <= 0):
            raise ValueError("edges must be strictly increasing")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @classmethod
    def geometric(
        cls,
        t_min: float = 1e-3,
        t_max: float = 30.0,
        q: float = 2.0 ** -0.25,
        split: float = 1.0,
        max_width: float = 0.5,
    ) -> "TimeGrid":
        """Geometric cells with ratio ``1/q`` from ``t_min`` to ``split``.

        Above ``split`` the cells keep growing geometrically until their
        width reaches ``max_width``.  ``split`` is always an edge so that
        discrepancies switched off at ``t = split`` are resolved exactly.
        """
        if not 0 < q < 1:
            raise ValueError("q must lie in (0, 1)")
        if not 0 < t_min < split < t_max:
            raise ValueError("need 0 < t_min < split < t_max")
        n_low = max(1, int(np.ceil(np.log(split / t_min) / np.log(1.0 / q))))
        low = np.geomspace(t_min, split, n_low + 1)
        edges = [0.0, *low]
        width = low[-1] - low[-2]
        t = split
        while t < t_max - 1e-12:
            width = min(width / q, max_width)
            t = min(t + width, t_max)
            if t_max - t < 0.25 * width:
                t = t_max
            edges.append(t)
        return cls(np.array(edges))

    @property
    def n(self) -> int:
        return self.edges.size - 1

    @property
    def left(self) -> np.ndarray:
        return self.edges[:-1]

    @property
    def right(self) -> np.ndarray:
        return self.edges[1:]

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def mids(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def t_max(self) -> float:
        return float(self.edges[-1])

    def dt_weights(self) -> np.ndarray:
        return self.widths

    def dt_over_t_weights(self) -> np.ndarray:
        """``int_cell dt/t``; the first cell uses ``width/midpoint``."""
        w = np.empty(self.n)
        w[0] = self.widths[0] / self.mids[0]
        w[1:] = np.log(self.right[1:] / self.left[1:])
        return w

    def locate(self, t: np.ndarray) -> np.ndarray:
        """Index of the cell containing each ``t`` (right edge belongs to the left cell)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.edges, t, side="left") - 1
        return np.clip(idx, 0, self.n - 1)

    def refined(self) -> "TimeGrid":
        """Split every cell in two (geometric split away from t = 0)."""
        e = self.edges
        mid = np.where(e[:-1] > 0, np.sqrt(np.maximum(e[:-1], 1e-300) * e[1:]), 0.5 * e[1:])
        out = np.empty(2 * self.n + 1)
        out[0::2] = e
        out[1::2] = mid
        return TimeGrid(out)
