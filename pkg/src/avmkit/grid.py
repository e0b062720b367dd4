"""Truncated degree-pair grids for A-opinion nodes and their closure ratios.

The central state shared by the measurement and ODE layers is a square
grid over (k, l), where k counts a node's inert links (neighbor holds the
same opinion) and l its active links (neighbor disagrees). Entry (k, l) is
the normalized density of A-opinion nodes with that neighborhood.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClosureFactors:
    """Moment-closure ratios (alpha, beta, gamma).

    alpha: mean number of further active links of a node reached along an
           active link, E[l(l-1)]/E[l].
    beta:  mean number of active links of a node reached along an inert
           link, E[l k]/E[k].
    gamma: mean active degree, E[l].
    Degenerate denominators map to 0.
    """

    alpha: float
    beta: float
    gamma: float

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma)


class NeighborhoodGrid:
    """Density of A-opinion nodes by (inert degree k, active degree l).

    values[k, l] >= 0, truncated at k_max in both indices. tail_mass
    records whatever mass the producer could not place inside the window
    (histogram overflow or truncated initial tail); it is reported, never
    silently dropped.
    """

    def __init__(self, values, tail_mass=0.0, counts=None, n_source=None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("grid values must be a square 2-d array")
        self.values = values
        self.k_max = values.shape[0] - 1
        self.tail_mass = float(tail_mass)
        # integer provenance, present when built from a graph measurement
        self.counts = counts
        self.n_source = n_source

    def copy(self):
        return NeighborhoodGrid(self.values.copy(), self.tail_mass,
                                self.counts, self.n_source)

    def total_mass(self):
        return float(self.values.sum())

    def __repr__(self):
        return (f"NeighborhoodGrid(k_max={self.k_max}, "
                f"mass={self.total_mass():.6g}, tail={self.tail_mass:.3g})")


def mean_active_degree(grid):
    """Mean active degree gamma = sum(l * A) / sum(A); 0 on an empty grid."""
    values = grid.values if isinstance(grid, NeighborhoodGrid) else np.asarray(grid)
    total = values.sum()
    if total <= 0.0:
        return 0.0
    l = np.arange(values.shape[1])
    return float((values * l[None, :]).sum() / total)


def closure_factors(grid):
    """Closure ratios (alpha, beta, gamma) of a degree-pair grid.

    alpha = sum((l-1) l A) / sum(l A)
    beta  = sum(l k A) / sum(k A)
    gamma = sum(l A) / sum(A)
    with the convention that a zero denominator yields a zero ratio.
    """
    values = grid.values if isinstance(grid, NeighborhoodGrid) else np.asarray(grid)
    k = np.arange(values.shape[0], dtype=float)[:, None]
    l = np.arange(values.shape[1], dtype=float)[None, :]
    mass = values.sum()
    sum_l = (l * values).sum()
    sum_k = (k * values).sum()
    sum_ll = ((l - 1.0) * l * values).sum()
    sum_lk = (l * k * values).sum()
    alpha = sum_ll / sum_l if sum_l > 0.0 else 0.0
    beta = sum_lk / sum_k if sum_k > 0.0 else 0.0
    gamma = sum_l / mass if mass > 0.0 else 0.0
    return ClosureFactors(float(alpha), float(beta), float(gamma))
