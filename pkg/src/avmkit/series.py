"""Tagged (t, gamma) observation sequences produced by all three layers."""

import numpy as np

SOURCES = ("abm", "ode", "analytic")


class TimeSeries:
    """Ordered samples of the active-link observable gamma.

    t must be strictly increasing and gamma nonnegative; source is one of
    "abm", "ode", "analytic"; meta carries run parameters (p, kappa, seed or
    replicate, mode, ...) for provenance.
    """

    def __init__(self, t, gamma, source, meta=None):
        t = np.asarray(t, dtype=float)
        gamma = np.asarray(gamma, dtype=float)
        if t.shape != gamma.shape or t.ndim != 1:
            raise ValueError("t and gamma must be 1-d arrays of equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("sample times must be strictly increasing")
        if gamma.size and gamma.min() < 0:
            raise ValueError("gamma samples must be nonnegative")
        if source not in SOURCES:
            raise ValueError(f"unknown source {source!r}")
        self.t = t
        self.gamma = gamma
        self.source = source
        self.meta = dict(meta or {})

    def __len__(self):
        return self.t.size

    def final_gamma(self):
        return float(self.gamma[-1]) if self.gamma.size else 0.0

    def __repr__(self):
        return (f"TimeSeries({self.source}, {len(self)} samples, "
                f"t up to {self.t[-1] if len(self) else 0:g})")


def ensemble_mean(series_list):
    """Pointwise mean gamma of series sharing one time grid."""
    if not series_list:
        raise ValueError("empty ensemble")
    t0 = series_list[0].t
    for s in series_list[1:]:
        if s.t.shape != t0.shape or not np.allclose(s.t, t0):
            raise ValueError("ensemble members must share the sample grid")
    stacked = np.stack([s.gamma for s in series_list])
    return TimeSeries(t0, stacked.mean(axis=0), series_list[0].source,
                      meta={**series_list[0].meta, "replicates": len(series_list)})
