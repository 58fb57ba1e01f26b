"""Concave/convex/monotone envelopes of sampled C^{1,1} functions.

A function is carried as values and derivative samples on a uniform grid
over [0, s] together with a Lipschitz certificate for the derivative.
Envelopes are computed as upper/lower hulls of the node set; the envelope
derivative is the hull-slope sequence, assigned per node by the segment
containing it and left-continuous at kinks.  Sampled hull and continuum
hull differ by O(lip_k * h^2) for C^{1,1} data, which is the tolerance
used by every comparison here.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

if os.environ.get("VVLIM_FORCE_PY_HULL"):
    from . import _hull_py as _hull
else:
    try:
        from . import _hullcore as _hull
    except ImportError:  # extension not built; fall back to the twin
        from . import _hull_py as _hull

upper_hull_indices = _hull.upper_hull_indices
HULL_KERNEL = _hull.KERNEL


@dataclass
class SampledFunction:
    """Scalar function on the uniform grid tau_j = j*s/(m-1) over [0, s]."""

    s: float
    values: np.ndarray
    deriv: np.ndarray
    lip_k: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.deriv = np.asarray(self.deriv, dtype=float)
        if self.s <= 0:
            raise InvalidInputError("interval length must be positive")
        if self.values.ndim != 1 or self.values.shape != self.deriv.shape:
            raise InvalidInputError("values and deriv must be 1-d and same length")
        if self.m < 2:
            raise InvalidInputError("need at least two samples")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.deriv))):
            raise InvalidInputError("NaN or inf in samples")

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def h(self):
        return self.s / (self.m - 1)

    @property
    def grid(self):
        return np.linspace(0.0, self.s, self.m)

    @property
    def grid_atol(self):
        """Comparison slack for sampled-vs-continuum envelope statements."""
        return self.lip_k * self.h ** 2 + 1e-14 * (1.0 + np.abs(self.values).max())

    def validate(self):
        """Check the class certificate against the samples.

        The derivative increments must respect lip_k and the values must be
        trapezoid-consistent with the derivative up to O(h^2) per step.
        """
        h = self.h
        dd = np.diff(self.deriv)
        if np.any(np.abs(dd) > self.lip_k * h + self.grid_atol):
            raise InvalidInputError("derivative samples violate the Lipschitz certificate")
        trap = np.cumsum((self.deriv[:-1] + self.deriv[1:]) * 0.5 * h)
        resid = np.abs(self.values[1:] - self.values[0] - trap)
        if np.any(resid > 0.5 * self.lip_k * h * self.s + self.grid_atol):
            raise InvalidInputError("values inconsistent with derivative (trapezoid test)")
        return True

    @classmethod
    def from_callable(cls, fun, dfun, s, m, lip_k):
        tau = np.linspace(0.0, s, m)
        return cls(s=s, values=fun(tau), deriv=dfun(tau), lip_k=lip_k)


@dataclass
class EnvelopeResult:
    env: SampledFunction
    contact: np.ndarray
    gaps: list = field(default_factory=list)
    tau0: float | None = None


def _hull_to_env(f, idx):
    """Envelope values/slopes on the full grid from hull vertex indices.

    Values interpolate the hull linearly; exact sample values are kept at
    the vertices.  Node slopes are left-continuous: node j carries the
    slope of the segment (idx[i], idx[i+1]] containing it; node 0 carries
    the first segment's slope.
    """
    y = f.values
    h = f.h
    nodes = np.arange(f.m)
    env = np.interp(nodes, idx, y[idx])
    env[idx] = y[idx]
    seg_slopes = (y[idx[1:]] - y[idx[:-1]]) / ((idx[1:] - idx[:-1]) * h)
    # segment of node j, counting a vertex as belonging to its incoming segment
    seg_of_node = np.searchsorted(idx[1:], nodes, side="left")
    seg_of_node = np.minimum(seg_of_node, len(seg_slopes) - 1)
    slopes = seg_slopes[seg_of_node]
    return env, slopes


def _contact_and_gaps(f, env_values):
    atol = f.grid_atol
    contact = np.abs(env_values - f.values) <= atol
    gaps = []
    tau = f.grid
    j = 0
    m = f.m
    while j < m:
        if not contact[j]:
            j0 = j
            while j < m and not contact[j]:
                j += 1
            a = tau[j0 - 1] if j0 > 0 else tau[0]
            b = tau[j] if j < m else tau[m - 1]
            gaps.append((a, b))
        else:
            j += 1
    return contact, gaps


def concave_envelope(f: SampledFunction) -> EnvelopeResult:
    """Upper concave hull of the node set.

    Endpoint values are matched exactly; on each gap the result is affine
    with the chord slope, and the slope sequence is non-increasing.
    """
    idx = upper_hull_indices(f.values)
    env_vals, slopes = _hull_to_env(f, idx)
    contact, gaps = _contact_and_gaps(f, env_vals)
    env = SampledFunction(s=f.s, values=env_vals, deriv=slopes, lip_k=f.lip_k)
    return EnvelopeResult(env=env, contact=contact, gaps=gaps)


def convex_envelope(f: SampledFunction) -> EnvelopeResult:
    """Lower convex hull; the mirror of concave_envelope under negation."""
    neg = SampledFunction(s=f.s, values=-f.values, deriv=-f.deriv, lip_k=f.lip_k)
    res = concave_envelope(neg)
    env = SampledFunction(
        s=f.s, values=-res.env.values, deriv=-res.env.deriv, lip_k=f.lip_k
    )
    return EnvelopeResult(env=env, contact=res.contact, gaps=res.gaps)


def monotone_concave_envelope(f: SampledFunction) -> EnvelopeResult:
    """Smallest concave *non-decreasing* majorant.

    Equals the concave envelope up to the cut point tau0 (the largest node
    whose incoming hull slope is >= 0; slope exactly 0 counts) and is
    constant afterwards.  All hull slopes negative gives tau0 = 0 and a
    constant envelope at the level f(0).
    """
    res = concave_envelope(f)
    conc_vals = res.env.values
    slopes = res.env.deriv
    # node 0 carries the outgoing slope; the cut uses incoming slopes only
    nonneg = slopes[1:] >= 0.0
    if not nonneg.any():
        j0 = 0
    else:
        j0 = int(np.nonzero(nonneg)[0][-1]) + 1
    tau0 = f.grid[j0]
    env_vals = conc_vals.copy()
    env_vals[j0:] = conc_vals[j0]
    env_slopes = slopes.copy()
    env_slopes[j0 + 1 :] = 0.0
    if j0 == 0:
        env_slopes[0] = 0.0
    contact, gaps = _contact_and_gaps(f, env_vals)
    env = SampledFunction(s=f.s, values=env_vals, deriv=env_slopes, lip_k=f.lip_k)
    return EnvelopeResult(env=env, contact=contact, gaps=gaps, tau0=tau0)


def monotone_convex_envelope(f: SampledFunction) -> EnvelopeResult:
    """Largest convex non-decreasing minorant.

    Mirror construction: constant at the level of the convex envelope's
    last non-positive-slope node, then the convex envelope itself.
    """
    res = convex_envelope(f)
    conv_vals = res.env.values
    slopes = res.env.deriv
    nonpos = slopes[1:] <= 0.0
    if not nonpos.any():
        j0 = 0
    else:
        j0 = int(np.nonzero(nonpos)[0][-1]) + 1
    tau0 = f.grid[j0]
    env_vals = conv_vals.copy()
    env_vals[:j0] = conv_vals[j0]
    env_slopes = slopes.copy()
    env_slopes[: j0 + 1] = 0.0
    contact, gaps = _contact_and_gaps(f, env_vals)
    env = SampledFunction(s=f.s, values=env_vals, deriv=env_slopes, lip_k=f.lip_k)
    return EnvelopeResult(env=env, contact=contact, gaps=gaps, tau0=tau0)
