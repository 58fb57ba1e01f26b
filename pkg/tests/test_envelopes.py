import numpy as np
import pytest
from scipy.optimize import brentq

from conftest import random_c11
from vvlim import _hull_py
from vvlim.envelopes import (
    SampledFunction,
    concave_envelope,
    convex_envelope,
    monotone_concave_envelope,
    monotone_convex_envelope,
    upper_hull_indices,
)
from vvlim.errors import InvalidInputError


def chord_min_oracle(values):
    """Independent concave-hull oracle by LP duality.

    The upper concave envelope is the pointwise minimum over all lines
    through two sample points that dominate every sample.  Cubic cost,
    used only at modest sizes.
    """
    m = len(values)
    idx = np.arange(m, dtype=float)
    env = np.full(m, np.inf)
    tol = 1e-12 * max(1.0, np.abs(values).max())
    for a in range(m - 1):
        for b in range(a + 1, m):
            slope = (values[b] - values[a]) / (b - a)
            line = values[a] + slope * (idx - a)
            if np.all(line >= values - tol):
                np.minimum(env, line, out=env)
    return env


def sampled(fun, dfun, s, m, lip):
    tau = np.linspace(0.0, s, m)
    return SampledFunction(s=s, values=fun(tau), deriv=dfun(tau), lip_k=lip)


class TestConcave:
    def test_already_concave(self):
        f = sampled(lambda t: -t**2, lambda t: -2 * t, 1.0, 513, 2.0)
        res = concave_envelope(f)
        assert np.allclose(res.env.values, f.values, atol=1e-14)
        assert res.contact.all()
        assert res.gaps == []

    def test_convex_gives_chord(self):
        f = sampled(lambda t: t**2, lambda t: 2 * t, 1.0, 513, 2.0)
        res = concave_envelope(f)
        tau = f.grid
        assert np.allclose(res.env.values, tau, atol=1e-14)
        assert len(res.gaps) == 1
        a, b = res.gaps[0]
        assert a == 0.0 and b == 1.0

    def test_sine_against_analytic_tangent(self):
        # conc of sin(2 pi t) on [0,1]: follows f up to the tangency point
        # t*, then the tangent chord into the right endpoint (1, 0)
        f = sampled(lambda t: np.sin(2 * np.pi * t),
                    lambda t: 2 * np.pi * np.cos(2 * np.pi * t),
                    1.0, 513, (2 * np.pi) ** 2)
        res = concave_envelope(f)

        def tangency(t):
            return 2 * np.pi * np.cos(2 * np.pi * t) * (1 - t) + np.sin(2 * np.pi * t)

        t_star = brentq(tangency, 0.26, 0.49)
        slope = -np.sin(2 * np.pi * t_star) / (1 - t_star)
        tau = f.grid
        exact = np.where(tau <= t_star, np.sin(2 * np.pi * tau),
                         slope * (tau - 1.0))
        assert np.abs(res.env.values - exact).max() <= f.grid_atol

    def test_sine_against_chord_min_oracle(self):
        f = sampled(lambda t: np.sin(2 * np.pi * t),
                    lambda t: 2 * np.pi * np.cos(2 * np.pi * t),
                    1.0, 257, (2 * np.pi) ** 2)
        res = concave_envelope(f)
        oracle = chord_min_oracle(f.values)
        assert np.abs(res.env.values - oracle).max() <= 1e-12

    def test_random_against_chord_min_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            f = random_c11(rng, m=129)
            res = concave_envelope(f)
            oracle = chord_min_oracle(f.values)
            assert np.abs(res.env.values - oracle).max() <= 1e-12

    def test_rejects_bad_input(self):
        with pytest.raises(InvalidInputError):
            SampledFunction(s=1.0, values=np.array([0.0]),
                            deriv=np.array([0.0]), lip_k=1.0)
        with pytest.raises(InvalidInputError):
            SampledFunction(s=1.0, values=np.array([0.0, np.nan]),
                            deriv=np.zeros(2), lip_k=1.0)


class TestConvex:
    def test_already_convex(self):
        f = sampled(lambda t: t**2, lambda t: 2 * t, 1.0, 513, 2.0)
        res = convex_envelope(f)
        assert np.allclose(res.env.values, f.values, atol=1e-14)

    def test_concave_gives_chord(self):
        f = sampled(lambda t: -t**2, lambda t: -2 * t, 1.0, 513, 2.0)
        res = convex_envelope(f)
        assert np.allclose(res.env.values, -f.grid, atol=1e-14)

    def test_mirror_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            f = random_c11(rng, m=257)
            neg = SampledFunction(s=f.s, values=-f.values, deriv=-f.deriv,
                                  lip_k=f.lip_k)
            conv = convex_envelope(f)
            conc = concave_envelope(neg)
            assert np.array_equal(conv.env.values, -conc.env.values)


class TestMonotoneConcave:
    def test_parabola_cut_at_half(self):
        f = sampled(lambda t: t * (1 - t), lambda t: 1 - 2 * t, 1.0, 513, 2.0)
        res = monotone_concave_envelope(f)
        assert abs(res.tau0 - 0.5) <= f.h
        tau = f.grid
        exact = np.where(tau <= 0.5, tau * (1 - tau), 0.25)
        assert np.abs(res.env.values - exact).max() <= f.grid_atol
        assert np.all(np.diff(res.env.values) >= -1e-14)

    def test_nondecreasing_concave_is_fixed(self):
        f = sampled(np.sqrt, lambda t: 0.5 / np.sqrt(np.maximum(t, 1e-12)),
                    1.0, 513, 50.0)
        # avoid the sqrt singularity at 0 by shifting
        f = sampled(lambda t: np.sqrt(t + 0.5), lambda t: 0.5 / np.sqrt(t + 0.5),
                    1.0, 513, 2.0)
        res = monotone_concave_envelope(f)
        assert np.abs(res.env.values - f.values).max() <= f.grid_atol
        assert res.tau0 == f.s

    def test_decreasing_gives_constant(self):
        f = sampled(lambda t: -t, lambda t: -np.ones_like(t), 1.0, 513, 0.1)
        res = monotone_concave_envelope(f)
        assert res.tau0 == 0.0
        assert np.allclose(res.env.values, 0.0, atol=1e-14)
        assert np.allclose(res.env.deriv, 0.0)


class TestMonotoneConvex:
    def test_convex_increasing_fixed(self):
        f = sampled(lambda t: t**2, lambda t: 2 * t, 1.0, 513, 2.0)
        res = monotone_convex_envelope(f)
        assert np.abs(res.env.values - f.values).max() <= f.grid_atol

    def test_parabola_constant_then_rise(self):
        f = sampled(lambda t: t * (t - 1), lambda t: 2 * t - 1, 1.0, 513, 2.0)
        res = monotone_convex_envelope(f)
        tau = f.grid
        exact = np.where(tau <= 0.5, -0.25, tau * (tau - 1))
        assert np.abs(res.env.values - exact).max() <= f.grid_atol
        assert np.all(np.diff(res.env.values) >= -1e-14)
        # dense brute force on the constant-then-follow structure
        fine = sampled(lambda t: t * (t - 1), lambda t: 2 * t - 1, 1.0,
                       5121, 2.0)
        res_f = monotone_convex_envelope(fine)
        interp = np.interp(tau, fine.grid, res_f.env.values)
        assert np.abs(res.env.values - interp).max() <= 4 * f.grid_atol

    def test_constant_fixed(self):
        f = sampled(lambda t: np.full_like(t, 0.7),
                    lambda t: np.zeros_like(t), 1.0, 129, 0.1)
        res = monotone_convex_envelope(f)
        assert np.array_equal(res.env.values, f.values)


class TestInvariants:
    def test_endpoint_interpolation_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            f = random_c11(rng, m=257)
            res = concave_envelope(f)
            assert res.env.values[0] == f.values[0]
            assert res.env.values[-1] == f.values[-1]

    def test_contact_derivative_matching(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            f = random_c11(rng, m=513)
            res = concave_envelope(f)
            c = res.contact
            interior = c[1:-1] & c[:-2] & c[2:]
            dev = np.abs(res.env.deriv[1:-1] - f.deriv[1:-1])[interior]
            if dev.size:
                assert dev.max() <= 2 * f.lip_k * f.h

    def test_gap_affinity(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            f = random_c11(rng, m=513)
            res = concave_envelope(f)
            scale = max(1.0, np.abs(res.env.values).max())
            for a, b in res.gaps:
                ja = int(round(a / f.h))
                jb = int(round(b / f.h))
                if jb - ja < 3:
                    continue
                seg = res.env.values[ja:jb + 1]
                second = np.abs(np.diff(seg, 2)).max()
                assert second <= 1e-12 * scale

    def test_non_expansiveness(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            f = random_c11(rng, m=513)
            g = random_c11(rng, m=513)
            rf, rg = concave_envelope(f), concave_envelope(g)
            slack = max(f.lip_k, g.lip_k) * f.h ** 2
            dv = np.abs(rf.env.values - rg.env.values).max()
            assert dv <= np.abs(f.values - g.values).max() + slack
            ds = np.abs(rf.env.deriv - rg.env.deriv).max()
            assert ds <= np.abs(f.deriv - g.deriv).max() + slack

    def test_interval_stability_frozen_constant(self):
        # sup_{[0,s1]} |conc_{[0,s1]} f - conc_{[0,s2]} f| <= C delta0 (s2-s1)
        # C fitted on this generator once and frozen at 4.0
        C_FROZEN = 4.0
        rng = np.random.default_rng(17)
        for _ in range(15):
            f2 = random_c11(rng, m=641, s=1.25, amp=0.3)
            delta0 = np.abs(f2.deriv).max()
            m1 = 513
            f1 = SampledFunction(s=f2.grid[m1 - 1], values=f2.values[:m1],
                                 deriv=f2.deriv[:m1], lip_k=f2.lip_k)
            r1 = concave_envelope(f1)
            r2 = concave_envelope(f2)
            gap = f2.s - f1.s
            dv = np.abs(r1.env.values - r2.env.values[:m1]).max()
            assert dv <= C_FROZEN * delta0 * gap + f2.grid_atol
            ds = np.abs(r1.env.deriv - r2.env.deriv[:m1]).max()
            assert ds <= C_FROZEN * f2.lip_k * gap + f2.lip_k * f2.h

    def test_derivative_lipschitz_preserved(self):
        rng = np.random.default_rng(19)
        for _ in range(15):
            f = random_c11(rng, m=513)
            res = concave_envelope(f)
            jumps = np.abs(np.diff(res.env.deriv))
            assert jumps.max() <= f.lip_k * f.h * (1 + 10 * f.h) + 1e-12

    def test_monotone_envelope_nondecreasing(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            f = random_c11(rng, m=513)
            res = monotone_concave_envelope(f)
            assert np.all(np.diff(res.env.values) >= -1e-12)
            assert np.all(res.env.deriv >= -1e-15)
            assert np.all(res.env.values >= f.values - f.grid_atol)


class TestHullKernels:
    def test_twins_agree(self):
        try:
            from vvlim import _hullcore
        except ImportError:
            pytest.skip("compiled kernel not built")
        rng = np.random.default_rng(29)
        for m in (2, 3, 5, 17, 129, 513):
            for _ in range(20):
                y = rng.standard_normal(m)
                a = _hullcore.upper_hull_indices(y)
                b = _hull_py.upper_hull_indices(y)
                assert np.array_equal(a, b)

    def test_twins_agree_on_ties(self):
        try:
            from vvlim import _hullcore
        except ImportError:
            pytest.skip("compiled kernel not built")
        cases = [
            np.zeros(7),
            np.array([0.0, 1.0, 2.0, 3.0]),
            np.array([0.0, 1.0, 1.0, 0.0]),
            np.repeat(np.array([1.0, -1.0]), 5),
        ]
        for y in cases:
            assert np.array_equal(_hullcore.upper_hull_indices(y),
                                  _hull_py.upper_hull_indices(y))

    def test_hull_indices_are_vertices(self):
        rng = np.random.default_rng(31)
        y = rng.standard_normal(201)
        idx = upper_hull_indices(y)
        assert idx[0] == 0 and idx[-1] == 200
        slopes = np.diff(y[idx]) / np.diff(idx)
        assert np.all(np.diff(slopes) < 1e-12)
