import numpy as np
import pytest
from scipy.integrate import solve_ivp

from vvlim.errors import InvalidInputError
from vvlim.spectral import eig_pencil
from vvlim.wave_curves import (
    Rarefaction,
    Shock,
    admissible_curve,
    char_admissible_curve,
    make_closure,
    sample_solution,
    solve_cauchy_riemann,
    wave_pattern,
)


def osher_scalar(flux, u_l, u_r, xi):
    """Osher's formula: the entropy solution of a scalar Riemann problem.

    u(xi) = argmin (u_l <= u_r) or argmax (u_l > u_r) of f(u) - xi u over
    the interval between the data.  Dense-grid evaluation; completely
    independent of any envelope construction.
    """
    lo, hi = min(u_l, u_r), max(u_l, u_r)
    grid = np.linspace(lo, hi, 4001)
    vals = flux(grid[None, :].repeat(1, 0))  # flux broadcasts on (1, m)
    vals = np.asarray(vals)[0] if np.asarray(vals).ndim > 1 else np.asarray(vals)
    obj = vals - np.multiply.outer(np.atleast_1d(xi), grid)
    pick = obj.argmin(axis=1) if u_l <= u_r else obj.argmax(axis=1)
    out = grid[pick]
    return out if np.ndim(xi) else float(out[0])


def scalar_flux(spec):
    return lambda u: spec.flux(np.atleast_2d(u))


class TestClosure:
    def test_burgers_scalar_identities(self, burgers):
        cl = make_closure(burgers, 1, [1.0])
        assert cl.cE == 1.0
        for u, sg in [(0.3, 0.0), (-1.2, 0.7), (2.0, -0.5)]:
            assert abs(cl.phi(np.array([u]), 0.0, sg) - (u - sg)) < 1e-12
            assert abs(cl.lambda_tilde(np.array([u]), 0.0, sg) - u) < 1e-12

    def test_p_system_base_point_slope(self, p_system):
        cl = make_closure(p_system, 1)
        lam1 = eig_pencil(p_system, p_system.u_base).values[0]
        assert abs(cl.phi(p_system.u_base, 0.0, lam1)) < 1e-12
        h = 1e-6
        dphi = (cl.phi(p_system.u_base, 0.0, lam1 + h)
                - cl.phi(p_system.u_base, 0.0, lam1 - h)) / (2 * h)
        qE = cl.cE
        assert dphi < 0
        # for B = E the sigma-slope is exactly -<r, E r>/<r, B r> = -1,
        # and lambda_tilde differs from lambda_i only through cE sigma
        assert abs(dphi + 1.0) < 1e-6
        assert qE > 0

    def test_identity_viscosity_exact_cancellation(self, char2x2):
        # B = E = I: lambda_tilde(u, 0, sigma) = lambda_i(u) for every sigma
        cl = make_closure(char2x2, 2)
        rng = np.random.default_rng(2)
        for _ in range(5):
            u = char2x2.u_base + 0.05 * rng.uniform(-1, 1, 2)
            lam = eig_pencil(char2x2, u).values[1]
            for sg in (-0.3, 0.0, 0.4):
                assert abs(cl.lambda_tilde(u, 0.0, sg) - lam) < 1e-12

    def test_bad_family_index(self, burgers):
        with pytest.raises(InvalidInputError):
            make_closure(burgers, 2)


class TestAdmissibleCurve:
    def test_burgers_shock(self, burgers):
        cl = make_closure(burgers, 1, [1.0])
        cur = admissible_curve(burgers, cl, [1.0], 0.5)
        assert abs(cur.endpoint[0] - 1.5) < 1e-9
        assert np.abs(cur.sigma - 1.25).max() < 1e-9
        assert np.all(cur.v <= 1e-12)

    def test_burgers_rarefaction(self, burgers):
        cl = make_closure(burgers, 1, [1.0])
        cur = admissible_curve(burgers, cl, [1.0], -0.5)
        assert abs(cur.endpoint[0] - 0.5) < 1e-9
        assert np.abs(cur.v).max() < 1e-12
        # speeds decrease along the traversal orientation
        assert cur.sigma[0] > cur.sigma[-1]
        assert abs(cur.sigma[0] - 1.0) < 2e-3 and abs(cur.sigma[-1] - 0.5) < 2e-3

    def test_amplitude_bound(self, burgers):
        cl = make_closure(burgers, 1, [0.0])
        with pytest.raises(InvalidInputError):
            admissible_curve(burgers, cl, [0.0], burgers.delta + 1.0)

    def test_sigma_monotone_on_random_scalar(self, cubic):
        cl = make_closure(cubic, 1, [0.0])
        rng = np.random.default_rng(3)
        for _ in range(5):
            s = rng.uniform(-1.5, 1.5)
            if abs(s) < 0.05:
                continue
            cur = admissible_curve(cubic, cl, [rng.uniform(-0.3, 0.3)], s)
            assert np.all(np.diff(cur.sigma) <= 1e-9)

    def test_curve_tangency(self, p_system):
        for fam in (1, 2):
            cl = make_closure(p_system, fam)
            r = cl.r_base
            errs = []
            for s in (0.04, 0.02, 0.01, -0.04, -0.02, -0.01):
                cur = admissible_curve(p_system, cl, p_system.u_base, s)
                errs.append(np.linalg.norm(
                    (cur.endpoint - p_system.u_base) / s - r))
            errs = np.array(errs)
            assert errs.max() < 0.2
            # error shrinks linearly with |s|
            assert errs[2] < errs[0] and errs[5] < errs[3]

    def test_speed_consistency_on_gaps(self, cubic):
        cl = make_closure(cubic, 1, [0.0])
        cur = admissible_curve(cubic, cl, [-0.6], 1.2)
        pieces = wave_pattern(cur)
        shocks = [p for p in pieces if isinstance(p, Shock)]
        assert shocks
        flux = scalar_flux(cubic)
        for sh in shocks:
            # Rankine-Hugoniot from the conservative flux, independent of
            # the envelope chord that produced the speed
            df = flux(np.array(sh.u_to))[0] - flux(np.array(sh.u_from))[0]
            du = sh.u_to[0] - sh.u_from[0]
            assert abs(df / du - sh.speed) < 5e-3


class TestLaxComparison:
    @staticmethod
    def lax_point(spec, family, s):
        """Classical Lax curve point at arclength |s|: integral curve on
        the rarefaction side, Rankine-Hugoniot continuation on the other."""
        u0 = spec.u_base
        cl = make_closure(spec, family, u0)
        r0 = cl.r_base

        if s <= 0:  # rarefaction side: integral curve of the unit field
            def rhs(t, u):
                ea = eig_pencil(spec, u)
                r = ea.vectors[:, family - 1]
                if r @ r0 < 0:
                    r = -r
                return -r

            sol = solve_ivp(rhs, (0.0, abs(s)), u0, rtol=1e-11, atol=1e-13)
            return sol.y[:, -1]

        # shock side: walk the Hugoniot locus by arclength
        gamma_ = spec.params["gamma"]

        def hugoniot_point(dv):
            v = u0[0] + dv
            dp = v ** (-gamma_) - u0[0] ** (-gamma_)
            sig2 = -dp / dv
            sig = np.sqrt(max(sig2, 0.0))
            sig = sig if family == 2 else -sig
            w = u0[1] - sig * dv
            return np.array([v, w])

        dv_dir = np.sign(r0[0])
        dvs = dv_dir * np.linspace(1e-9, 0.12, 4000)
        pts = np.array([hugoniot_point(dv) for dv in dvs])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        j = np.searchsorted(arc, s)
        t = (s - arc[j - 1]) / (arc[j] - arc[j - 1])
        return pts[j - 1] + t * (pts[j] - pts[j - 1])

    def test_curve_vs_lax_quadratic(self, p_system):
        # |T^i_s - Lax^i_s| <= C s^2 with one fitted C <= 10 over both
        # families and s in {+-0.01, +-0.05}
        worst = 0.0
        for fam in (1, 2):
            cl = make_closure(p_system, fam)
            for s in (0.01, 0.05, -0.01, -0.05):
                cur = admissible_curve(p_system, cl, p_system.u_base, s)
                ref = self.lax_point(p_system, fam, s)
                worst = max(worst, np.linalg.norm(cur.endpoint - ref) / s**2)
        assert worst <= 10.0

    def test_rarefaction_matches_integral_curve(self, p_system):
        for fam in (1, 2):
            cl = make_closure(p_system, fam)
            cur = admissible_curve(p_system, cl, p_system.u_base, -0.05)
            ref = self.lax_point(p_system, fam, -0.05)
            assert np.linalg.norm(cur.endpoint - ref) < 1e-8


class TestCharCurve:
    def test_all_entering(self, burgers):
        cl = make_closure(burgers, 1, [0.5])
        cur = char_admissible_curve(burgers, cl, [0.5], 0.3)
        assert cur.s_bar == pytest.approx(0.3)
        assert np.all(cur.sigma >= -1e-12)

    def test_nothing_enters(self, burgers):
        cl = make_closure(burgers, 1, [-1.0])
        cur = char_admissible_curve(burgers, cl, [-1.0], 0.5)
        # chord slope of int (u) du from -1 is negative throughout
        assert cur.s_bar == 0.0
        assert np.allclose(cur.sigma, 0.0, atol=1e-12)
        assert cur.underline_s == 0.0

    def test_monotone_hull_of_quadratic(self, burgers):
        # lambda = u crosses zero on the path from -0.2; the monotone
        # concave hull of f(tau) = -0.2 tau + tau^2/2 on [0, 0.6] is the
        # chord with slope 0.1 >= 0, so every state enters
        cl = make_closure(burgers, 1, [-0.2])
        cur = char_admissible_curve(burgers, cl, [-0.2], 0.6)
        assert np.abs(cur.sigma - 0.1).max() < 1e-9
        assert cur.s_bar == pytest.approx(0.6)
        assert abs(cur.endpoint[0] - 0.4) < 1e-9

    def test_partial_fold(self, burgers):
        # from -0.5 with s = 0.6: chord slope (f(0.6)-f(0))/0.6 < 0, so
        # the monotone hull is flat from the start
        cl = make_closure(burgers, 1, [-0.5])
        cur = char_admissible_curve(burgers, cl, [-0.5], 0.6)
        assert cur.s_bar == 0.0

    def test_sigma_nonnegative_always(self, char2x2):
        cl = make_closure(char2x2, 2)
        rng = np.random.default_rng(4)
        for _ in range(5):
            s = rng.uniform(-0.08, 0.08)
            cur = char_admissible_curve(char2x2, cl, char2x2.u_base, s)
            assert np.all(cur.sigma >= -1e-12)


class TestFixedPointStability:
    def test_lipschitz_in_s_frozen_constant(self, p_system):
        # sup distance of two curve solutions on [0, s1] <= C delta |s2-s1|
        C_FROZEN = 4.0
        cl = make_closure(p_system, 2)
        delta = p_system.delta
        m = 513
        for s1, s2 in [(0.04, 0.05), (0.08, 0.1), (0.02, 0.024)]:
            c1 = admissible_curve(p_system, cl, p_system.u_base, s1, m=m)
            c2 = admissible_curve(p_system, cl, p_system.u_base, s2, m=m)
            u2 = np.vstack([c2.state_at(x) for x in c1.grid])
            dist = np.abs(c1.u - u2).max()
            assert dist <= C_FROZEN * delta * (s2 - s1)


class TestWavePattern:
    def test_single_shock(self, burgers):
        cl = make_closure(burgers, 1, [1.0])
        cur = admissible_curve(burgers, cl, [1.0], 0.5)
        pieces = wave_pattern(cur)
        assert len(pieces) == 1 and isinstance(pieces[0], Shock)
        assert abs(pieces[0].speed - 1.25) < 1e-9
        assert pieces[0].u_from[0] == pytest.approx(1.5, abs=1e-9)
        assert pieces[0].u_to[0] == pytest.approx(1.0, abs=1e-9)

    def test_single_rarefaction(self, burgers):
        cl = make_closure(burgers, 1, [1.0])
        cur = admissible_curve(burgers, cl, [1.0], -0.5)
        pieces = wave_pattern(cur)
        assert len(pieces) == 1 and isinstance(pieces[0], Rarefaction)
        p = pieces[0]
        assert p.speed_from < p.speed_to
        assert abs(p.speed_from - 0.5) < 2e-3 and abs(p.speed_to - 1.0) < 2e-3

    def test_cubic_composite_matches_osher(self, cubic):
        # f(u) = u^3 + u from -0.6 over an inflection: shock-rarefaction
        # composite; compare the sampled solution with Osher's formula
        u_plus, u_minus = np.array([-0.6]), np.array([0.9])
        pat = solve_cauchy_riemann(cubic, u_minus, u_plus)
        kinds = [type(p).__name__ for p in pat.pieces
                 if not type(p).__name__ == "ConstantState"]
        assert "Shock" in kinds and "Rarefaction" in kinds
        flux = scalar_flux(cubic)
        h = 1.0 / 512
        xs = np.linspace(-4.0, 4.0, 801)
        sol = np.array([sample_solution(pat, 1.0, x)[0] for x in xs])
        ora = osher_scalar(flux, u_minus[0], u_plus[0], xs)
        l1 = np.trapezoid(np.abs(sol - ora), xs)
        assert l1 <= 10 * h


class TestCauchySolver:
    def test_burgers_shock_speed(self, burgers):
        pat = solve_cauchy_riemann(burgers, [2.0], [0.0])
        shocks = [p for p in pat.pieces if isinstance(p, Shock)]
        assert len(shocks) == 1
        assert abs(shocks[0].speed - 1.0) <= 1e-8

    def test_burgers_rarefaction(self, burgers):
        pat = solve_cauchy_riemann(burgers, [0.0], [1.0])
        fans = [p for p in pat.pieces if isinstance(p, Rarefaction)]
        assert len(fans) == 1
        u = sample_solution(pat, 1.0, 0.7)
        assert abs(u[0] - 0.7) < 5e-3

    def test_p_system_two_waves_rankine_hugoniot(self, p_system):
        u_plus = p_system.u_base
        u_minus = u_plus + np.array([0.012, 0.008])
        pat = solve_cauchy_riemann(p_system, u_minus, u_plus)
        shocks = [p for p in pat.pieces if isinstance(p, Shock)]
        for sh in shocks:
            fL = p_system.flux(sh.u_from)
            fR = p_system.flux(sh.u_to)
            resid = fR - fL - sh.speed * (sh.u_to - sh.u_from)
            assert np.abs(resid).max() <= 1e-6

    def test_data_too_far(self, p_system):
        with pytest.raises(InvalidInputError):
            solve_cauchy_riemann(p_system, p_system.u_base + 1.0,
                                 p_system.u_base)

    def test_scalar_exactness_l1(self, burgers):
        flux = scalar_flux(burgers)
        h = 1.0 / 512
        xs = np.linspace(0.0, 2.0, 401)
        for ul, ur in [(2.0, 0.0), (0.0, 1.0)]:
            pat = solve_cauchy_riemann(burgers, [ul], [ur])
            sol = np.array([sample_solution(pat, 1.0, x)[0] for x in xs])
            ora = osher_scalar(flux, ul, ur, xs)
            assert np.trapezoid(np.abs(sol - ora), xs) <= 10 * h


class TestSampleSolution:
    def test_shock_sides(self, burgers):
        pat = solve_cauchy_riemann(burgers, [2.0], [0.0])
        assert sample_solution(pat, 1.0, 0.9)[0] == pytest.approx(2.0)
        assert sample_solution(pat, 1.0, 1.1)[0] == pytest.approx(0.0)

    def test_needs_positive_time(self, burgers):
        pat = solve_cauchy_riemann(burgers, [2.0], [0.0])
        with pytest.raises(InvalidInputError):
            sample_solution(pat, 0.0, 0.5)
