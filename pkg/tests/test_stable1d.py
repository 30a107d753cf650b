"""One-dimensional ingredients against independent oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import gamma

from cylstable.errors import CoverageError, DomainError, ResolutionError
from cylstable.stable1d import (
    KernelTable1D,
    StableParams,
    TruncationParams,
    build_kernel_table,
    default_table_grid,
    jump_rate,
    kernel_bound,
    levy_tail_density,
    stable_cdf,
    stable_constant,
    stable_kernel,
    tail_interval_mass,
    tail_mass_one_sided,
    truncated_levy_density,
    truncated_symbol,
)

ALPHA = 0.5


def symbol_oracle(u, alpha):
    """Spectral integral of the full stable Levy density, by adaptive quadrature."""
    A = stable_constant(alpha)
    inner = quad(lambda y: (1 - np.cos(u * y)) * y ** (-1 - alpha), 0, 1, limit=400)[0]
    tail_one = 1.0 / alpha
    tail_cos = quad(lambda y: y ** (-1 - alpha), 1, np.inf, weight="cos", wvar=u)[0]
    return 2 * A * (inner + tail_one - tail_cos)


class TestStableConstant:
    def test_closed_form_at_half(self):
        # frozen from a high-precision evaluation of the gamma-function formula
        assert stable_constant(0.5) == pytest.approx(0.19947114020071635, rel=1e-12)

    def test_symbol_normalization_u1(self):
        assert symbol_oracle(1.0, 0.7) == pytest.approx(1.0, abs=1e-8)

    def test_symbol_normalization_u4(self):
        assert symbol_oracle(4.0, 0.5) == pytest.approx(2.0, abs=1e-8)

    def test_domain_error(self):
        for bad in (0.0, 1.0, 1.2, -0.3):
            with pytest.raises(DomainError):
                stable_constant(bad)

    def test_params_invariant(self):
        StableParams.for_alpha(0.5)
        with pytest.raises(DomainError):
            StableParams(alpha=0.5, A_alpha=0.2)


class TestTruncationParams:
    def test_delta_default_formula(self):
        p = TruncationParams.for_model(0.5, 2, eps=1.0, tau=1.0)
        assert p.delta == pytest.approx(min(0.5 / (8 * 4.5), 1.0 / 8.0))

    def test_delta_bound_enforced(self):
        with pytest.raises(DomainError):
            TruncationParams.for_model(0.5, 2, eps=0.5, tau=1.0, delta=0.1)

    def test_match_const(self):
        p = TruncationParams.for_model(0.5, 2, eps=1.0, tau=2.0)
        expect = math.e / ((1 + 2.0**2) ** 1.5 * 2.0**2)
        assert p.match_const == pytest.approx(expect, rel=1e-12)

    def test_second_moment_against_quadrature(self):
        p = TruncationParams.for_model(0.5, 2, eps=1.0, tau=1.0)
        ref = 2 * quad(
            lambda y: y * y * truncated_levy_density(y, p.alpha, p.delta),
            0, 2 * p.delta, points=[p.delta], limit=200,
        )[0]
        assert p.second_moment == pytest.approx(ref, rel=1e-7)


class TestTruncatedDensity:
    def setup_method(self):
        self.delta = 0.05

    def test_power_law_inside(self):
        x = self.delta / 2
        expect = stable_constant(ALPHA) * x ** (-1 - ALPHA)
        assert truncated_levy_density(x, ALPHA, self.delta) == pytest.approx(expect, rel=1e-14)

    def test_zero_beyond(self):
        assert truncated_levy_density(2 * self.delta, ALPHA, self.delta) == 0.0
        assert truncated_levy_density(5 * self.delta, ALPHA, self.delta) == 0.0

    def test_bridge_strictly_between(self):
        x = 1.5 * self.delta
        v = truncated_levy_density(x, ALPHA, self.delta)
        assert 0 < v < stable_constant(ALPHA) * x ** (-1 - ALPHA)

    def test_domain_error_at_zero(self):
        with pytest.raises(DomainError):
            truncated_levy_density(0.0, ALPHA, self.delta)

    @given(st.floats(min_value=1e-4, max_value=0.999))
    @settings(max_examples=50, deadline=None)
    def test_even_and_dominated(self, xfrac):
        x = xfrac * 3 * self.delta
        if x == 0:
            return
        v = truncated_levy_density(x, ALPHA, self.delta)
        assert v == truncated_levy_density(-x, ALPHA, self.delta)
        assert 0 <= v <= stable_constant(ALPHA) * abs(x) ** (-1 - ALPHA) * (1 + 1e-12)

    def test_c1_and_convex(self):
        # one-sided derivative mismatch at the joints, and convexity inside
        d = self.delta
        scale = stable_constant(ALPHA) * d ** (-2 - ALPHA)

        def slope(a, b):
            return (truncated_levy_density(b, ALPHA, d)
                    - truncated_levy_density(a, ALPHA, d)) / (b - a)

        eps = 1e-7
        left = slope(d - 2 * eps, d - eps)
        right = slope(d + eps, d + 2 * eps)
        assert abs(left - right) / scale < 1e-4
        # outer joint: the bridge slope approaches 0 like eps^alpha, so
        # extrapolate the one-sided derivative with the known rate
        e = 1e-5 * d
        s1 = slope(2 * d - 2 * e, 2 * d - e)
        s2 = slope(2 * d - e / 2, 2 * d - e / 4)
        rate = 4.0**ALPHA
        left0 = (rate * s2 - s1) / (rate - 1.0)
        assert abs(left0 - 0.0) / scale < 1e-4
        xs = np.linspace(0.2 * d, 1.99 * d, 400)
        vals = truncated_levy_density(xs, ALPHA, d)
        second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
        assert np.all(second >= -1e-10)
        assert np.all(np.diff(vals) <= 1e-12)


class TestTailDensity:
    def setup_method(self):
        self.delta = 0.05

    def test_zero_inside(self):
        assert levy_tail_density(0.5 * self.delta, ALPHA, self.delta) == 0.0

    def test_full_power_beyond(self):
        x = 3 * self.delta
        expect = stable_constant(ALPHA) * x ** (-1 - ALPHA)
        assert levy_tail_density(x, ALPHA, self.delta) == pytest.approx(expect, rel=1e-14)

    def test_split_identity(self):
        xs = np.linspace(0.2 * self.delta, 4 * self.delta, 500)
        total = truncated_levy_density(xs, ALPHA, self.delta) + levy_tail_density(
            xs, ALPHA, self.delta
        )
        full = stable_constant(ALPHA) * xs ** (-1 - ALPHA)
        assert np.allclose(total, full, rtol=1e-12)

    def test_closed_form_mass(self):
        ref = quad(lambda y: levy_tail_density(y, ALPHA, self.delta), self.delta,
                   2 * self.delta, limit=200)[0]
        ref += quad(lambda y: levy_tail_density(y, ALPHA, self.delta), 2 * self.delta,
                    np.inf, limit=200)[0]
        A = stable_constant(ALPHA)
        closed = 2 * A * self.delta ** (-ALPHA) / (ALPHA * (2 + ALPHA))
        assert tail_mass_one_sided(ALPHA, self.delta) == pytest.approx(closed, rel=1e-14)
        assert tail_mass_one_sided(ALPHA, self.delta) == pytest.approx(ref, abs=1e-8 * closed)

    def test_interval_mass_against_quadrature(self):
        for a, b in [(0.0, 0.07), (0.06, 0.2), (0.11, 5.0), (0.0, np.inf)]:
            ref = quad(lambda y: levy_tail_density(y, ALPHA, self.delta), max(a, 1e-12),
                       min(b, 50.0), limit=400, points=[self.delta, 2 * self.delta])[0]
            if np.isinf(b):
                ref += stable_constant(ALPHA) * 50.0 ** (-ALPHA) / ALPHA
            assert tail_interval_mass(a, b, ALPHA, self.delta) == pytest.approx(ref, abs=1e-7)


class TestJumpRate:
    def test_closed_form_example(self):
        A = stable_constant(0.5)
        expect = 8 * A * 0.05 ** (-0.5) / (0.5 * 2.5)
        assert jump_rate(0.5, 0.05, 2) == pytest.approx(expect, rel=1e-14)

    def test_delta_scaling(self):
        assert jump_rate(0.5, 0.025, 2) / jump_rate(0.5, 0.05, 2) == pytest.approx(
            2**0.5, rel=1e-12
        )

    def test_linear_in_d(self):
        assert jump_rate(0.5, 0.05, 4) == pytest.approx(2 * jump_rate(0.5, 0.05, 2), rel=1e-14)


class TestSymbol:
    def test_against_quadrature(self, trunc):
        for u in (0.3, 1.0, 5.0, 40.0, 900.0):
            ref = 2 * quad(
                lambda y: (1 - np.cos(u * y)) * truncated_levy_density(y, trunc.alpha, trunc.delta),
                0, 2 * trunc.delta, limit=800, points=[trunc.delta],
            )[0]
            assert truncated_symbol(u, trunc.alpha, trunc.delta)[0] == pytest.approx(
                ref, rel=2e-8, abs=5e-9
            )

    def test_scaling_envelope(self, trunc):
        # truncated symbol behaves like min((delta u)^2, (delta u)^alpha)/delta^alpha
        us = np.logspace(-2, 5, 60)
        phi = truncated_symbol(us, trunc.alpha, trunc.delta)
        shape = trunc.delta ** (-trunc.alpha) * np.minimum(
            (trunc.delta * us) ** 2, (trunc.delta * us) ** trunc.alpha
        )
        ratio = phi / shape
        assert ratio.max() / ratio.min() < 12.0


class TestStableKernel:
    def test_peak_value(self):
        expect = gamma(1 + 1 / ALPHA) / np.pi
        assert stable_kernel(1.0, 0.0, ALPHA) == pytest.approx(expect, rel=1e-9)

    def test_self_similarity(self):
        xs = np.array([0.0, 0.3, 1.1, 4.0])
        t = 0.37
        lhs = stable_kernel(t, xs, ALPHA)
        rhs = t ** (-1 / ALPHA) * stable_kernel(1.0, t ** (-1 / ALPHA) * xs, ALPHA)
        assert np.allclose(lhs, rhs, rtol=1e-12)

    def test_shape_envelope(self):
        # value times (t^(1/a)+|x|)^(1+a)/t bounded above and below on a sweep
        ratios = []
        for t in np.logspace(-1, 0.5, 6):
            for x in np.logspace(-2, 1, 8):
                g = stable_kernel(t, x, ALPHA)
                ratios.append(g * (t ** (1 / ALPHA) + x) ** (1 + ALPHA) / t)
        ratios = np.array(ratios)
        assert ratios.min() > 0.01 and ratios.max() < 10.0

    def test_chapman_kolmogorov(self):
        t = 0.4
        xs = np.linspace(-250, 250, 200001)
        g1 = stable_kernel(t, xs, ALPHA)
        conv_at = np.linspace(-2, 2, 9)
        g2 = stable_kernel(2 * t, conv_at, ALPHA)
        step = xs[1] - xs[0]
        for x, expect in zip(conv_at, g2):
            val = np.sum(stable_kernel(t, x - xs, ALPHA) * g1) * step
            assert val == pytest.approx(expect, abs=1e-6)

    def test_cdf_matches_density(self):
        xs = np.array([-3.0, -0.5, 0.0, 0.5, 3.0, 50.0])
        cdf = stable_cdf(1.0, xs, ALPHA)
        assert cdf[2] == pytest.approx(0.5, abs=1e-10)
        assert np.all(np.diff(cdf) > 0)
        x = 0.8
        eps = 1e-4
        deriv = (stable_cdf(1.0, x + eps, ALPHA) - stable_cdf(1.0, x - eps, ALPHA)) / (2 * eps)
        assert deriv == pytest.approx(stable_kernel(1.0, x, ALPHA), rel=1e-5)


class TestKernelBound:
    def test_at_zero(self, trunc):
        t = 0.3
        expect = t / (t ** (1 / trunc.alpha)) ** (1 + trunc.alpha)
        assert kernel_bound(t, 0.0, trunc) == pytest.approx(expect, rel=1e-14)

    def test_nonincreasing(self, trunc):
        xs = np.linspace(0, 4, 2000)
        for t in (0.05, 0.3, trunc.tau):
            vals = kernel_bound(t, xs, trunc)
            assert np.all(np.diff(vals) <= 1e-15)

    def test_branch_matching_at_eps(self, trunc):
        # the far branch never exceeds the near branch at the junction
        for t in (0.05, 0.5, trunc.tau):
            near = t / (trunc.eps + t ** (1 / trunc.alpha)) ** (1 + trunc.alpha)
            far = trunc.match_const * t ** (1 + (trunc.d - 1) / trunc.alpha) * math.exp(-trunc.eps)
            assert far <= near * (1 + 1e-12)
        t = trunc.tau
        if trunc.eps == 1.0:
            near = t / (trunc.eps + t ** (1 / trunc.alpha)) ** (1 + trunc.alpha)
            far = trunc.match_const * t ** (1 + (trunc.d - 1) / trunc.alpha) * math.exp(-trunc.eps)
            assert far == pytest.approx(near, rel=1e-12)


class TestKernelTable:
    def test_mass_and_positivity(self, kernel_table):
        mass = kernel_table.mass()
        assert np.all(np.abs(mass - 1) <= 1e-6)
        assert kernel_table.values.min() >= 0.0

    def test_symmetry(self, kernel_table):
        assert np.max(np.abs(kernel_table.values - kernel_table.values[:, ::-1])) <= 1e-12

    def test_envelope_domination(self, kernel_table, trunc):
        sub = kernel_table.x_nodes[:: max(1, len(kernel_table.x_nodes) // 64)]
        ratios = []
        for t in kernel_table.t_nodes[kernel_table.t_nodes <= trunc.tau]:
            g = kernel_table.evaluate(t, sub)
            hb = kernel_bound(t, sub, trunc)
            ratios.append(np.max(g / hb))
        assert max(ratios) < 100.0

    def test_derivative_far_decay(self, kernel_table):
        # finite-difference slope decays in |x| at fixed t (fitted sanity)
        t = 0.5
        row = kernel_table.row(t)
        x = kernel_table.x_nodes
        grad = np.abs(np.gradient(row, x))
        mid = np.searchsorted(x, 0.05)
        far = np.searchsorted(x, 0.25)
        assert grad[far:].max() < grad[mid] * 1e-3 + 1e-12

    def test_levy_smoothness_functional(self, trunc):
        # int ((a+|w|)|w|/t^(1/alpha) ^ 1) mu(w) dw <= C (sqrt(t)+a^alpha)/t
        # fitted on half the sweep, verified on the other half
        def lhs(a, t):
            return 2 * quad(
                lambda w: min((a + w) * w / t ** (1 / trunc.alpha), 1.0)
                * truncated_levy_density(w, trunc.alpha, trunc.delta),
                0, 2 * trunc.delta, points=[trunc.delta], limit=200,
            )[0]

        def rhs(a, t):
            return (math.sqrt(t) + a**trunc.alpha) / t

        sweep = [(a, t) for a in (0.0, 0.05, 0.3, 1.0) for t in (0.05, 0.2, 0.8)]
        ratios = np.array([lhs(a, t) / rhs(a, t) for a, t in sweep])
        c_fit = ratios[::2].max()
        assert ratios[1::2].max() <= 3 * c_fit

    def test_coverage_error(self, kernel_table):
        with pytest.raises(CoverageError):
            kernel_table.row(kernel_table.t_nodes[0] * 0.5)

    def test_resolution_error_names_t(self, trunc):
        t_nodes = np.array([0.1, 0.5])
        x_nodes = np.linspace(-0.5, 0.5, 101)  # far too coarse
        with pytest.raises(ResolutionError):
            build_kernel_table(trunc, t_nodes, x_nodes)

    def test_csv_roundtrip(self, kernel_table, tmp_path):
        sub = KernelTable1D(
            alpha=kernel_table.alpha,
            delta=kernel_table.delta,
            t_nodes=kernel_table.t_nodes[:3],
            x_nodes=kernel_table.x_nodes[::40],
            values=kernel_table.values[:3, ::40],
            meta=kernel_table.meta,
        )
        sub.save(tmp_path / "tab.csv", tmp_path / "tab.json")
        back = KernelTable1D.from_csv(tmp_path / "tab.csv", tmp_path / "tab.json")
        assert np.array_equal(back.values, sub.values)
        assert np.array_equal(back.t_nodes, sub.t_nodes)
        back.save(tmp_path / "tab2.csv", tmp_path / "tab2.json")
        assert (tmp_path / "tab.csv").read_bytes() == (tmp_path / "tab2.csv").read_bytes()
        assert (tmp_path / "tab.json").read_bytes() == (tmp_path / "tab2.json").read_bytes()

    def test_large_delta_limit_matches_stable(self):
        # with the truncation pushed far out the builder approaches the stable
        # kernel (admissible deltas are capped, so drive the row builder
        # directly); at moderate delta the removed-tail concentration factor
        # exp(t * tail mass) is still visible and predictable
        from cylstable.stable1d import _fourier_rows, _series_rows

        x_nodes = np.linspace(-2, 2, 801)
        row = _series_rows(0.5, 1e8, np.array([1.0]), x_nodes, None)[0]
        mid = len(x_nodes) // 2
        assert row[mid] == pytest.approx(gamma(1 + 1 / 0.5) / np.pi, abs=2e-4)

        row40 = _fourier_rows(0.5, 40.0, np.array([1.0]), x_nodes, None)[0]
        lift = math.exp(2 * tail_mass_one_sided(0.5, 40.0))
        assert row40[mid] == pytest.approx(lift * gamma(3.0) / np.pi, rel=2e-3)
