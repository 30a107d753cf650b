"""One-dimensional ingredients: stable normalizing constant, truncated and tail
Levy densities, the truncated symbol, heat-kernel tables built by Fourier
inversion, the exact symmetric stable density, and the piecewise decay envelope
used as a domination bound in tests.

Conventions: the driving one-dimensional process has Levy density
``A(alpha) |x|^(-1-alpha)`` and characteristic function ``exp(-t|u|^ate)``.
The truncated density keeps the power law on ``|x| <= delta``, bridges with a
convex C^1 piece on ``(delta, 2 delta)`` and vanishes beyond ``2 delta``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma as _gamma, roots_laguerre, roots_legendre

from .errors import CoverageError, DomainError, ResolutionError

_LAG_X, _LAG_W = roots_laguerre(64)
_GL12_X, _GL12_W = roots_legendre(12)
_GL16_X, _GL16_W = roots_legendre(16)
_GL48_X, _GL48_W = roots_legendre(48)


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"stability index must lie in (0,1), got {alpha}")


def stable_constant(alpha: float) -> float:
    """Normalizing constant of the standard symmetric stable Levy density."""
    _check_alpha(alpha)
    return 2.0**alpha * _gamma((1.0 + alpha) / 2.0) / (
        math.sqrt(math.pi) * abs(_gamma(-alpha / 2.0))
    )


@dataclass(frozen=True)
class StableParams:
    """Stability index together with its normalizing constant."""

    alpha: float
    A_alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        ref = stable_constant(self.alpha)
        if abs(self.A_alpha - ref) > 1e-12 * ref:
            raise DomainError("A_alpha does not match its closed form")

    @classmethod
    def for_alpha(cls, alpha: float) -> "StableParams":
        return cls(alpha=alpha, A_alpha=stable_constant(alpha))


def truncation_bound(alpha: float, d: int, eps: float, eta1: float = 1.0) -> float:
    """Largest admissible truncation radius for a given cutoff scale eps."""
    _check_alpha(alpha)
    return eps * min(alpha / (8.0 * (alpha + d + 2.0)), 1.0 / (4.0 * d * max(eta1, 1.0) ** 2))


@dataclass(frozen=True)
class TruncationParams:
    """Truncation radius, envelope cutoff and time horizon for one model.

    ``match_const`` is chosen so that the two-piece envelope in
    :func:`kernel_bound` is nonincreasing in ``|x|`` for every ``t <= tau``.
    """

    alpha: float
    d: int
    eps: float
    delta: float
    tau: float
    eta1: float = 1.0

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.d < 1:
            raise DomainError("dimension must be >= 1")
        if not (0.0 < self.eps <= 1.0):
            raise DomainError(f"eps must lie in (0,1], got {self.eps}")
        if not (0.0 < self.delta <= 1.0):
            raise DomainError(f"delta must lie in (0,1], got {self.delta}")
        if self.tau <= 0.0:
            raise DomainError("tau must be positive")
        bound = truncation_bound(self.alpha, self.d, self.eps, self.eta1)
        if self.delta > bound * (1.0 + 1e-12):
            raise DomainError(
                f"delta={self.delta} exceeds admissible bound {bound} for eps={self.eps}"
            )

    @classmethod
    def for_model(cls, alpha, d, eps, tau, eta1=1.0, delta=None):
        if delta is None:
            delta = truncation_bound(alpha, d, eps, eta1)
        return cls(alpha=alpha, d=d, eps=eps, delta=delta, tau=tau, eta1=eta1)

    @property
    def match_const(self) -> float:
        a = self.alpha
        return math.exp(self.eps) / (
            (1.0 + self.tau ** (1.0 / a)) ** (1.0 + a) * self.tau ** ((self.d - 1) / a)
        )

    @property
    def A_alpha(self) -> float:
        return stable_constant(self.alpha)

    # second moment of the truncated density, exact
    @property
    def second_moment(self) -> float:
        a = self.alpha
        bridge = 4.0 / (2.0 + a) - 4.0 / (3.0 + a) + 1.0 / (4.0 + a)
        return 2.0 * self.A_alpha * self.delta ** (2.0 - a) * (1.0 / (2.0 - a) + bridge)

    def kernel_scale(self, t) -> np.ndarray:
        """Spatial scale of the truncated kernel at time t."""
        t = np.asarray(t, dtype=float)
        return np.minimum(t ** (1.0 / self.alpha), np.sqrt(t * self.second_moment))


# ---------------------------------------------------------------------------
# Levy densities
# ---------------------------------------------------------------------------

def truncated_levy_density(x, alpha: float, delta: float):
    """Truncated Levy density: power law up to delta, convex C^1 bridge, zero past 2 delta."""
    _check_alpha(alpha)
    A = stable_constant(alpha)
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    if np.any(ax == 0.0):
        raise DomainError("truncated Levy density is undefined at x = 0")
    out = np.zeros_like(ax)
    core = ax <= delta
    out[core] = A * ax[core] ** (-1.0 - alpha)
    br = (ax > delta) & (ax < 2.0 * delta)
    out[br] = A * delta ** (-1.0 - alpha) * ((2.0 * delta - ax[br]) / delta) ** (1.0 + alpha)
    return out if out.ndim else float(out)


def levy_tail_density(x, alpha: float, delta: float):
    """Removed tail: full power law minus the truncated density (nonnegative)."""
    _check_alpha(alpha)
    A = stable_constant(alpha)
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    if np.any(ax == 0.0):
        raise DomainError("tail density is undefined at x = 0")
    out = np.zeros_like(ax)
    mid = (ax > delta) & (ax < 2.0 * delta)
    out[mid] = A * (
        ax[mid] ** (-1.0 - alpha)
        - delta ** (-1.0 - alpha) * ((2.0 * delta - ax[mid]) / delta) ** (1.0 + alpha)
    )
    far = ax >= 2.0 * delta
    out[far] = A * ax[far] ** (-1.0 - alpha)
    return np.maximum(out, 0.0) if out.ndim else float(max(out, 0.0))


def tail_mass_one_sided(alpha: float, delta: float) -> float:
    """Integral of the tail density over (0, infinity), in closed form."""
    A = stable_constant(alpha)
    return 2.0 * A * delta ** (-alpha) / (alpha * (2.0 + alpha))


def jump_rate(alpha: float, delta: float, d: int) -> float:
    """Total reattachment rate: d times the full-line tail mass."""
    if d < 1:
        raise DomainError("dimension must be >= 1")
    return 2.0 * d * tail_mass_one_sided(alpha, delta)


def tail_interval_mass(a: float, b: float, alpha: float, delta: float) -> float:
    """Integral of the tail density over (a, b) with 0 <= a <= b, closed form."""
    if a < 0 or b < a:
        raise DomainError("need 0 <= a <= b")
    A = stable_constant(alpha)

    def power(lo, hi):
        if hi <= lo:
            return 0.0
        if math.isinf(hi):
            return A * lo ** (-alpha) / alpha
        return A * (lo ** (-alpha) - hi ** (-alpha)) / alpha

    def bridge(lo, hi):
        lo, hi = max(lo, delta), min(hi, 2.0 * delta)
        if hi <= lo:
            return 0.0
        vlo = (2.0 * delta - lo) / delta
        vhi = (2.0 * delta - hi) / delta
        return A * delta ** (-alpha) / (2.0 + alpha) * (vlo ** (2.0 + alpha) - vhi ** (2.0 + alpha))

    lo = max(a, delta)
    if b <= lo:
        return 0.0
    return power(lo, b) - bridge(lo, b)


# ---------------------------------------------------------------------------
# Truncated symbol
# ---------------------------------------------------------------------------

def _osc_power_integral(X, alpha):
    """int_0^X (1-cos s) s^(-1-alpha) ds, vectorized; series below 8, contour above."""
    X = np.atleast_1d(np.asarray(X, dtype=float))
    out = np.empty_like(X)
    Finf = 1.0 / (2.0 * stable_constant(alpha))
    small = X <= 8.0
    xs = X[small]
    if xs.size:
        acc = np.zeros_like(xs)
        sign, fact = 1.0, 1.0
        for k in range(1, 40):
            fact *= (2 * k - 1) * (2 * k)
            acc += sign * xs ** (2 * k - alpha) / (fact * (2 * k - alpha))
            sign = -sign
        out[small] = acc
    xl = X[~small]
    if xl.size:
        z = xl[:, None] + 1j * _LAG_X
        lag = np.sum(_LAG_W * z ** (-1.0 - alpha), axis=-1)
        out[~small] = Finf - xl ** (-alpha) / alpha + np.real(1j * np.exp(1j * xl) * lag)
    return out


def _bridge_moment(xi, alpha):
    """int_0^1 exp(-i xi v) v^(1+alpha) dv, vectorized; quadrature below 8, contour above."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    out = np.empty(xi.shape, dtype=complex)
    small = xi <= 8.0
    if np.any(small):
        v = 0.5 * (_GL48_X + 1.0)
        w = 0.5 * _GL48_W
        out[small] = np.sum(w * np.exp(-1j * np.outer(xi[small], v)) * v ** (1.0 + alpha), axis=-1)
    xl = xi[~small]
    if xl.size:
        full = _gamma(2.0 + alpha) * np.exp(-1j * np.pi * (2.0 + alpha) / 2.0) * xl ** (-2.0 - alpha)
        z = 1.0 - 1j * np.outer(1.0 / xl, _LAG_X)
        rest = (-1j / xl) * np.exp(-1j * xl) * np.sum(_LAG_W * z ** (1.0 + alpha), axis=-1)
        out[~small] = full - rest
    return out


def truncated_symbol(u, alpha: float, delta: float):
    """Characteristic exponent of the truncated process, to ~1e-10 absolute."""
    _check_alpha(alpha)
    A = stable_constant(alpha)
    u = np.atleast_1d(np.abs(np.asarray(u, dtype=float)))
    out = np.zeros_like(u)
    pos = u > 0.0
    up = u[pos]
    if up.size:
        xi = up * delta
        core = 2.0 * A * up**alpha * _osc_power_integral(xi, alpha)
        ib = A * delta ** (-alpha) / (2.0 + alpha)
        cb = A * delta ** (-alpha) * np.real(np.exp(2j * xi) * _bridge_moment(xi, alpha))
        out[pos] = core + 2.0 * (ib - cb)
    return out


# ---------------------------------------------------------------------------
# Exact symmetric stable density (untruncated driver)
# ---------------------------------------------------------------------------

class StableDensity1D:
    """Standard symmetric stable density at t = 1, with self-similar rescaling.

    Core values come from panel Gauss-Legendre inversion of exp(-|u|^alpha);
    the far field uses the alternating power series in |x|^(-k*alpha-1).
    """

    CORE_MAX = 34.0

    def __init__(self, alpha: float, cap: float = 40.0):
        _check_alpha(alpha)
        self.alpha = alpha
        # dense near the peak where small-time rescaling concentrates queries
        xg = np.concatenate([np.linspace(0.0, 2.0, 4001),
                             np.linspace(2.0, self.CORE_MAX + 1.0, 3301)[1:]])
        umax = cap ** (1.0 / alpha)
        panel = 2.0 * np.pi / (self.CORE_MAX + 1.0)
        # u = s^(1/alpha) below the knee removes the derivative cusp at u = 0
        knee = min(1.0, panel)
        s_hi = knee ** alpha
        s = 0.5 * s_hi * (_GL48_X + 1.0)
        ws = 0.5 * s_hi * _GL48_W
        u0 = s ** (1.0 / alpha)
        w0 = ws * (1.0 / alpha) * s ** (1.0 / alpha - 1.0)
        n_pan = int(np.ceil((umax - knee) / panel))
        edges = knee + np.linspace(0.0, n_pan * panel, n_pan + 1)
        lo, hi = edges[:-1], edges[1:]
        u = (lo[:, None] + 0.5 * (hi - lo)[:, None] * (_GL12_X + 1.0)[None, :]).ravel()
        w = (0.5 * (hi - lo)[:, None] * _GL12_W[None, :]).ravel()
        u = np.concatenate([u0, u])
        w = np.concatenate([w0, w])
        damp = w * np.exp(-u ** alpha)
        vals = np.empty_like(xg)
        chunk = 200
        for i in range(0, len(xg), chunk):
            vals[i : i + chunk] = np.cos(np.outer(xg[i : i + chunk], u)) @ damp
        vals /= np.pi
        # mirror a few nodes so the interpolant sees the even symmetry at 0
        nm = 8
        xg_sym = np.concatenate([-xg[1 : nm + 1][::-1], xg])
        vals_sym = np.concatenate([vals[1 : nm + 1][::-1], vals])
        self._core = PchipInterpolator(xg_sym, vals_sym, extrapolate=False)
        self._xg = xg
        self._vals = vals
        # antiderivatives of the interpolant: cumulative mass and first moment
        anti = self._core.antiderivative()
        self._cdf_core = lambda z, a=anti: a(z) - a(0.0) + 0.5
        m1 = PchipInterpolator(xg_sym, xg_sym * vals_sym, extrapolate=False).antiderivative()
        self._m1_core = lambda z, a=m1: a(z) - a(0.0)
        # asymptotic coefficients g(x) ~ sum_k c_k x^(-k alpha - 1)
        ks = np.arange(1, 12)
        self._tail_coef = (
            (-1.0) ** (ks + 1)
            * _gamma(ks * alpha + 1.0)
            / (np.pi * np.vectorize(math.factorial)(ks))
            * np.sin(ks * np.pi * alpha / 2.0)
        )
        self._tail_pow = ks * alpha + 1.0

    def __call__(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.empty_like(x)
        core = x <= self.CORE_MAX
        if np.any(core):
            out[core] = self._core(x[core])
        far = ~core
        if np.any(far):
            xf = x[far]
            out[far] = np.sum(self._tail_coef * xf[:, None] ** (-self._tail_pow), axis=-1)
        return float(out[0]) if scalar else out

    def at_time(self, t, x):
        """Density of the process at time t via self-similarity."""
        if t <= 0:
            raise DomainError("time must be positive")
        s = t ** (-1.0 / self.alpha)
        return s * self(s * np.asarray(x, dtype=float))

    def cdf(self, x):
        """Distribution function, to ~1e-8; used as a Monte Carlo oracle."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        ax = np.abs(x)
        upper = np.empty_like(ax)
        core = ax <= self.CORE_MAX
        upper[core] = self._cdf_core(ax[core])
        far = ~core
        if np.any(far):
            xf = ax[far]
            tail = np.sum(
                self._tail_coef / (self._tail_pow - 1.0) * xf[:, None] ** (1.0 - self._tail_pow),
                axis=-1,
            )
            upper[far] = 1.0 - tail
        out = np.where(x >= 0, upper, 1.0 - upper)
        return float(out[0]) if scalar else out

    def first_moment(self, x):
        """Antiderivative of s*g1(s) anchored at 0 (an even function)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        ax = np.abs(x)
        out = np.empty_like(ax)
        core = ax <= self.CORE_MAX
        out[core] = self._m1_core(ax[core])
        far = ~core
        if np.any(far):
            if not hasattr(self, "_m1_edge"):
                self._m1_edge = float(self._m1_core(self.CORE_MAX))
            xf = ax[far]
            ks_pow = 1.0 - self._tail_pow + 1.0  # exponent of s^(1-k*alpha-1)*s = s^(1-k*alpha)
            acc = np.full_like(xf, self._m1_edge)
            for c, p in zip(self._tail_coef, ks_pow):
                if abs(p) < 1e-12:
                    acc += c * np.log(xf / self.CORE_MAX)
                else:
                    acc += c * (xf**p - self.CORE_MAX**p) / p
            out[far] = acc
        return out

    def hat_smoothed(self, t, x, h):
        """Exact convolution of the time-t kernel with a unit-mass hat of half width h."""
        s = t ** (-1.0 / self.alpha)
        x = np.asarray(x, dtype=float)

        def F(y):
            return self.cdf(s * y)

        def M(y):
            return self.first_moment(s * y) / s

        lo, mid, hi = F(x - h), F(x), F(x + h)
        mlo, mmid, mhi = M(x - h), M(x), M(x + h)
        left = (1.0 - x / h) * (mid - lo) + (mmid - mlo) / h
        right = (1.0 + x / h) * (hi - mid) - (mhi - mmid) / h
        return (left + right) / h


@lru_cache(maxsize=8)
def _std_density(alpha: float) -> StableDensity1D:
    return StableDensity1D(alpha)


def stable_kernel(t: float, x, alpha: float):
    """Symmetric stable heat kernel (untruncated driver) at time t."""
    _check_alpha(alpha)
    if t <= 0:
        raise DomainError("time must be positive")
    return _std_density(alpha).at_time(t, x)


def stable_cdf(t: float, x, alpha: float):
    """Distribution function of the stable law at time t."""
    _check_alpha(alpha)
    s = t ** (-1.0 / alpha)
    return _std_density(alpha).cdf(np.asarray(x, dtype=float) * s)


# ---------------------------------------------------------------------------
# Decay envelope
# ---------------------------------------------------------------------------

def kernel_bound(t, x, params: TruncationParams):
    """Two-piece envelope dominating the truncated kernel up to a constant."""
    a = params.alpha
    t = np.asarray(t, dtype=float)
    x = np.abs(np.asarray(x, dtype=float))
    near = t / (x + t ** (1.0 / a)) ** (1.0 + a)
    far = params.match_const * t ** (1.0 + (params.d - 1) / a) * np.exp(-x)
    out = np.where(x < params.eps, near, far)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Kernel table
# ---------------------------------------------------------------------------

def _series_rows(alpha, delta, t_vals, x_out, mollify_h, near_cut=6.0, reach=16.0):
    """Small-time rows by removing tail jumps from the exact stable kernel.

    Writes the truncated kernel as exp(t*I) * sum_k (-t)^k/k! g_inf * nu^(*k)
    with nu restricted to |y| <= near_cut.  A single omitted far jump lands far
    outside the tabulated range, but a pair of opposite far jumps returns to
    the core at order t^2; that smooth term is subtracted in closed quadrature
    form.  The work grid extends to +-reach so multi-jump excursions within
    the cut are represented.
    """
    from scipy.fft import irfft, next_fast_len, rfft

    step = x_out[1] - x_out[0]
    half = int(np.ceil(reach / step))
    grid = step * np.arange(-half, half + 1)
    n = len(grid)
    g1 = _std_density(alpha)

    # seed: exact stable kernel, optionally convolved exactly with a unit hat
    def seed(t):
        if not mollify_h:
            return g1.at_time(t, grid)
        return g1.hat_smoothed(t, grid, mollify_h)

    # compact tail measure with exact per-cell masses from the antiderivative
    m_half = int(np.ceil(near_cut / step))
    offs = step * np.arange(0, m_half + 1)
    lo = np.clip(offs - 0.5 * step, 0.0, None)
    hi = offs + 0.5 * step
    cell = np.array(
        [tail_interval_mass(min(a, near_cut), min(b, near_cut), alpha, delta)
         if b > delta else 0.0 for a, b in zip(lo, hi)]
    )
    wts = np.concatenate([cell[:0:-1], [2.0 * cell[0]], cell[1:]])
    m = len(wts)
    pad = next_fast_len(n + m - 1)
    wf = rfft(wts, pad)
    off = (m - 1) // 2

    def conv_near(cur):
        return irfft(rfft(cur, pad) * wf, pad)[off : off + n]

    total_tail = 2.0 * tail_mass_one_sided(alpha, delta)

    # two opposite omitted far jumps: smooth return density at the origin
    v = 0.5 * (_GL48_X + 1.0)
    vw = 0.5 * _GL48_W
    y_far = near_cut * v ** (-1.0 / alpha)
    w_far = (
        vw * (near_cut / alpha) * v ** (-1.0 / alpha - 1.0)
        * levy_tail_density(y_far, alpha, delta)
    )
    far_pair = levy_tail_density(
        np.maximum(np.abs(y_far[:, None] - x_out[None, :]), 1e-300), alpha, delta
    ) + levy_tail_density(y_far[:, None] + x_out[None, :], alpha, delta)
    ff = w_far @ far_pair

    rows = np.empty((len(t_vals), len(x_out)))
    for i, t in enumerate(t_vals):
        cur = seed(t)
        acc = cur.copy()
        coef = 1.0
        k = 1
        while True:
            cur = conv_near(cur)
            coef *= -t / k
            term = coef * cur
            acc += term
            k += 1
            if k > 48 or (np.max(np.abs(term)) < 1e-14 * max(np.max(acc), 1e-300) and k > 3):
                break
        rows[i] = np.interp(x_out, grid, np.exp(t * total_tail) * acc) - 0.5 * t * t * ff
    return rows


def _fourier_rows(alpha, delta, t_vals, x_out, mollify_h, cap=45.0):
    """Rows by cosine-transform inversion of the truncated symbol.

    The damped symbol is smooth and non-oscillatory, so a uniform u grid plus
    a type-I DCT evaluates the transform with spectral accuracy; the sampling
    period is chosen so that folded kernel copies land where the kernel has
    already collapsed superexponentially.
    """
    from scipy.fft import dct

    inu = 2.0 * tail_mass_one_sided(alpha, delta)
    xmax = max(abs(x_out[0]), abs(x_out[-1]), 1e-3)
    # power tails persist out to the truncation reach; beyond that the kernel
    # collapses superexponentially and folded copies are harmless
    fold = xmax + max(2.5, 2.5 * delta)
    du = np.pi / fold
    ax_out = np.abs(x_out)

    def moll_factor(u):
        if not mollify_h:
            return np.ones_like(u)
        z = 0.5 * mollify_h * u
        s = np.ones_like(z)
        nz = np.abs(z) > 1e-14
        s[nz] = np.sin(z[nz]) / z[nz]
        return s * s

    # For weakly truncated measures the symbol still looks like |u|^alpha at
    # the first few samples; replace that block with a cusp-absorbing
    # substituted rule.  For admissible (small) deltas the symbol is quadratic
    # there and the plain trapezoid keeps its boundary-term cancellation, so
    # the swap stays off.
    u_knee = 8.0 * du
    fix_low = delta * u_knee > 0.5
    if fix_low:
        s_hi = u_knee**alpha
        s_lo = 0.5 * s_hi * (_GL48_X + 1.0)
        u_lo = s_lo ** (1.0 / alpha)
        w_lo = 0.5 * s_hi * _GL48_W * (1.0 / alpha) * s_lo ** (1.0 / alpha - 1.0)
        cos_lo = np.cos(np.outer(ax_out, u_lo))

    rows = np.empty((len(t_vals), len(x_out)))
    for i, t in enumerate(t_vals):
        umax = max(((cap + 2.0 * inu * t) / t) ** (1.0 / alpha), 2 * u_knee)
        n = int(np.ceil(umax / du)) + 1
        u = du * np.arange(n)
        damp = np.exp(-t * truncated_symbol(u, alpha, delta)) * moll_factor(u)
        # trapezoid on [0, umax]: DCT-I supplies sum_m damp_m cos(pi j m/(n-1))
        spec = dct(damp, type=1)
        vals_fine = (du / (2.0 * np.pi)) * spec
        x_fine = (np.pi / (du * (n - 1))) * np.arange(n)
        keep = int(np.searchsorted(x_fine, xmax * 1.05)) + 2
        itp = PchipInterpolator(x_fine[:keep], vals_fine[:keep], extrapolate=False)
        row = itp(np.minimum(ax_out, x_fine[keep - 1]))
        if fix_low:
            # u_knee = 8 du sits exactly on a node, so the block split is clean
            n_lo = 9
            w_tr = np.full(n_lo, du)
            w_tr[0] = 0.5 * du
            w_tr[-1] = 0.5 * du
            block_old = np.cos(np.outer(ax_out, u[:n_lo])) @ (w_tr * damp[:n_lo])
            damp_lo = np.exp(-t * truncated_symbol(u_lo, alpha, delta)) * moll_factor(u_lo)
            block_new = cos_lo @ (w_lo * damp_lo)
            row = row + (block_new - block_old) / np.pi
        rows[i] = row
    return rows


def default_table_grid(params: TruncationParams, t_min=0.1, t_max=None, x_max=0.9, n_t=36):
    """Log-spaced times and an x grid fine enough for the stored-mass check."""
    if t_max is None:
        t_max = params.tau + 1.0
    t_nodes = np.exp(np.linspace(math.log(t_min), math.log(t_max), n_t))
    inu = 2.0 * tail_mass_one_sided(params.alpha, params.delta)
    step_alias = 2.0 * np.pi / ((14.5 / t_min + 2.0 * inu) ** (1.0 / params.alpha))
    step_spec = min(params.delta, t_min ** (1.0 / params.alpha)) / 8.0
    step = min(step_alias, step_spec)
    n_half = int(np.ceil(x_max / step))
    x_nodes = step * np.arange(-n_half, n_half + 1)
    return t_nodes, x_nodes


@dataclass
class KernelTable1D:
    """Tabulated truncated heat kernel on a (time x space) grid."""

    alpha: float
    delta: float
    t_nodes: np.ndarray
    x_nodes: np.ndarray
    values: np.ndarray
    interp: str = "pchip-logt,linear-x"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._logt = np.log(self.t_nodes)
        self._row_itp = None
        self._row_cache = {}

    # -- evaluation ---------------------------------------------------------
    def row(self, t: float) -> np.ndarray:
        """Kernel values on the x grid at arbitrary covered time."""
        key = float(t)
        cached = self._row_cache.get(key)
        if cached is not None:
            return cached
        if not (self.t_nodes[0] * (1 - 1e-12) <= t <= self.t_nodes[-1] * (1 + 1e-12)):
            raise CoverageError(
                f"t={t} outside tabulated range [{self.t_nodes[0]}, {self.t_nodes[-1]}]"
            )
        if self._row_itp is None:
            self._row_itp = PchipInterpolator(self._logt, self.values, axis=0)
        out = np.asarray(self._row_itp(math.log(t)))
        if len(self._row_cache) > 512:
            self._row_cache.clear()
        self._row_cache[key] = out
        return out

    def evaluate(self, t: float, x) -> np.ndarray:
        """Interpolated kernel value; zero outside the tabulated x range."""
        row = self.row(t)
        return np.interp(np.abs(np.asarray(x, dtype=float)), self.x_nodes[self.x_nodes >= 0],
                         row[self.x_nodes >= 0], left=row[len(row) // 2], right=0.0)

    def mass(self) -> np.ndarray:
        return np.trapezoid(self.values, self.x_nodes, axis=1)

    # -- io -----------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t," + ",".join(f"{x:.17g}" for x in self.x_nodes) + "\n")
        for t, row in zip(self.t_nodes, self.values):
            buf.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    def sidecar(self) -> dict:
        side = {
            "alpha": self.alpha,
            "delta": self.delta,
            "t_nodes": [float(t) for t in self.t_nodes],
            "x_grid": {
                "n": int(len(self.x_nodes)),
                "step": float(self.x_nodes[1] - self.x_nodes[0]),
            },
            "interp": self.interp,
        }
        side.update(self.meta)
        return side

    def save(self, csv_path, json_path) -> None:
        with open(csv_path, "w") as f:
            f.write(self.to_csv())
        with open(json_path, "w") as f:
            json.dump(self.sidecar(), f, indent=1, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_csv(cls, csv_path, json_path) -> "KernelTable1D":
        with open(json_path) as f:
            side = json.load(f)
        raw = np.loadtxt(csv_path, delimiter=",", skiprows=1)
        raw = np.atleast_2d(raw)
        meta = {k: v for k, v in side.items()
                if k not in ("alpha", "delta", "t_nodes", "x_grid", "interp")}
        with open(csv_path) as f:
            header = f.readline().strip().split(",")[1:]
        x_nodes = np.array([float(v) for v in header])
        return cls(alpha=side["alpha"], delta=side["delta"], t_nodes=raw[:, 0],
                   x_nodes=x_nodes, values=raw[:, 1:], interp=side.get("interp", ""),
                   meta=meta)


def build_kernel_table(
    params: TruncationParams,
    t_nodes,
    x_nodes,
    mollify_h: float | None = None,
    cap: float = 45.0,
    mass_tol: float = 1e-6,
    check_mass: bool = True,
) -> KernelTable1D:
    """Tabulate the truncated kernel; raises ResolutionError if a row loses mass.

    Rows at small times come from the jump-removal series seeded by the exact
    stable kernel; larger times use direct Fourier inversion of the symbol.
    The two paths agree on overlapping times to ~1e-7.
    """
    alpha, delta = params.alpha, params.delta
    t_nodes = np.asarray(t_nodes, dtype=float)
    x_nodes = np.asarray(x_nodes, dtype=float)
    if np.any(t_nodes <= 0) or np.any(np.diff(t_nodes) <= 0):
        raise DomainError("t_nodes must be positive and increasing")
    if not np.allclose(x_nodes, -x_nodes[::-1], atol=1e-15):
        raise DomainError("x_nodes must be symmetric about 0")
    step = x_nodes[1] - x_nodes[0]
    if mollify_h is None:
        lim = min(delta, t_nodes[0] ** (1.0 / alpha)) / 8.0
        if step >= lim:
            raise ResolutionError(
                f"x step {step:.3g} too coarse for t={t_nodes[0]:.3g}; need < {lim:.3g}"
            )
    inu = 2.0 * tail_mass_one_sided(alpha, delta)
    t_split = min(max(0.9 / inu, 0.02), 0.105)
    small = t_nodes <= t_split
    values = np.empty((len(t_nodes), len(x_nodes)))
    if np.any(small):
        values[small] = _series_rows(alpha, delta, t_nodes[small], x_nodes, mollify_h)
    if np.any(~small):
        values[~small] = _fourier_rows(alpha, delta, t_nodes[~small], x_nodes, mollify_h, cap)
    # enforce exact symmetry; clip far-field quadrature noise and restore the
    # clipped (noise-level) mass so both invariants hold simultaneously
    values = 0.5 * (values + values[:, ::-1])
    pre_mass = np.trapezoid(values, x_nodes, axis=1)
    values = np.maximum(values, 0.0)
    post_mass = np.trapezoid(values, x_nodes, axis=1)
    scale = np.where(post_mass > 0, pre_mass / np.maximum(post_mass, 1e-300), 1.0)
    values *= scale[:, None]
    table = KernelTable1D(
        alpha=alpha,
        delta=delta,
        t_nodes=t_nodes,
        x_nodes=x_nodes,
        values=values,
        meta={
            "eps": params.eps,
            "tau": params.tau,
            "d": params.d,
            "mollify_h": mollify_h or 0.0,
            "quadrature": {"cap": cap, "t_split": t_split, "panel_rule": "gl12-per-period"},
        },
    )
    if check_mass:
        mass = table.mass()
        bad = np.abs(mass - 1.0) > mass_tol
        if np.any(bad):
            i = int(np.argmax(np.abs(mass - 1.0)))
            raise ResolutionError(
                f"kernel mass check failed at t={t_nodes[i]:.6g}: mass={mass[i]:.9f}"
            )
    return table
