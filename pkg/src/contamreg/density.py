"""Kernels, bandwidth rules and the nonparametric / Monte-Carlo estimators.

All estimators are vectorized over their evaluation points; a scalar input
returns a 0-d result.

For the triangular kernel the kernel sums are computed exactly in
O((n + m) log n) with sorted centers and prefix sums of 1, c and c^2,
since the kernel and its antiderivative are piecewise polynomials.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .distributions import DistSpec
from .model import ParameterError, Sample

_SQRT_2PI = math.sqrt(2.0 * math.pi)
# max entries of a dense (points x centers) block
_BLOCK = 2_000_000


class BandwidthWarning(UserWarning):
    """Emitted when a bandwidth sequence violates the decay conditions."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "triangular"

    def __post_init__(self):
        if self.kind not in ("triangular", "gaussian"):
            raise ParameterError(f"unknown kernel '{self.kind}' (expected triangular or gaussian)")

    @property
    def support(self) -> float:
        return 1.0 if self.kind == "triangular" else math.inf

    @property
    def second_moment(self) -> float:
        return 1.0 / 6.0 if self.kind == "triangular" else 1.0

    def k(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "triangular":
            return np.maximum(1.0 - np.abs(t), 0.0)
        return np.exp(-0.5 * t * t) / _SQRT_2PI

    def k_cdf(self, t):
        """Antiderivative of ``k`` vanishing at minus infinity."""
        t = np.asarray(t, dtype=float)
        if self.kind == "triangular":
            return np.where(
                t <= -1.0, 0.0,
                np.where(t <= 0.0, 0.5 * (1.0 + t) ** 2,
                         np.where(t < 1.0, 1.0 - 0.5 * (1.0 - t) ** 2, 1.0)))
        return special.ndtr(t)


TRIANGULAR = KernelSpec("triangular")
GAUSSIAN = KernelSpec("gaussian")


def check_kernel(kernel: KernelSpec, tol: float = 1e-8) -> dict:
    """Numerically verify evenness, unit mass, boundedness and finite moments."""
    s = min(kernel.support, 40.0)
    grid = np.linspace(-s, s, 4001)
    mass = integrate.quad(kernel.k, -s, s, points=[0.0] if kernel.kind == "triangular" else None)[0]
    m2 = integrate.quad(lambda t: t * t * kernel.k(t), -s, s)[0]
    l2 = integrate.quad(lambda t: kernel.k(t) ** 2, -s, s)[0]
    return {
        "even": bool(np.allclose(kernel.k(grid), kernel.k(-grid), atol=tol)),
        "unit_mass": abs(mass - 1.0) < tol,
        "bounded": bool(np.max(kernel.k(grid)) < np.inf),
        "square_integrable": bool(np.isfinite(l2)),
        "second_moment": m2,
        "second_moment_ok": abs(m2 - kernel.second_moment) < 1e-6,
        "k_cdf_at_zero": float(kernel.k_cdf(0.0)),
    }


@dataclass(frozen=True)
class BandwidthRule:
    """Bandwidth sequence b_n.

    ``paper``: sqrt(1 + 4p(1-p)) * (4 / (3n))^(1/5), with a fixed working p.
    ``fixed``: constant b.  ``power``: c * n^(-exponent).
    """

    kind: str = "paper"
    p: float = 0.5
    b: float | None = None
    c: float | None = None
    exponent: float | None = None

    def __post_init__(self):
        if self.kind == "paper" and not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"working p must lie in [0, 1], got {self.p}")
        if self.kind == "fixed" and not (self.b is not None and self.b > 0):
            raise ParameterError("fixed bandwidth must be positive")
        if self.kind == "power" and not (self.c is not None and self.c > 0 and self.exponent is not None):
            raise ParameterError("power bandwidth needs c > 0 and an exponent")
        if self.kind not in ("paper", "fixed", "power"):
            raise ParameterError(f"unknown bandwidth rule '{self.kind}'")

    def __call__(self, n: int) -> float:
        if n < 1:
            raise ParameterError(f"n must be >= 1, got {n}")
        if self.kind == "paper":
            return math.sqrt(1.0 + 4.0 * self.p * (1.0 - self.p)) * (4.0 / (3.0 * n)) ** 0.2
        if self.kind == "fixed":
            return float(self.b)
        return float(self.c) * n ** (-float(self.exponent))

    @classmethod
    def parse(cls, text: str) -> "BandwidthRule":
        kind, _, arg = text.partition(":")
        kind = kind.strip()
        try:
            if kind == "paper":
                return cls("paper", p=float(arg)) if arg else cls("paper")
            if kind == "fixed":
                return cls("fixed", b=float(arg))
            if kind == "power":
                c, e = (float(v) for v in arg.split(","))
                return cls("power", c=c, exponent=e)
        except ValueError:
            raise ParameterError(f"cannot parse bandwidth '{text}'") from None
        raise ParameterError(f"unknown bandwidth rule '{text}'")

    def format(self) -> str:
        if self.kind == "paper":
            return f"paper:{self.p!r}"
        if self.kind == "fixed":
            return f"fixed:{self.b!r}"
        return f"power:{self.c!r},{self.exponent!r}"


def validate_bandwidth(rule: BandwidthRule, ns=(10**2, 10**3, 10**4, 10**5, 10**6)) -> dict:
    """Check b_n -> 0, n b_n -> inf and sqrt(n) b_n^2 -> 0 along ``ns``.

    Violations are reported and emitted as :class:`BandwidthWarning`; they
    never raise.
    """
    ns = np.asarray(ns, dtype=float)
    b = np.array([rule(int(n)) for n in ns])
    report = {
        "b": b,
        "b_decreasing": bool(np.all(np.diff(b) < 0)),
        "nb_increasing": bool(np.all(np.diff(ns * b) > 0)),
        "sqrt_n_b2_decreasing": bool(np.all(np.diff(np.sqrt(ns) * b**2) < 0)),
    }
    for key, msg in (("b_decreasing", "b_n does not decrease to 0"),
                     ("nb_increasing", "n * b_n does not grow"),
                     ("sqrt_n_b2_decreasing", "sqrt(n) * b_n^2 does not vanish")):
        if not report[key]:
            warnings.warn(f"bandwidth {rule.format()}: {msg}", BandwidthWarning, stacklevel=2)
    return report


@dataclass(frozen=True, eq=False)
class ThetaTransformed:
    y_theta: np.ndarray
    theta: tuple
    source: Sample


def theta_transform(sample: Sample, theta) -> ThetaTransformed:
    """Residuals ``y - (alpha + beta x)``."""
    alpha, beta = float(theta[0]), float(theta[1])
    return ThetaTransformed(sample.y - (alpha + beta * sample.x), (alpha, beta), sample)


def _check_b(b):
    if not b > 0:
        raise ParameterError(f"bandwidth must be positive, got {b}")


class _SortedCenters:
    """Prefix sums over sorted kernel centers for the triangular kernel."""

    def __init__(self, centers, weights=None):
        c = np.asarray(centers, dtype=float)
        order = np.argsort(c, kind="stable")
        self.shift = float(np.median(c))
        self.c = c[order] - self.shift
        w = np.ones_like(self.c) if weights is None else np.asarray(weights, float)[order]
        z = np.zeros(1)
        self.s0 = np.concatenate([z, np.cumsum(w)])
        self.s1 = np.concatenate([z, np.cumsum(w * self.c)])
        self.s2 = np.concatenate([z, np.cumsum(w * self.c * self.c)])

    def sums(self, t, b):
        """Return (sum w K((t-c)/b), sum w Kcdf((t-c)/b)) for the triangular kernel."""
        t = np.asarray(t, dtype=float) - self.shift
        lo, hi = t - b, t + b
        c = self.c
        i_a = np.searchsorted(c, lo, side="right")
        i_m = np.searchsorted(c, t, side="right")
        i_h = np.searchsorted(c, hi, side="left")
        i_h = np.maximum(i_h, i_m)
        i_m = np.maximum(i_m, i_a)

        def seg(s, i, j):
            return s[j] - s[i]

        w_a = self.s0[i_a]
        w_b, c1_b, c2_b = seg(self.s0, i_a, i_m), seg(self.s1, i_a, i_m), seg(self.s2, i_a, i_m)
        w_c, c1_c, c2_c = seg(self.s0, i_m, i_h), seg(self.s1, i_m, i_h), seg(self.s2, i_m, i_h)
        # rising side: s = c - lo in [0, b); falling side: r = hi - c in (0, b)
        s1 = c1_b - lo * w_b
        s2 = c2_b - 2.0 * lo * c1_b + lo * lo * w_b
        r1 = hi * w_c - c1_c
        r2 = hi * hi * w_c - 2.0 * hi * c1_c + c2_c
        pdf = (s1 + r1) / b
        cdf = w_a + (w_b - 0.5 * s2 / (b * b)) + 0.5 * r2 / (b * b)
        return pdf, cdf


def kernel_sums(kernel: KernelSpec, centers, t, b: float, weights=None, sorted_centers=None, parts="both"):
    """Averages over centers of ``w K((t-c)/b) / b`` and ``w Kcdf((t-c)/b)``.

    Returns ``(density_part, cdf_part)`` each divided by the number of centers.
    ``parts`` ("pdf" or "cdf") lets the Gaussian path skip the unused half;
    the skipped entry is returned as None.
    """
    if parts not in ("both", "pdf", "cdf"):
        raise ParameterError(f"parts must be both, pdf or cdf, got {parts!r}")
    _check_b(b)
    centers = np.asarray(centers, dtype=float)
    n = centers.size
    t = np.asarray(t, dtype=float)
    if kernel.kind == "triangular":
        sc = sorted_centers if sorted_centers is not None else _SortedCenters(centers, weights)
        pdf, cdf = sc.sums(t.ravel(), b)
        return (pdf / (n * b)).reshape(t.shape), (cdf / n).reshape(t.shape)
    flat = t.ravel()
    w = np.ones(n) if weights is None else np.asarray(weights, float)
    want_pdf, want_cdf = parts != "cdf", parts != "pdf"
    pdf = np.empty(flat.size)
    cdf = np.empty(flat.size)
    step = max(1, _BLOCK // max(n, 1))
    for s in range(0, flat.size, step):
        z = (flat[s:s + step, None] - centers[None, :]) / b
        if want_pdf:
            pdf[s:s + step] = kernel.k(z) @ w
        if want_cdf:
            cdf[s:s + step] = kernel.k_cdf(z) @ w
    return ((pdf / (n * b)).reshape(t.shape) if want_pdf else None,
            (cdf / n).reshape(t.shape) if want_cdf else None)


def kde_psi(data: ThetaTransformed, t, kernel: KernelSpec = TRIANGULAR, b: float = 1.0):
    """Kernel density estimate of the transformed responses."""
    return kernel_sums(kernel, data.y_theta, t, b, parts="pdf")[0]


def smoothed_cdf(data: ThetaTransformed, y, kernel: KernelSpec = TRIANGULAR, b: float = 1.0):
    """Integral of :func:`kde_psi` up to ``y``, in closed form."""
    return kernel_sums(kernel, data.y_theta, y, b, parts="cdf")[1]


def kde_psi_slope(data: ThetaTransformed, t, kernel: KernelSpec = TRIANGULAR, b: float = 1.0):
    """Derivative of :func:`smoothed_cdf` with respect to beta: (1/nb) sum x_i K((t - Y_i^theta)/b)."""
    return kernel_sums(kernel, data.y_theta, t, b, weights=data.source.x, parts="pdf")[0]


def _shift_average(fun, z, shifts, weights=None):
    """mean_i w_i fun(z + shift_i), vectorized over z."""
    z = np.asarray(z, dtype=float)
    flat = z.ravel()
    shifts = np.asarray(shifts, dtype=float)
    n = shifts.size
    w = np.ones(n) if weights is None else np.asarray(weights, float)
    out = np.empty(flat.size)
    step = max(1, _BLOCK // max(n, 1))
    for s in range(0, flat.size, step):
        out[s:s + step] = fun(flat[s:s + step, None] + shifts[None, :]) @ w
    return (out / n).reshape(z.shape)


def _offsets(sample: Sample, theta):
    return float(theta[0]) + float(theta[1]) * sample.x


def mc_I(sample: Sample, theta, f0: DistSpec, z):
    """Monte-Carlo density of the transformed known component: mean_i f0(z + theta.x_i)."""
    return _shift_average(f0.pdf, z, _offsets(sample, theta))


def mc_J(sample: Sample, theta, f0: DistSpec, y):
    """Monte-Carlo cdf of the transformed known component: mean_i F0(y + theta.x_i)."""
    return _shift_average(f0.cdf, y, _offsets(sample, theta))


def mc_j_slope(sample: Sample, theta, f0: DistSpec, y):
    """Derivative of :func:`mc_J` with respect to beta."""
    return _shift_average(f0.pdf, y, _offsets(sample, theta), weights=sample.x)


def _tilde_centers(sample: Sample, theta, eps0_sim):
    eps0_sim = np.asarray(eps0_sim, dtype=float)
    if eps0_sim.shape != sample.x.shape:
        raise ParameterError(
            f"simulated noise has length {eps0_sim.size}, sample has {sample.n}"
        )
    # the known component transforms to eps0 - theta.x, so the centers are mirrored
    return eps0_sim - _offsets(sample, theta)


def sim_I_tilde(sample: Sample, theta, eps0_sim, kernel: KernelSpec = GAUSSIAN, b: float = 1.0, t=0.0):
    """Kernel estimate of the transformed known-component density from simulated noise."""
    return kernel_sums(kernel, _tilde_centers(sample, theta, eps0_sim), t, b, parts="pdf")[0]


def sim_J_tilde(sample: Sample, theta, eps0_sim, kernel: KernelSpec = GAUSSIAN, b: float = 1.0, y=0.0):
    """Integral of :func:`sim_I_tilde` up to ``y``."""
    return kernel_sums(kernel, _tilde_centers(sample, theta, eps0_sim), y, b, parts="cdf")[1]


def simpson_grid(values, b: float, points: int = 2**10 + 1, pad: float = 5.0) -> np.ndarray:
    """Quadrature grid covering ``[min - pad b, max + pad b]``."""
    values = np.asarray(values, dtype=float)
    return np.linspace(values.min() - pad * b, values.max() + pad * b, points)
