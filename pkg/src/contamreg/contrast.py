"""Symmetry contrast d_n and its closed-form gradient.

For a candidate (p, alpha, beta) the inverted cdf of the unknown error law is

    H1(y) = F(y) / p - (1 - p) / p * J(y)

and its reflection is H2(y) = 1 - H1(-y).  The contrast averages the squared
difference H = H1 - H2 over frozen draws V_i of the weight law.  Here F is
the kernel-smoothed cdf of the residuals y - (alpha + beta x) and J is the
Monte-Carlo cdf of the known component pushed through the same residual map.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import density as de
from .distributions import DistSpec
from .model import ParameterError, Sample, sample_weight_points, simulate_known_noise


class NumericalError(ArithmeticError):
    """A computation produced non-finite values."""


@dataclass(frozen=True)
class HValue:
    h1: np.ndarray
    h2: np.ndarray
    h: np.ndarray


def as_triple(vartheta) -> tuple[float, float, float]:
    if hasattr(vartheta, "as_array"):
        vartheta = vartheta.as_array()
    p, alpha, beta = (float(v) for v in vartheta)
    if not p > 0.0:
        raise ParameterError(f"p must be positive, got {p}")
    return p, alpha, beta


@dataclass(frozen=True)
class _ThetaEval:
    """Estimator values at the stacked points (V, -V) for one theta."""

    F: np.ndarray
    psi: np.ndarray
    psi_beta: np.ndarray
    J: np.ndarray
    I: np.ndarray
    j_beta: np.ndarray


class ContrastContext:
    """Data, frozen weight points and smoothing choices for one estimation run.

    Everything but the per-theta memo is fixed at construction; the memo is
    guarded by a lock so a context may be shared between threads.
    """

    def __init__(self, sample: Sample, v_points, f0: DistSpec, kernel: de.KernelSpec = de.TRIANGULAR,
                 bandwidth: de.BandwidthRule = de.BandwidthRule(), eps0_sim=None,
                 tilde_kernel: de.KernelSpec = de.GAUSSIAN, cache_size: int = 64):
        self.sample = sample
        self.v_points = np.array(v_points, dtype=float)
        self.v_points.setflags(write=False)
        if self.v_points.ndim != 1 or self.v_points.size < 1:
            raise ParameterError("weight points must be a non-empty vector")
        self.f0 = f0
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.b = bandwidth(sample.n)
        self.tilde_kernel = tilde_kernel
        self.eps0_sim = None if eps0_sim is None else np.array(eps0_sim, dtype=float)
        if self.eps0_sim is not None and self.eps0_sim.shape != sample.x.shape:
            raise ParameterError("simulated known-noise sample must match the sample size")
        self._points = np.concatenate([self.v_points, -self.v_points])
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    @classmethod
    def build(cls, sample: Sample, f0: DistSpec, q: DistSpec, seed, m: int | None = None, **kw):
        """Draw the weight points and the simulated known noise from ``seed``."""
        v = sample_weight_points(m or sample.n, q, seed)
        eps0 = simulate_known_noise(sample.n, f0, seed)
        return cls(sample, v, f0, eps0_sim=eps0, **kw)

    @property
    def m(self) -> int:
        return self.v_points.size

    def transformed(self, theta) -> de.ThetaTransformed:
        return de.theta_transform(self.sample, theta)

    def _evaluate(self, alpha: float, beta: float) -> _ThetaEval:
        key = (np.float64(alpha).tobytes(), np.float64(beta).tobytes())
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        data = self.transformed((alpha, beta))
        pts, b, x = self._points, self.b, self.sample.x
        if self.kernel.kind == "triangular":
            plain = de._SortedCenters(data.y_theta)
            slope = de._SortedCenters(data.y_theta, x)
            psi, F = de.kernel_sums(self.kernel, data.y_theta, pts, b, sorted_centers=plain)
            psi_beta = de.kernel_sums(self.kernel, data.y_theta, pts, b, sorted_centers=slope)[0]
        else:
            psi, F = de.kernel_sums(self.kernel, data.y_theta, pts, b)
            psi_beta = de.kernel_sums(self.kernel, data.y_theta, pts, b, weights=x, parts="pdf")[0]
        theta = (alpha, beta)
        ev = _ThetaEval(
            F=F, psi=psi, psi_beta=psi_beta,
            J=de.mc_J(self.sample, theta, self.f0, pts),
            I=de.mc_I(self.sample, theta, self.f0, pts),
            j_beta=de.mc_j_slope(self.sample, theta, self.f0, pts),
        )
        with self._lock:
            self._cache[key] = ev
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return ev

    def clear_cache(self):
        with self._lock:
            self._cache.clear()

    def _fold(self, a):
        """a(V) + a(-V) from the stacked evaluation."""
        m = self.m
        return a[:m] + a[m:]

    def h_components(self, y, vartheta) -> HValue:
        """H1, H2 and H at arbitrary points ``y``."""
        p, alpha, beta = as_triple(vartheta)
        y = np.asarray(y, dtype=float)
        pts = np.concatenate([y.ravel(), -y.ravel()])
        data = self.transformed((alpha, beta))
        F = de.smoothed_cdf(data, pts, self.kernel, self.b)
        J = de.mc_J(self.sample, (alpha, beta), self.f0, pts)
        k = y.size
        h1 = F[:k] / p - (1.0 - p) / p * J[:k]
        h2 = 1.0 - F[k:] / p + (1.0 - p) / p * J[k:]
        return HValue(h1.reshape(y.shape), h2.reshape(y.shape), (h1 - h2).reshape(y.shape))

    def h_at_weights(self, vartheta) -> np.ndarray:
        """H(V_i) for every frozen weight point."""
        p, alpha, beta = as_triple(vartheta)
        ev = self._evaluate(alpha, beta)
        return self._fold(ev.F) / p - (1.0 - p) / p * self._fold(ev.J) - 1.0

    def d_n(self, vartheta) -> float:
        h = self.h_at_weights(vartheta)
        val = float(np.mean(h * h))
        if not np.isfinite(val):
            raise NumericalError(f"non-finite contrast at {as_triple(vartheta)}")
        return val

    def value_and_grad(self, vartheta) -> tuple[float, np.ndarray]:
        p, alpha, beta = as_triple(vartheta)
        ev = self._evaluate(alpha, beta)
        Fs, Js = self._fold(ev.F), self._fold(ev.J)
        r = (1.0 - p) / p
        h = Fs / p - r * Js - 1.0
        dh_dp = -(Fs - Js) / (p * p)
        # F depends on alpha through Kcdf((y - Y_i + alpha + beta x_i) / b), J through F0(y + alpha + beta x_i)
        dh_da = self._fold(ev.psi) / p - r * self._fold(ev.I)
        dh_db = self._fold(ev.psi_beta) / p - r * self._fold(ev.j_beta)
        value = float(np.mean(h * h))
        grad = 2.0 * np.array([np.mean(h * dh_dp), np.mean(h * dh_da), np.mean(h * dh_db)])
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise NumericalError(f"non-finite contrast or gradient at {(p, alpha, beta)}")
        return value, grad

    def grad_d_n(self, vartheta) -> np.ndarray:
        """Partials of d_n in (p, alpha, beta)."""
        return self.value_and_grad(vartheta)[1]


def h_components(ctx: ContrastContext, y, vartheta) -> HValue:
    return ctx.h_components(y, vartheta)


def d_n(ctx: ContrastContext, vartheta) -> float:
    return ctx.d_n(vartheta)


def grad_d_n(ctx: ContrastContext, vartheta) -> np.ndarray:
    return ctx.grad_d_n(vartheta)
