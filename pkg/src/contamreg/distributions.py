"""Univariate distributions used as error laws, design laws and weight laws.

Every distribution exposes ``pdf``, ``cdf``, ``quantile`` and ``sample``,
all vectorized over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.optimize import brentq

_SQRT_2PI = np.sqrt(2.0 * np.pi)


class DistributionError(ValueError):
    """Raised for malformed distribution specifications or non-finite draws."""


class DistSpec:
    """Base class; subclasses implement the four evaluation methods."""

    name = "dist"
    symmetric = False

    def pdf(self, t):
        raise NotImplementedError

    def cdf(self, t):
        raise NotImplementedError

    def quantile(self, u):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.quantile(rng.random(size))

    def checked_sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        draws = np.asarray(self.sample(rng, size), dtype=float)
        if not np.all(np.isfinite(draws)):
            raise DistributionError(f"non-finite draws from distribution {self.describe()}")
        return draws

    def describe(self) -> str:
        return self.name


@dataclass(frozen=True)
class Gaussian(DistSpec):
    """N(mean, variance); the second argument is a variance."""

    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.variance)) or self.variance <= 0:
            raise DistributionError(
                f"gaussian needs finite mean and positive variance, got ({self.mean}, {self.variance})"
            )

    name = "gaussian"

    @property
    def symmetric(self) -> bool:  # about zero
        return self.mean == 0.0

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.variance))

    def pdf(self, t):
        z = (np.asarray(t, dtype=float) - self.mean) / self.sd
        return np.exp(-0.5 * z * z) / (_SQRT_2PI * self.sd)

    def cdf(self, t):
        return special.ndtr((np.asarray(t, dtype=float) - self.mean) / self.sd)

    def quantile(self, u):
        return self.mean + self.sd * special.ndtri(np.asarray(u, dtype=float))

    def sample(self, rng, size):
        return self.mean + self.sd * rng.standard_normal(size)

    def describe(self) -> str:
        return f"gaussian(mean={self.mean:g}, variance={self.variance:g})"


@dataclass(frozen=True)
class GaussianMixture(DistSpec):
    """Finite mixture of Gaussians, parametrized by component variances."""

    weights: tuple
    means: tuple
    variances: tuple
    name = "gaussian-mixture"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        v = np.asarray(self.variances, dtype=float)
        if not (w.shape == m.shape == v.shape) or w.ndim != 1 or w.size == 0:
            raise DistributionError("mixture weights, means and variances must be equal-length vectors")
        if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-12):
            raise DistributionError(f"mixture weights must be nonnegative and sum to 1, got {self.weights}")
        if np.any(v <= 0) or not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise DistributionError("mixture variances must be positive and finite")

    @property
    def _arrays(self):
        return (np.asarray(self.weights, float), np.asarray(self.means, float),
                np.sqrt(np.asarray(self.variances, float)))

    @property
    def symmetric(self) -> bool:
        w, m, s = self._arrays
        comps = sorted(zip(m, s, w))
        mirrored = sorted(zip(-m, s, w))
        return bool(np.allclose(comps, mirrored))

    def mean(self) -> float:
        w, m, _ = self._arrays
        return float(w @ m)

    def variance(self) -> float:
        w, m, s = self._arrays
        mu = w @ m
        return float(w @ (s**2 + m**2) - mu**2)

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        w, m, s = self._arrays
        out = np.zeros_like(t)
        for wk, mk, sk in zip(w, m, s):
            z = (t - mk) / sk
            out = out + wk * np.exp(-0.5 * z * z) / (_SQRT_2PI * sk)
        return out

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        w, m, s = self._arrays
        out = np.zeros_like(t)
        for wk, mk, sk in zip(w, m, s):
            out = out + wk * special.ndtr((t - mk) / sk)
        return out

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        _, m, s = self._arrays
        lo, hi = float(np.min(m - 40 * s)), float(np.max(m + 40 * s))
        flat = u.ravel()
        out = np.empty_like(flat)
        for i, ui in enumerate(flat):
            if ui <= 0.0:
                out[i] = -np.inf
            elif ui >= 1.0:
                out[i] = np.inf
            else:
                out[i] = brentq(lambda x: float(self.cdf(x)) - ui, lo, hi, xtol=1e-14)
        return out.reshape(u.shape)

    def sample(self, rng, size):
        w, m, s = self._arrays
        comp = rng.choice(w.size, size=size, p=w)
        return m[comp] + s[comp] * rng.standard_normal(size)

    def describe(self) -> str:
        return f"gaussian-mixture(weights={self.weights}, means={self.means}, variances={self.variances})"


@dataclass(frozen=True)
class TabulatedDist(DistSpec):
    """Density given on a grid, linearly interpolated, zero outside the grid.

    The table is renormalized so that the trapezoid integral equals one.
    """

    grid: tuple
    density: tuple
    name = "user-table"
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _dens: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if g.ndim != 1 or g.shape != d.shape or g.size < 2:
            raise DistributionError("table grid and density must be equal-length vectors of size >= 2")
        if np.any(np.diff(g) <= 0) or not np.all(np.isfinite(g)):
            raise DistributionError("table grid must be strictly increasing and finite")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise DistributionError("table density must be nonnegative and finite")
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(g))])
        if cum[-1] <= 0:
            raise DistributionError("table density integrates to zero")
        object.__setattr__(self, "_dens", d / cum[-1])
        object.__setattr__(self, "_cum", cum / cum[-1])

    @property
    def symmetric(self) -> bool:
        g = np.asarray(self.grid, float)
        return bool(np.allclose(g, -g[::-1]) and np.allclose(self._dens, self._dens[::-1]))

    def pdf(self, t):
        return np.interp(np.asarray(t, float), np.asarray(self.grid, float), self._dens, left=0.0, right=0.0)

    def cdf(self, t):
        t = np.asarray(t, float)
        g = np.asarray(self.grid, float)
        d = self._dens
        idx = np.clip(np.searchsorted(g, t, side="right") - 1, 0, g.size - 2)
        dx = np.clip(t - g[idx], 0.0, g[idx + 1] - g[idx])
        slope = (d[idx + 1] - d[idx]) / (g[idx + 1] - g[idx])
        out = self._cum[idx] + d[idx] * dx + 0.5 * slope * dx * dx
        return np.clip(np.where(t < g[0], 0.0, np.where(t >= g[-1], 1.0, out)), 0.0, 1.0)

    def quantile(self, u):
        u = np.asarray(u, float)
        g = np.asarray(self.grid, float)
        # piecewise-linear inverse of the cdf on a refined grid is accurate to O(h^2)
        fine = np.linspace(g[0], g[-1], 64 * g.size)
        cdf = self.cdf(fine)
        keep = np.concatenate([[True], np.diff(cdf) > 0])
        return np.interp(u, cdf[keep], fine[keep])

    def describe(self) -> str:
        return f"user-table({len(self.grid)} points on [{self.grid[0]:g}, {self.grid[-1]:g}])"


def asymmetric_error(lam: float) -> GaussianMixture:
    """Two-component error law with mean zero that is symmetric only at ``lam = 0.5``.

    Components N(-0.7, sd 1/sqrt(2)) with weight ``lam`` and
    N(0.7 lam / (1 - lam), sd 1/sqrt(2)) with weight ``1 - lam``.
    """
    if not 0.0 < lam < 1.0:
        raise DistributionError(f"lambda must lie in (0, 1), got {lam}")
    return GaussianMixture(
        weights=(lam, 1.0 - lam),
        means=(-0.7, 0.7 * lam / (1.0 - lam)),
        variances=(0.5, 0.5),
    )


def parse_dist(text: str) -> DistSpec:
    """Parse ``normal:<mean>,<variance>`` (alias ``gaussian``) or ``mixture:w1/m1/v1;w2/m2/v2``."""
    kind, _, args = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind in ("normal", "gaussian", "n"):
            mean, var = (float(a) for a in args.split(","))
            return Gaussian(mean, var)
        if kind == "mixture":
            parts = [tuple(float(v) for v in comp.split("/")) for comp in args.split(";")]
            w, m, v = zip(*parts)
            return GaussianMixture(tuple(w), tuple(m), tuple(v))
    except (ValueError, TypeError) as exc:
        raise DistributionError(f"cannot parse distribution '{text}': {exc}") from None
    raise DistributionError(f"unknown distribution kind '{kind}' in '{text}'")


def format_dist(dist: DistSpec) -> str:
    if isinstance(dist, Gaussian):
        return f"normal:{dist.mean!r},{dist.variance!r}"
    if isinstance(dist, GaussianMixture):
        return "mixture:" + ";".join(
            f"{w!r}/{m!r}/{v!r}" for w, m, v in zip(dist.weights, dist.means, dist.variances)
        )
    return dist.describe()
