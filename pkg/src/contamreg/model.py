"""Parameters, samples and data generation for the contaminated regression model.

Observations are generated in the centered form: with probability ``1 - p``
the response is pure known noise, otherwise it follows the line
``alpha + beta * x`` plus an unknown symmetric error.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distributions import DistSpec, DistributionError, Gaussian, asymmetric_error

STREAMS = ("design", "labels", "errors", "q", "eps0")


class ParameterError(ValueError):
    """A parameter violates its domain invariants."""


class DataFormatError(ValueError):
    """Raised when a dataset file cannot be parsed."""


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        # fresh copy: spawn() advances a counter on the original
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key)
    return np.random.SeedSequence(seed)


def rng_streams(seed) -> dict[str, np.random.Generator]:
    """Split one master seed into independent named generators.

    The same seed always yields the same stream for a given name, whichever
    other streams are consumed.
    """
    children = _seed_sequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def _stream(seed, name):
    return rng_streams(seed)[name]


@dataclass(frozen=True)
class Vartheta:
    """Euclidean parameter (p, alpha, beta); ``theta`` is the regression pair."""

    p: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ParameterError(f"p must lie in (0, 1), got {self.p}")
        if self.beta == 0.0:
            raise ParameterError("beta must be nonzero")
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ParameterError("alpha and beta must be finite")

    @property
    def theta(self) -> tuple[float, float]:
        return (self.alpha, self.beta)

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.alpha, self.beta], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Vartheta":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class ParamBox:
    """Compact box [p_lo, p_hi] x [alpha_lo, alpha_hi] x [beta_lo, beta_hi]."""

    p_lo: float
    p_hi: float
    alpha_lo: float
    alpha_hi: float
    beta_lo: float
    beta_hi: float

    def __post_init__(self):
        if not (0.0 < self.p_lo <= self.p_hi < 1.0):
            raise ParameterError(f"need 0 < p_lo <= p_hi < 1, got [{self.p_lo}, {self.p_hi}]")
        if self.alpha_lo > self.alpha_hi:
            raise ParameterError(f"empty alpha interval [{self.alpha_lo}, {self.alpha_hi}]")
        if self.beta_lo > self.beta_hi:
            raise ParameterError(f"empty beta interval [{self.beta_lo}, {self.beta_hi}]")
        if not (self.beta_lo > 0.0 or self.beta_hi < 0.0):
            raise ParameterError(f"beta interval [{self.beta_lo}, {self.beta_hi}] must exclude 0")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.p_lo, self.alpha_lo, self.beta_lo])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.p_hi, self.alpha_hi, self.beta_hi])

    @property
    def delta(self) -> float:
        """Smallest admissible p, the ``delta`` of [delta, 1 - delta]."""
        return min(self.p_lo, 1.0 - self.p_hi)

    def contains(self, v) -> bool:
        a = v.as_array() if isinstance(v, Vartheta) else np.asarray(v, float)
        return bool(np.all(a >= self.lower) and np.all(a <= self.upper))

    def project(self, a) -> np.ndarray:
        return np.clip(np.asarray(a, float), self.lower, self.upper)

    def lattice(self, k: int = 3) -> list[np.ndarray]:
        """k^3 interior starting points at fractions (i + 1) / (k + 1) of each edge."""
        fr = (np.arange(k) + 1.0) / (k + 1.0)
        lo, hi = self.lower, self.upper
        axes = [lo[j] + fr * (hi[j] - lo[j]) for j in range(3)]
        return [np.array([p, a, b]) for p in axes[0] for a in axes[1] for b in axes[2]]

    @classmethod
    def parse(cls, text: str) -> "ParamBox":
        vals = [float(v) for v in text.split(",")]
        if len(vals) != 6:
            raise ParameterError(f"box needs 6 comma-separated values, got {len(vals)}")
        return cls(*vals)

    def format(self) -> str:
        return ",".join(repr(float(v)) for v in (self.p_lo, self.p_hi, self.alpha_lo,
                                                 self.alpha_hi, self.beta_lo, self.beta_hi))


@dataclass(frozen=True, eq=False)
class Sample:
    """Paired design and response vectors, with optional latent labels."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 1:
            raise ParameterError(f"x and y must be non-empty vectors of equal length, got {x.shape}, {y.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.u is not None:
            u = np.asarray(self.u)
            if u.shape != x.shape:
                raise ParameterError("labels must have the same length as x")
            if not np.all((u == 0) | (u == 1)):
                raise ParameterError("labels must be 0 or 1")
            object.__setattr__(self, "u", u.astype(np.int8))

    @property
    def n(self) -> int:
        return self.x.size

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        with_u = self.u is not None
        buf.write("x,y,u\n" if with_u else "x,y\n")
        for i in range(self.n):
            row = f"{self.x[i]:.17g},{self.y[i]:.17g}"
            if with_u:
                row += f",{int(self.u[i])}"
            buf.write(row + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "Sample":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise DataFormatError(f"{path}: cannot read ({exc.strerror})") from None
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise DataFormatError(f"{path}: empty file")
        header = [h.strip() for h in rows[0]]
        if header not in (["x", "y"], ["x", "y", "u"]):
            raise DataFormatError(f"{path}: line 1: expected header 'x,y' or 'x,y,u', got {','.join(header)!r}")
        xs, ys, us = [], [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataFormatError(f"{path}: line {lineno}: non-numeric field in {row!r}") from None
            if not all(np.isfinite(vals)):
                raise DataFormatError(f"{path}: line {lineno}: non-finite value")
            xs.append(vals[0])
            ys.append(vals[1])
            if len(header) == 3:
                if vals[2] not in (0.0, 1.0):
                    raise DataFormatError(f"{path}: line {lineno}: label must be 0 or 1")
                us.append(int(vals[2]))
        if not xs:
            raise DataFormatError(f"{path}: no data rows")
        return cls(np.array(xs), np.array(ys), np.array(us) if us else None)


def simulate(n: int, vartheta_star: Vartheta, f0: DistSpec, f1: DistSpec, design: DistSpec,
             seed) -> Sample:
    """Draw ``n`` observations from the centered contaminated regression model."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if not isinstance(vartheta_star, Vartheta):
        vartheta_star = Vartheta(*vartheta_star)
    streams = rng_streams(seed)
    x = design.checked_sample(streams["design"], n)
    u = (streams["labels"].random(n) < vartheta_star.p).astype(np.int8)
    err = streams["errors"]
    eps0 = f0.checked_sample(err, n)
    eps1 = f1.checked_sample(err, n)
    y = np.where(u == 1, vartheta_star.alpha + vartheta_star.beta * x + eps1, eps0)
    return Sample(x, y, u)


def simulate_asymmetric(n: int, p_star: float, beta_star: float, lam: float, design: DistSpec,
                        seed, alpha_star: float = 0.0, f0: DistSpec | None = None) -> Sample:
    """Sample with a skewed, mean-zero error law on the regression component."""
    if not 0.0 < lam < 1.0:
        raise DistributionError(f"lambda must lie in (0, 1), got {lam}")
    return simulate(n, Vartheta(p_star, alpha_star, beta_star), f0 or Gaussian(0.0, 1.0),
                    asymmetric_error(lam), design, seed)


def sample_weight_points(n: int, q: DistSpec, seed) -> np.ndarray:
    """Frozen draws from the instrumental weight law, reused for every contrast evaluation."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return q.checked_sample(_stream(seed, "q"), n)


def simulate_known_noise(n: int, f0: DistSpec, seed) -> np.ndarray:
    """Simulated draws from the known error law, used by the plug-in estimators."""
    return f0.checked_sample(_stream(seed, "eps0"), n)


def center(sample: Sample, a0: float, b0: float) -> Sample:
    """Remove a known reference line ``a0 + b0 x`` from the responses."""
    return Sample(sample.x, sample.y - (a0 + b0 * sample.x), sample.u)
