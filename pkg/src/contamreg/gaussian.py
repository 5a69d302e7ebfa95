"""Closed-form results for the all-Gaussian instance of the model.

With f = N(0, m), f0 = N(0, m0) and X ~ N(mu_x, var_x), every
theta-transformed law is a two-component Gaussian mixture, so the population
contrast reduces to one-dimensional quadrature of normal cdfs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .contrast import NumericalError, as_triple
from .distributions import DistSpec
from .model import ParamBox, ParameterError, Vartheta

_TOL = 1e-10


@dataclass(frozen=True)
class GaussianModelSpec:
    m: float
    m0: float
    mu_x: float
    var_x: float
    vartheta_star: Vartheta

    def __post_init__(self):
        for name in ("m", "m0", "var_x"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be positive, got {v}")
        if not np.isfinite(self.mu_x):
            raise ParameterError("mu_x must be finite")
        if not isinstance(self.vartheta_star, Vartheta):
            object.__setattr__(self, "vartheta_star", Vartheta(*self.vartheta_star))

    @property
    def ex2(self) -> float:
        return self.mu_x**2 + self.var_x

    @property
    def ex3(self) -> float:
        return self.mu_x**3 + 3.0 * self.mu_x * self.var_x


def _components(spec: GaussianModelSpec, theta):
    """(mean, sd) of the regression and the known-noise components of Y^theta."""
    alpha, beta = (float(v) for v in theta)
    vs = spec.vartheta_star
    mean1 = -((alpha - vs.alpha) + (beta - vs.beta) * spec.mu_x)
    var1 = (beta - vs.beta) ** 2 * spec.var_x + spec.m
    mean0 = -(alpha + beta * spec.mu_x)
    var0 = beta**2 * spec.var_x + spec.m0
    return mean1, np.sqrt(var1), mean0, np.sqrt(var0)


def component_variances(spec: GaussianModelSpec, beta: float) -> tuple[float, float]:
    """Variances of the known-noise and regression components after transforming by beta."""
    bs = spec.vartheta_star.beta
    return beta**2 * spec.var_x + spec.m0, (beta - bs) ** 2 * spec.var_x + spec.m


def _npdf(y, mean, sd):
    z = (y - mean) / sd
    return np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * sd)


def population_psi(spec: GaussianModelSpec, theta, y):
    """Density of the theta-transformed response."""
    y = np.asarray(y, dtype=float)
    m1, s1, m0, s0 = _components(spec, theta)
    ps = spec.vartheta_star.p
    return ps * _npdf(y, m1, s1) + (1.0 - ps) * _npdf(y, m0, s0)


def population_F(spec: GaussianModelSpec, theta, y):
    y = np.asarray(y, dtype=float)
    m1, s1, m0, s0 = _components(spec, theta)
    ps = spec.vartheta_star.p
    return ps * special.ndtr((y - m1) / s1) + (1.0 - ps) * special.ndtr((y - m0) / s0)


def population_J(spec: GaussianModelSpec, theta, y):
    """Cdf of the known-noise component after the theta transformation."""
    y = np.asarray(y, dtype=float)
    _, _, m0, s0 = _components(spec, theta)
    return special.ndtr((y - m0) / s0)


def population_H(spec: GaussianModelSpec, vartheta, y):
    p, alpha, beta = as_triple(vartheta)
    th = (alpha, beta)
    y = np.asarray(y, dtype=float)
    fs = population_F(spec, th, y) + population_F(spec, th, -y)
    js = population_J(spec, th, y) + population_J(spec, th, -y)
    return fs / p - (1.0 - p) / p * js - 1.0


def population_d(spec: GaussianModelSpec, q: DistSpec, vartheta) -> float:
    """Integral of the squared population H against the weight law ``q``."""
    as_triple(vartheta)

    def integrand(y):
        h = population_H(spec, vartheta, y)
        return float(h * h * q.pdf(y))

    val, err, info = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-15, epsrel=1e-10,
                                    limit=400, full_output=True)[:3]
    if not np.isfinite(val):
        raise NumericalError(f"population contrast quadrature returned {val}")
    if err > max(1e-9, 1e-6 * abs(val)):
        raise NumericalError(f"population contrast quadrature did not converge (error estimate {err:.2e})")
    return max(float(val), 0.0)


def spurious_solution(spec: GaussianModelSpec) -> Vartheta | None:
    """Second zero of the population contrast, at p = 2 p*.

    It matches the two component variances and mirrors their means, which
    requires beta = beta*/2 + (m - m0) / (2 beta* var_x) and
    alpha = alpha*/2 + mu_x (m0 - m) / (2 beta* var_x).  Returns None when
    2 p* is not an admissible proportion or the slope vanishes.
    """
    vs = spec.vartheta_star
    if vs.beta == 0.0:
        raise ParameterError("beta* must be nonzero")
    p2 = 2.0 * vs.p
    if p2 >= 1.0:
        return None
    shift = (spec.m - spec.m0) / (2.0 * vs.beta * spec.var_x)
    beta2 = vs.beta / 2.0 + shift
    alpha2 = vs.alpha / 2.0 - spec.mu_x * shift
    if beta2 == 0.0:
        return None
    return Vartheta(p2, alpha2, beta2)


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    lhs: float
    rhs: float
    status: str  # "pass", "fail" or "undefined"
    note: str = ""


@dataclass
class ConditionReport:
    checks: list
    warnings: list = field(default_factory=list)

    def __getitem__(self, name) -> ConditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        lines = ["contrast conditions"]
        for c in self.checks:
            lines.append(f"  {c.name:<6} lhs={c.lhs:.6g} rhs={c.rhs:.6g}  {c.status.upper()}"
                         + (f"  ({c.note})" if c.note else ""))
        lines += [f"  warning: {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def check_contrast_conditions(spec: GaussianModelSpec) -> ConditionReport:
    """Evaluate the two moment conditions on the design and the error variances.

    (C i): 4 E(X)^3 + 3 E(X) E(X^2) + E(X^3) must be nonzero.
    (C iii): m must differ from m0 + (a^3 + 3a^2 b E(X) + 3 a b^2 E(X^2) + b^3 E(X^3)) / (3 (a + b E(X))).
    """
    mu = spec.mu_x
    ci = 4.0 * mu**3 + 3.0 * mu * spec.ex2 + spec.ex3
    checks = [ConditionCheck("C i", ci, 0.0, "pass" if abs(ci) > _TOL else "fail")]
    warnings = []
    if checks[0].status == "fail":
        warnings.append("condition C i fails (design mean zero?); the contrast may have a flat direction")
    a, b = spec.vartheta_star.alpha, spec.vartheta_star.beta
    denom = a + b * mu
    if abs(denom) <= _TOL:
        checks.append(ConditionCheck("C iii", spec.m, float("nan"), "undefined",
                                     "alpha* + beta* E(X) = 0, division by zero"))
    else:
        num = a**3 + 3 * a * a * b * mu + 3 * a * b * b * spec.ex2 + b**3 * spec.ex3
        rhs = spec.m0 + num / (3.0 * denom)
        checks.append(ConditionCheck("C iii", spec.m, rhs, "pass" if abs(spec.m - rhs) > _TOL else "fail"))
        if checks[-1].status == "fail":
            warnings.append("condition C iii fails: m equals the critical variance")
    return ConditionReport(checks, warnings)


@dataclass(frozen=True)
class MomentSystem:
    x: float
    t: float
    p2: float
    theta2_x: float
    m2: float
    singular: bool
    reason: str = ""


def identifiability_moment_system(spec: GaussianModelSpec, x: float) -> MomentSystem:
    """Alternative (p2, theta2.x, m2) matching the first three conditional moments at design point x.

    A competing solution would have to produce the same triple for every x;
    its dependence on x is what rules it out.
    """
    vs = spec.vartheta_star
    t = vs.alpha + vs.beta * float(x)
    m1, m0 = spec.m, spec.m0
    denom = 3.0 * m1 + t * t - 3.0 * m0
    nan = float("nan")
    if t == 0.0:
        return MomentSystem(float(x), t, nan, nan, nan, True, "theta*.x = 0")
    if denom == 0.0:
        return MomentSystem(float(x), t, nan, nan, nan, True, "3 m + (theta*.x)^2 - 3 m0 = 0")
    p2 = vs.p * 2.0 * t * t / denom
    theta2_x = t + (3.0 * m1 - t * t - 3.0 * m0) / (2.0 * t)
    m2 = m1 + (m1 + t * t - m0) * denom / (4.0 * t * t)
    return MomentSystem(float(x), t, p2, theta2_x, m2, False)


def spurious_in_box(spec: GaussianModelSpec, box: ParamBox) -> tuple[Vartheta | None, str]:
    """Spurious zero, if any, and a suggestion for shrinking ``box`` to exclude it."""
    sp = spurious_solution(spec)
    if sp is None:
        return None, "no spurious zero (2 p* is not an admissible proportion)"
    if not box.contains(sp):
        return sp, "spurious zero lies outside the box"
    ps = spec.vartheta_star.p
    cut = 0.5 * (ps + sp.p)
    return sp, (f"spurious zero lies inside the box; e.g. use p_hi < {cut:.4g} "
                f"(between p*={ps:g} and {sp.p:g}) to exclude it")


def gaussian_tail_bounds(t):
    """Mills-ratio bounds phi(t)(1/t - 1/t^3) <= 1 - Phi(t) <= phi(t)/t for t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ParameterError("tail bounds need t > 0")
    phi = np.exp(-0.5 * t * t) / np.sqrt(2.0 * np.pi)
    return phi * (1.0 / t - 1.0 / t**3), phi / t
