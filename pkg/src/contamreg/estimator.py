"""M-estimation of (p, alpha, beta): projected gradient descent, multi-start,
choice among several local minima, and plug-in estimates of the error law.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

from . import density as de
from .contrast import ContrastContext, NumericalError, as_triple
from .model import ParamBox, ParameterError, Vartheta


class ConfigError(ValueError):
    """Invalid optimizer configuration."""


@dataclass(frozen=True)
class OptimConfig:
    """Tuning of the descent ``theta <- proj(theta - gamma * grad)``.

    ``fix_alpha`` holds the intercept at a constant and optimizes (p, beta)
    only.  ``lattice`` adds k^3 interior starts of the box to ``starts``
    (0 disables them).
    """

    delta_init: tuple = (0.01, 0.01, 0.01)
    eps_stop: float = 0.005
    gamma: tuple = (0.2, 0.5, 0.5)
    max_iters: int = 500
    starts: tuple = ()
    lattice: int = 3
    fix_alpha: float | None = None
    backtrack: bool = True
    max_halvings: int = 30

    def __post_init__(self):
        # plain floats keep reprs (manifests, config echoes) stable
        object.__setattr__(self, "starts", tuple(tuple(float(v) for v in st) for st in self.starts))
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if not self.eps_stop > 0:
            raise ConfigError(f"eps_stop must be positive, got {self.eps_stop}")
        if len(self.gamma) != 3 or not all(g > 0 for g in self.gamma):
            raise ConfigError(f"gamma must be three positive step scales, got {self.gamma}")
        if len(self.delta_init) != 3:
            raise ConfigError("delta_init must have three components")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.lattice < 0:
            raise ConfigError("lattice must be >= 0")

    @classmethod
    def table_protocol(cls, start, fix_alpha: float | None = 0.0) -> "OptimConfig":
        """Hand-tuned single-start protocol: delta 0.01, eps 0.005, gamma (0.2, 0.5)."""
        return cls(delta_init=(0.01, 0.0 if fix_alpha is not None else 0.01, 0.01),
                   eps_stop=0.005, gamma=(0.2, 0.5, 0.5), starts=(tuple(start),), lattice=0,
                   fix_alpha=fix_alpha, backtrack=False)

    def start_points(self, box: ParamBox) -> list[np.ndarray]:
        pts = [np.asarray(s, dtype=float) for s in self.starts]
        if self.lattice:
            pts += box.lattice(self.lattice)
        return pts


@dataclass(frozen=True)
class Minimum:
    vartheta: Vartheta
    d_value: float
    l1_score: float = float("nan")


@dataclass
class Run:
    start: np.ndarray
    theta: np.ndarray
    d_value: float
    iterations: int
    converged: bool
    path: list = field(default_factory=list)


@dataclass
class EstimateReport:
    vartheta_hat: Vartheta
    d_value: float
    iterations: int
    converged: bool
    all_minima: list
    selected_by: str
    boundary: tuple = (False, False, False)
    path: list = field(default_factory=list)

    CSV_HEADER = "p_hat,alpha_hat,beta_hat,d_value,iterations,converged,selected_by"

    def csv_row(self) -> str:
        v = self.vartheta_hat
        return (f"{v.p:.17g},{v.alpha:.17g},{v.beta:.17g},{self.d_value:.17g},"
                f"{self.iterations},{int(self.converged)},{self.selected_by}")

    def to_text(self) -> str:
        v = self.vartheta_hat
        lines = [
            "estimate",
            f"  p_hat      {v.p:.6f}",
            f"  alpha_hat  {v.alpha:.6f}",
            f"  beta_hat   {v.beta:.6f}",
            f"  d_n        {self.d_value:.6e}",
            f"  iterations {self.iterations}",
            f"  converged  {self.converged}",
            f"  selected   {self.selected_by}",
            f"  at bound   p={self.boundary[0]} alpha={self.boundary[1]} beta={self.boundary[2]}",
            f"minima ({len(self.all_minima)})",
        ]
        for mn in self.all_minima:
            w = mn.vartheta
            lines.append(f"  ({w.p:.4f}, {w.alpha:.4f}, {w.beta:.4f})  d_n={mn.d_value:.4e}  l1={mn.l1_score:.4f}")
        return "\n".join(lines) + "\n"


def descend(ctx, box: ParamBox, cfg: OptimConfig, start) -> Run:
    """One projected-gradient run from ``start``; stops when the step is below ``eps_stop``."""
    free = np.array([True, cfg.fix_alpha is None, True])
    gamma = np.asarray(cfg.gamma, float) * free
    delta = np.asarray(cfg.delta_init, float) * free

    def proj(a):
        a = box.project(a)
        if cfg.fix_alpha is not None:
            a[1] = cfg.fix_alpha
        return a

    th1 = proj(start)
    th2 = proj(th1 + delta)
    path = [th1.copy(), th2.copy()]
    it = 0
    while np.linalg.norm(th2 - th1) > cfg.eps_stop and it < cfg.max_iters:
        th1 = th2
        d1, g = ctx.value_and_grad(th1)
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at iterate {th1}")
        step = gamma * g
        th2 = proj(th1 - step)
        if cfg.backtrack:
            k = 0
            while ctx.d_n(th2) > d1 and k < cfg.max_halvings:
                step = 0.5 * step
                th2 = proj(th1 - step)
                k += 1
        path.append(th2.copy())
        it += 1
    converged = bool(np.linalg.norm(th2 - th1) <= cfg.eps_stop)
    return Run(np.asarray(start, float), th2, ctx.d_n(th2), it, converged, path)


def _cluster(runs: list[Run], radius: float) -> list[list[Run]]:
    ordered = sorted(runs, key=lambda r: (r.d_value, tuple(r.theta)))
    clusters: list[list[Run]] = []
    for r in ordered:
        for cl in clusters:
            if np.sum(np.abs(cl[0].theta - r.theta)) <= radius:
                cl.append(r)
                break
        else:
            clusters.append([r])
    return clusters


def minimize(ctx, box: ParamBox, cfg: OptimConfig, select: bool = True) -> EstimateReport:
    """Minimize d_n over ``box`` from every configured start.

    Stabilized points closer than ``2 eps_stop`` in l1 are merged.  With
    several distinct minima the joint-density L1 rule picks one when
    ``select`` is set (and the context can build plug-in densities);
    otherwise the smallest d_n wins.
    """
    starts = cfg.start_points(box)
    if not starts:
        raise ConfigError("no starting points: give starts or a positive lattice")
    runs = [descend(ctx, box, cfg, s) for s in starts]
    clusters = _cluster(runs, 2.0 * cfg.eps_stop)
    reps = [cl[0] for cl in clusters]
    minima = [Minimum(Vartheta.from_array(r.theta), r.d_value) for r in reps]
    chosen = 0
    selected_by = "single-minimum"
    if len(reps) > 1:
        can_score = getattr(ctx, "eps0_sim", None) is not None and isinstance(ctx, ContrastContext)
        if select and can_score:
            scores = l1_scores(ctx, [m.vartheta for m in minima])
            minima = [Minimum(m.vartheta, m.d_value, s) for m, s in zip(minima, scores)]
            chosen = _argmin_with_ties(minima)
            selected_by = "l1-rule"
        else:
            selected_by = "min-d"
    best = reps[chosen]
    boundary = tuple(bool(np.isclose(best.theta[j], box.lower[j]) or np.isclose(best.theta[j], box.upper[j]))
                     for j in range(3))
    if cfg.fix_alpha is not None:
        boundary = (boundary[0], False, boundary[2])
    return EstimateReport(
        vartheta_hat=minima[chosen].vartheta, d_value=best.d_value, iterations=best.iterations,
        converged=best.converged, all_minima=minima, selected_by=selected_by, boundary=boundary,
        path=best.path,
    )


def _argmin_with_ties(minima: list[Minimum]) -> int:
    keys = [(m.l1_score, m.d_value, tuple(m.vartheta.as_array())) for m in minima]
    return min(range(len(keys)), key=keys.__getitem__)


def l1_scores(ctx: ContrastContext, candidates, gx: int = 64, gy: int = 128) -> list[float]:
    """L1 distance on the (x, y) plane between a model-free joint density
    estimate and the joint density implied by each candidate.

    The model side is h(x) [p f(y - alpha - beta x) + (1 - p) f0(y)] with h a
    kernel estimate of the design density and f the plug-in estimate.  Both
    sides use the same Gaussian smoothing in x and y.
    """
    s = ctx.sample
    n = s.n
    x, y = s.x, s.y
    scale = n ** (-1.0 / 6.0)
    bx = max(np.std(x), 1e-12) * scale
    by = max(np.std(y), 1e-12) * scale
    xg = np.linspace(x.min() - 3 * bx, x.max() + 3 * bx, gx)
    yg = np.linspace(y.min() - 3 * by, y.max() + 3 * by, gy)
    dx, dy = xg[1] - xg[0], yg[1] - yg[0]
    kx = de.GAUSSIAN.k((xg[:, None] - x[None, :]) / bx) / bx
    ky = de.GAUSSIAN.k((yg[:, None] - y[None, :]) / by) / by
    g_emp = kx @ ky.T / n
    h_hat = kx.mean(axis=1)
    f0_y = ctx.f0.pdf(yg)
    scores = []
    for cand in candidates:
        p, alpha, beta = as_triple(cand)
        resid = yg[None, :] - (alpha + beta * xg[:, None])
        rgrid = np.linspace(resid.min(), resid.max(), 1025)
        f_hat = plugin_f_hat(ctx, (p, alpha, beta), rgrid)
        cond = p * np.interp(resid, rgrid, f_hat) + (1.0 - p) * f0_y[None, :]
        cond = gaussian_filter1d(cond, by / dy, axis=1, mode="constant")
        g_mod = h_hat[:, None] * cond
        scores.append(float(np.sum(np.abs(g_emp - g_mod)) * dx * dy))
    return scores


def select_among_minima(ctx: ContrastContext, minima) -> Vartheta:
    """Pick the candidate whose implied joint density is L1-closest to the data.

    Ties go to the smaller d_n, then to the lexicographically smaller parameter.
    """
    cands = [m if isinstance(m, Minimum) else Minimum(m if isinstance(m, Vartheta) else Vartheta(*m),
                                                      float("nan")) for m in minima]
    if not cands:
        raise ConfigError("no candidate minima")
    if len(cands) == 1:
        return cands[0].vartheta
    scores = np.array(l1_scores(ctx, [c.vartheta for c in cands]))
    tied = [i for i in range(len(cands)) if np.isclose(scores[i], scores.min(), rtol=1e-12, atol=0.0)]
    if len(tied) == 1:
        return cands[tied[0]].vartheta
    # d_n is only needed to break ties
    keyed = [Minimum(cands[i].vartheta,
                     ctx.d_n(cands[i].vartheta) if np.isnan(cands[i].d_value) else cands[i].d_value,
                     float(scores.min())) for i in tied]
    return keyed[_argmin_with_ties(keyed)].vartheta


def _plugin_p(vartheta):
    p, alpha, beta = as_triple(vartheta)
    if p > 1.0:
        raise ParameterError(f"p must lie in (0, 1], got {p}")
    return p, alpha, beta


def _require_sim(ctx):
    if ctx.eps0_sim is None:
        raise ParameterError("context has no simulated known-noise sample; build it with ContrastContext.build")


def plugin_f_hat(ctx: ContrastContext, vartheta_hat, t, sign: str = "minus", clip: bool = False):
    """Plug-in density of the unknown error law.

    ``sign="minus"`` subtracts the known-component part (the inversion of the
    mixture); ``sign="plus"`` keeps the alternative printed form for audits.
    ``clip`` floors negative values at zero.
    """
    p, alpha, beta = _plugin_p(vartheta_hat)
    _require_sim(ctx)
    if sign not in ("minus", "plus"):
        raise ParameterError(f"sign must be 'minus' or 'plus', got {sign!r}")
    psi = de.kde_psi(ctx.transformed((alpha, beta)), t, ctx.kernel, ctx.b)
    i_tilde = de.sim_I_tilde(ctx.sample, (alpha, beta), ctx.eps0_sim, ctx.tilde_kernel, ctx.b, t)
    sgn = -1.0 if sign == "minus" else 1.0
    out = psi / p + sgn * (1.0 - p) / p * i_tilde
    return np.maximum(out, 0.0) if clip else out


def plugin_F_hat(ctx: ContrastContext, vartheta_hat, y, monotone: bool = True):
    """Plug-in cdf of the unknown error law.

    The ``monotone`` variant takes a running maximum over the sorted
    evaluation points and clamps to [0, 1].
    """
    p, alpha, beta = _plugin_p(vartheta_hat)
    _require_sim(ctx)
    y = np.asarray(y, dtype=float)
    F = de.smoothed_cdf(ctx.transformed((alpha, beta)), y, ctx.kernel, ctx.b)
    J = de.sim_J_tilde(ctx.sample, (alpha, beta), ctx.eps0_sim, ctx.tilde_kernel, ctx.b, y)
    raw = F / p - (1.0 - p) / p * J
    if not monotone:
        return raw
    flat = raw.ravel()
    order = np.argsort(y.ravel(), kind="stable")
    fixed = np.empty_like(flat)
    fixed[order] = np.clip(np.maximum.accumulate(flat[order]), 0.0, 1.0)
    return fixed.reshape(y.shape)
