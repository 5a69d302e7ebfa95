"""Monte-Carlo replication harness: table reproduction, contrast surfaces,
rate sweeps and transformation histograms.
"""

from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import density as de
from .contrast import ContrastContext
from .distributions import Gaussian, asymmetric_error, format_dist
from .estimator import OptimConfig, minimize
from .model import ParamBox, ParameterError, Sample, Vartheta, simulate


class ExperimentError(RuntimeError):
    """Too many replications failed."""


@dataclass(frozen=True)
class ModelDef:
    """Gaussian regression model with N(0, 1) errors on both components."""

    name: str
    p_star: float
    beta_star: float
    q_var: float
    design_var: float = 9.0
    alpha_star: float = 0.0


MODELS = {
    "M1": ModelDef("M1", 0.7, 1.0, 16.0),
    "M2": ModelDef("M2", 0.3, 1.0, 4.0),
    "M3": ModelDef("M3", 0.3, 1.0, 16.0),
}

# reference values: (model, n) -> (means (p, beta), sds (p, beta))
REFERENCE_TABLE1 = {
    ("M1", 100): ((0.7055, 1.0051), (0.0373, 0.0697)),
    ("M1", 200): ((0.6976, 0.9965), (0.0307, 0.0590)),
    ("M1", 500): ((0.6954, 1.0059), (0.0296, 0.0358)),
    ("M3", 100): ((0.3100, 0.9581), (0.0577, 0.1252)),
    ("M3", 200): ((0.2965, 0.9851), (0.0501, 0.0855)),
    ("M3", 500): ((0.2975, 1.0178), (0.0284, 0.0414)),
    ("M2", 100): ((0.3971, 0.8587), (0.0942, 0.2213)),
    ("M2", 200): ((0.3982, 0.9149), (0.0835, 0.1900)),
    ("M2", 500): ((0.3315, 0.9683), (0.0524, 0.1067)),
}

# (lambda, n) -> (means (p, beta), sds (p, beta)); base model M1
REFERENCE_TABLE2 = {
    (0.5, 100): ((0.7035, 1.0229), (0.0427, 0.0814)),
    (0.5, 200): ((0.7012, 1.0068), (0.0390, 0.0774)),
    (0.5, 500): ((0.6997, 1.0059), (0.0244, 0.0488)),
    (0.55, 100): ((0.6854, 1.0837), (0.0485, 0.0858)),
    (0.55, 200): ((0.6890, 1.0805), (0.0431, 0.0716)),
    (0.55, 500): ((0.6922, 1.0699), (0.0377, 0.0519)),
    (0.6, 100): ((0.6731, 1.1314), (0.0543, 0.0952)),
    (0.6, 200): ((0.6693, 1.1061), (0.0490, 0.0868)),
    (0.6, 500): ((0.6775, 1.0928), (0.0392, 0.0557)),
}

DEFAULT_BOX = ParamBox(0.05, 0.95, -3.0, 3.0, 0.1, 3.0)
DEFAULT_DESIGN_MEAN = 2.0


@dataclass(frozen=True)
class ExperimentSpec:
    """One simulation setting.  ``optimizer=None`` means the single start at
    the true parameter with the hand-tuned table protocol (alpha held at its
    true value)."""

    model: str = "M1"
    n: int = 100
    replications: int = 100
    seed: int = 0
    optimizer: OptimConfig | None = None
    design_mean: float = DEFAULT_DESIGN_MEAN
    lam: float | None = None
    box: ParamBox = DEFAULT_BOX
    kernel: de.KernelSpec = de.TRIANGULAR
    bandwidth: de.BandwidthRule = de.BandwidthRule()
    workers: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ParameterError(f"unknown model {self.model!r}; choose from {sorted(MODELS)}")
        if self.replications < 1:
            raise ParameterError(f"replications must be >= 1, got {self.replications}")
        if self.n < 10:
            raise ParameterError(f"n must be >= 10, got {self.n}")
        if self.lam is not None and not 0.0 < self.lam < 1.0:
            raise ParameterError(f"lambda must lie in (0, 1), got {self.lam}")

    @property
    def definition(self) -> ModelDef:
        return MODELS[self.model]

    @property
    def vartheta_star(self) -> Vartheta:
        d = self.definition
        return Vartheta(d.p_star, d.alpha_star, d.beta_star)

    @property
    def error_law(self):
        return Gaussian(0.0, 1.0) if self.lam is None else asymmetric_error(self.lam)

    @property
    def design(self) -> Gaussian:
        return Gaussian(self.design_mean, self.definition.design_var)

    @property
    def q(self) -> Gaussian:
        return Gaussian(0.0, self.definition.q_var)

    def optimizer_config(self) -> OptimConfig:
        if self.optimizer is not None:
            return self.optimizer
        vs = self.vartheta_star
        return OptimConfig.table_protocol(vs.as_array(), fix_alpha=vs.alpha)

    def replication_seeds(self) -> list[np.random.SeedSequence]:
        return np.random.SeedSequence(self.seed).spawn(self.replications)

    def manifest(self) -> str:
        cfg = self.optimizer_config()
        lines = [
            f"model={self.model}", f"n={self.n}", f"replications={self.replications}",
            f"seed={self.seed}", f"design={format_dist(self.design)}", f"q={format_dist(self.q)}",
            f"error={format_dist(self.error_law)}", f"lambda={self.lam}",
            f"vartheta_star={tuple(self.vartheta_star.as_array().tolist())}",
            f"box={self.box.format()}", f"kernel={self.kernel.kind}",
            f"bandwidth={self.bandwidth.format()}", f"gamma={cfg.gamma}", f"eps_stop={cfg.eps_stop}",
            f"delta_init={cfg.delta_init}", f"max_iters={cfg.max_iters}", f"starts={cfg.starts}",
            f"lattice={cfg.lattice}", f"fix_alpha={cfg.fix_alpha}", f"backtrack={cfg.backtrack}",
        ]
        return "\n".join(lines) + "\n"


def simulate_spec(spec: ExperimentSpec, seed, n: int | None = None) -> Sample:
    return simulate(n or spec.n, spec.vartheta_star, Gaussian(0.0, 1.0), spec.error_law, spec.design, seed)


def build_context(spec: ExperimentSpec, sample: Sample, seed) -> ContrastContext:
    return ContrastContext.build(sample, Gaussian(0.0, 1.0), spec.q, seed,
                                 kernel=spec.kernel, bandwidth=spec.bandwidth)


@dataclass(frozen=True)
class ReplicationResult:
    index: int
    p: float
    alpha: float
    beta: float
    d_value: float
    iterations: int
    converged: bool
    error: str = ""


def run_replication(spec: ExperimentSpec, index: int, seed) -> ReplicationResult:
    """Simulate, build the context and estimate, all from one replication seed."""
    try:
        sample = simulate_spec(spec, seed)
        ctx = build_context(spec, sample, seed)
        rep = minimize(ctx, spec.box, spec.optimizer_config())
    except (ArithmeticError, ValueError) as exc:
        nan = float("nan")
        return ReplicationResult(index, nan, nan, nan, nan, 0, False, f"{type(exc).__name__}: {exc}")
    v = rep.vartheta_hat
    return ReplicationResult(index, v.p, v.alpha, v.beta, rep.d_value, rep.iterations, rep.converged)


def _run_one(args):
    return run_replication(*args)


def _map(fn, jobs, workers: int):
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


@dataclass
class ReplicationSummary:
    spec: ExperimentSpec
    results: list
    mean_p: float
    mean_alpha: float
    mean_beta: float
    sd_p: float
    sd_alpha: float
    sd_beta: float
    failures: int
    reference: tuple | None = None

    SUMMARY_HEADER = ("model,lambda,n,replications,design_mean,failures,mean_p,mean_alpha,mean_beta,"
                      "sd_p,sd_alpha,sd_beta,ref_mean_p,ref_mean_beta,ref_sd_p,ref_sd_beta")

    def summary_row(self) -> str:
        s = self.spec
        ref = self.reference or ((float("nan"),) * 2, (float("nan"),) * 2)
        vals = [self.mean_p, self.mean_alpha, self.mean_beta, self.sd_p, self.sd_alpha, self.sd_beta,
                ref[0][0], ref[0][1], ref[1][0], ref[1][1]]
        lam = "" if s.lam is None else repr(s.lam)
        return (f"{s.model},{lam},{s.n},{s.replications},{s.design_mean!r},{self.failures},"
                + ",".join(f"{v:.10g}" for v in vals))

    def replications_csv(self) -> str:
        buf = io.StringIO()
        buf.write("replication,p_hat,alpha_hat,beta_hat,d_value,iterations,converged,error\n")
        for r in self.results:
            buf.write(f"{r.index},{r.p:.17g},{r.alpha:.17g},{r.beta:.17g},{r.d_value:.17g},"
                      f"{r.iterations},{int(r.converged)},{r.error}\n")
        return buf.getvalue()

    def to_text(self) -> str:
        s = self.spec
        label = s.model if s.lam is None else f"{s.model}, lambda={s.lam}"
        out = [f"{label}, n={s.n}, {s.replications} replications, {self.failures} failed",
               f"  mean (p, beta) = ({self.mean_p:.4f}, {self.mean_beta:.4f})"
               f"  sd = ({self.sd_p:.4f}, {self.sd_beta:.4f})"]
        if self.reference:
            (mp, mb), (sp, sb) = self.reference
            out.append(f"  reference      = ({mp:.4f}, {mb:.4f})  sd = ({sp:.4f}, {sb:.4f})")
        return "\n".join(out) + "\n"


def summarize(spec: ExperimentSpec, results, reference=None) -> ReplicationSummary:
    """Means and sds (ddof=1) over converged runs; failures counted separately."""
    ok = [r for r in results if r.converged and not r.error]
    failures = len(results) - len(ok)
    if not ok:
        raise ExperimentError(f"all {len(results)} replications failed")
    if failures > 0.1 * len(results):
        raise ExperimentError(f"{failures} of {len(results)} replications failed (more than 10%)")
    arr = np.array([[r.p, r.alpha, r.beta] for r in ok])
    mean = arr.mean(axis=0)
    sd = arr.std(axis=0, ddof=1) if len(ok) > 1 else np.zeros(3)
    return ReplicationSummary(spec, list(results), *mean, *sd, failures, reference)


def run_experiment(spec: ExperimentSpec, reference=None) -> ReplicationSummary:
    jobs = [(spec, i, s) for i, s in enumerate(spec.replication_seeds())]
    return summarize(spec, _map(_run_one, jobs, spec.workers), reference)


def run_table1(spec: ExperimentSpec) -> ReplicationSummary:
    if spec.lam is not None:
        raise ParameterError("table-1 runs use symmetric errors; unset lambda")
    return run_experiment(spec, REFERENCE_TABLE1.get((spec.model, spec.n)))


def run_table2(lam: float, n: int, replications: int, seed, **kw) -> ReplicationSummary:
    """Asymmetric-error study on the M1 base model."""
    spec = ExperimentSpec(model="M1", n=n, replications=replications, seed=seed, lam=lam, **kw)
    return run_experiment(spec, REFERENCE_TABLE2.get((lam, n)))


@dataclass
class SurfaceGrid:
    p: np.ndarray
    beta: np.ndarray
    alpha: float
    values: np.ndarray  # shape (len(p), len(beta))

    def argmin(self) -> tuple[int, int]:
        i, j = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
        return int(i), int(j)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("p,alpha,beta,d_n\n")
        for i, p in enumerate(self.p):
            for j, b in enumerate(self.beta):
                buf.write(f"{p:.17g},{self.alpha:.17g},{b:.17g},{self.values[i, j]:.17g}\n")
        return buf.getvalue()


def surface_grid(ctx: ContrastContext, p_range, beta_range, grid=(10, 10), alpha: float = 0.0) -> SurfaceGrid:
    """d_n on a homogeneous (p, beta) lattice with alpha held fixed."""
    n_p, n_b = grid
    if n_p < 2 or n_b < 2:
        raise ParameterError(f"grid needs at least 2 points per axis, got {grid}")
    ps = np.linspace(p_range[0], p_range[1], n_p)
    bs = np.linspace(beta_range[0], beta_range[1], n_b)
    vals = np.array([[ctx.d_n((p, alpha, b)) for b in bs] for p in ps])
    return SurfaceGrid(ps, bs, float(alpha), vals)


@dataclass
class RateReport:
    n_list: list
    median_errors: list
    slope: float
    intercept: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,median_l1_error\n")
        for n, e in zip(self.n_list, self.median_errors):
            buf.write(f"{n},{e:.17g}\n")
        buf.write(f"# slope={self.slope:.17g} intercept={self.intercept:.17g}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class L1Error:
    """l1 distance between the estimate and the truth for one replication."""

    template: ExperimentSpec

    def __call__(self, n, index, seed) -> float:
        r = run_replication(replace(self.template, n=n), index, seed)
        if r.error or not r.converged:
            return float("nan")
        truth = self.template.vartheta_star.as_array()
        return float(np.abs(np.array([r.p, r.alpha, r.beta]) - truth).sum())


def _rate_job(args):
    fn, n, i, s = args
    return fn(n, i, s)


def rate_sweep(template: ExperimentSpec, n_list, reps: int, error_fn=None) -> RateReport:
    """Median l1 estimation error per n and the OLS slope of log error on log n.

    ``error_fn(n, index, seed)`` replaces the estimator, for harness self-tests.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ParameterError("n_list must be strictly increasing with at least 3 values")
    fn = error_fn or L1Error(template)
    seeds = np.random.SeedSequence(template.seed).spawn(len(n_list))
    medians = []
    for n, ss in zip(n_list, seeds):
        jobs = [(fn, n, i, s) for i, s in enumerate(ss.spawn(reps))]
        errs = np.array(_map(_rate_job, jobs, template.workers if error_fn is None else 1), float)
        errs = errs[np.isfinite(errs)]
        if errs.size == 0:
            raise ExperimentError(f"every replication failed at n={n}")
        medians.append(float(np.median(errs)))
    fit = stats.linregress(np.log(n_list), np.log(medians))
    return RateReport(n_list, medians, float(fit.slope), float(fit.intercept))


@dataclass
class HistTable:
    theta: tuple
    edges: np.ndarray
    counts: np.ndarray

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.counts.sum() * np.diff(self.edges))

    @property
    def filename(self) -> str:
        return f"hist_{self.theta[0]:g}_{self.theta[1]:g}.csv"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("left,right,count,density\n")
        dens = self.density
        for k in range(self.counts.size):
            buf.write(f"{self.edges[k]:.17g},{self.edges[k + 1]:.17g},{int(self.counts[k])},{dens[k]:.17g}\n")
        return buf.getvalue()


def transformation_demo(sample: Sample, thetas, bins="sturges") -> list[HistTable]:
    """Histograms of the theta-transformed responses, one per theta."""
    out = []
    for th in thetas:
        yt = de.theta_transform(sample, th).y_theta
        counts, edges = np.histogram(yt, bins=bins)
        out.append(HistTable((float(th[0]), float(th[1])), edges, counts))
    return out


def residual_skewness(sample: Sample, theta) -> float:
    """Skewness of the transformed responses of the regression component (needs labels)."""
    if sample.u is None:
        raise ParameterError("sample has no component labels")
    yt = de.theta_transform(sample, theta).y_theta
    return float(stats.skew(yt[sample.u == 1]))


DEMO_MODEL = dict(p_star=0.7, alpha_star=2.0, beta_star=1.0, design=Gaussian(2.0, 3.0))


def demo_sample(n: int, seed) -> Sample:
    """Data for the transformation demo: p*=0.7, theta*=(2, 1), X ~ N(2, 3), N(0, 1) errors."""
    d = DEMO_MODEL
    return simulate(n, Vartheta(d["p_star"], d["alpha_star"], d["beta_star"]), Gaussian(0.0, 1.0),
                    Gaussian(0.0, 1.0), d["design"], seed)


def write_outputs(out_dir, files: dict) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        paths.append(path)
    return paths
