"""Command-line front end for contaminated-regression estimation.

Every subcommand accepts ``--config FILE`` (plain ``key=value`` lines, ``#``
comments) and flags; flags win over the file.  The resolved configuration is
written to ``<out>/config.txt`` before any computation.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import density as de
from .contrast import ContrastContext
from .distributions import DistSpec, Gaussian, asymmetric_error, parse_dist
from .estimator import OptimConfig, minimize, plugin_F_hat, plugin_f_hat
from .experiments import (MODELS, DEFAULT_BOX, DEFAULT_DESIGN_MEAN, ExperimentSpec, demo_sample,
                          rate_sweep, run_table1, run_table2, surface_grid, transformation_demo,
                          ReplicationSummary, write_outputs)
from .gaussian import GaussianModelSpec, check_contrast_conditions, spurious_in_box
from .model import ParamBox, Sample, Vartheta, simulate


class CLIError(Exception):
    """Invalid command-line or config input."""


def _floats(text, count=None, name="value"):
    try:
        vals = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise CLIError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) not in (count if isinstance(count, tuple) else (count,)):
        raise CLIError(f"{name}: expected {count} values, got {len(vals)}")
    return vals


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise CLIError(f"expected a boolean, got {text!r}")


def _optional_float(text):
    t = str(text).strip().lower()
    return None if t in ("", "none", "free") else float(t)


def _starts(text):
    if not str(text).strip():
        return ()
    return tuple(_floats(s, 3, "starts") for s in str(text).split(";"))


@dataclass(frozen=True)
class Option:
    name: str
    parse: object
    default: object
    help: str


COMMON = [
    Option("seed", int, None, "master seed (generated and printed when absent)"),
    Option("out", str, "out", "output directory"),
    Option("model", str, "M1", "M1, M2 or M3"),
]
DATA_MODEL = [
    Option("n", int, 200, "sample size"),
    Option("p-star", float, None, "true proportion (default from the model)"),
    Option("alpha-star", float, None, "true intercept (default from the model)"),
    Option("beta-star", float, None, "true slope (default from the model)"),
    Option("design-mean", float, DEFAULT_DESIGN_MEAN, "mean of the Gaussian design"),
    Option("lam", _optional_float, None, "asymmetric error weight in (0, 1); unset for N(0, 1) errors"),
]
CONTRAST = [
    Option("q", str, None, "weight law, e.g. normal:0,16 (default from the model)"),
    Option("f0", str, "normal:0,1", "known error law"),
    Option("m", int, None, "number of weight points (default n)"),
    Option("kernel", str, "triangular", "triangular or gaussian"),
    Option("bandwidth", str, "paper", "paper[:p], fixed:<b> or power:<c>,<e>"),
]
OPTIM = [
    Option("box", str, DEFAULT_BOX.format(), "p_lo,p_hi,a_lo,a_hi,b_lo,b_hi"),
    Option("gamma", str, "0.2,0.5,0.5", "step scales for (p, alpha, beta) or (p, beta)"),
    Option("eps-stop", float, 0.005, "stopping tolerance on the step length"),
    Option("max-iters", int, 500, "iteration cap per start"),
    Option("starts", _starts, (), "extra starts 'p,a,b;p,a,b'"),
    Option("lattice", int, 3, "k for the k^3 lattice of starts (0 disables)"),
    Option("fix-alpha", _optional_float, None, "hold alpha at this value"),
    Option("backtrack", _bool, True, "halve steps that increase d_n"),
]
COMMANDS = {
    "simulate": DATA_MODEL,
    "estimate": CONTRAST + OPTIM + [Option("grid-points", int, 401, "points of the f/F output grids")],
    "diagnose": [
        Option("p-star", float, None, "true proportion"),
        Option("alpha-star", float, None, "true intercept"),
        Option("beta-star", float, None, "true slope"),
        Option("var-f", float, 1.0, "variance of the unknown error law"),
        Option("var-f0", float, 1.0, "variance of the known error law"),
        Option("mu-x", float, DEFAULT_DESIGN_MEAN, "design mean"),
        Option("var-x", float, 9.0, "design variance"),
        Option("box", str, DEFAULT_BOX.format(), "box to check for the spurious zero"),
    ],
    "surface": CONTRAST + [
        Option("p-range", str, "0.5,0.8", "p_lo,p_hi"),
        Option("beta-range", str, "0.9,1.1", "beta_lo,beta_hi"),
        Option("grid", str, "10,10", "points along p,beta"),
        Option("alpha", float, 0.0, "fixed intercept"),
    ],
    "replicate": DATA_MODEL + CONTRAST[3:] + OPTIM + [
        Option("reps", int, 100, "replications per n"),
        Option("ns", str, None, "comma-separated sample sizes (default n)"),
        Option("protocol", str, "oracle", "oracle (single start at the truth, table settings) or multistart"),
        Option("rates", _bool, False, "run the rate sweep over ns instead of summary tables"),
        Option("workers", int, 1, "worker processes"),
    ],
    "demo": [
        Option("n", int, 200, "sample size"),
        Option("thetas", str, "0,0;1,0.5;2,1", "transformations 'a,b;a,b'"),
        Option("bins", str, "sturges", "numpy histogram bins rule or count"),
    ],
}
HELP = {
    "simulate": "draw a dataset from a model",
    "estimate": "estimate (p, alpha, beta) and the error law from a dataset",
    "diagnose": "check identifiability conditions of a Gaussian model",
    "surface": "evaluate d_n on a (p, beta) grid",
    "replicate": "Monte-Carlo replications (tables or rate sweep)",
    "demo": "histograms of transformed responses",
}
DATA_COMMANDS = ("estimate", "surface")


def _options(cmd):
    seen, out = set(), []
    for opt in COMMON + COMMANDS[cmd]:
        if opt.name not in seen:
            seen.add(opt.name)
            out.append(opt)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contamreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, help=HELP[cmd])
        if cmd in DATA_COMMANDS:
            sp.add_argument("data", help="dataset CSV with header x,y[,u]")
        sp.add_argument("--config", help="key=value config file")
        for opt in _options(cmd):
            sp.add_argument(f"--{opt.name}", dest=opt.name.replace("-", "_"), default=None,
                            help=opt.help if opt.default is None or opt.default == () else
                            f"{opt.help} (default: {_fmt(opt.default)})")
    return parser


def read_config(path) -> dict:
    """Parse ``key=value`` lines; keys may use dashes or underscores."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CLIError(f"{path}: cannot read config ({exc.strerror})") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CLIError(f"{path}: line {lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(cmd, args) -> dict:
    """Merge defaults, config file and flags, parsing every value."""
    file_vals = read_config(args.config) if args.config else {}
    opts = _options(cmd)
    known = {o.name.replace("-", "_") for o in opts}
    unknown = sorted(set(file_vals) - known)
    if unknown:
        raise CLIError(f"unknown config key(s) for {cmd}: {', '.join(unknown)}")
    cfg = {}
    for opt in opts:
        key = opt.name.replace("-", "_")
        raw = getattr(args, key)
        if raw is None:
            raw = file_vals.get(key)
        if raw is None:
            cfg[key] = opt.default
            continue
        try:
            cfg[key] = opt.parse(raw)
        except CLIError as exc:
            raise CLIError(f"{opt.name}: {exc}") from None
        except ValueError:
            raise CLIError(f"{opt.name}: invalid value {raw!r}") from None
    if cfg["seed"] is None:
        cfg["seed"] = int(np.random.SeedSequence().entropy % (2**63))
        print(f"seed={cfg['seed']}")
    if cfg["model"] not in MODELS:
        raise CLIError(f"model: unknown model {cfg['model']!r}; choose from {', '.join(sorted(MODELS))}")
    return cfg


def _fmt(v):
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ";".join(",".join(repr(x) for x in t) for t in v)
        return ",".join(repr(x) for x in v)
    return "" if v is None else str(v)


def write_config(cmd, cfg, data=None) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"command={cmd}"] + ([f"data={data}"] if data else [])
    lines += [f"{k}={_fmt(v)}" for k, v in cfg.items()]
    path = out / "config.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def _truth(cfg) -> Vartheta:
    d = MODELS[cfg["model"]]
    pick = lambda key, dflt: dflt if cfg.get(key) is None else cfg[key]  # noqa: E731
    return Vartheta(pick("p_star", d.p_star), pick("alpha_star", d.alpha_star), pick("beta_star", d.beta_star))


def _q(cfg) -> DistSpec:
    return parse_dist(cfg["q"]) if cfg.get("q") else Gaussian(0.0, MODELS[cfg["model"]].q_var)


def _smoothing(cfg):
    if cfg["kernel"] not in ("triangular", "gaussian"):
        raise CLIError(f"kernel: expected triangular or gaussian, got {cfg['kernel']!r}")
    return de.KernelSpec(cfg["kernel"]), de.BandwidthRule.parse(cfg["bandwidth"])


def _optim(cfg, box: ParamBox) -> OptimConfig:
    gamma = _floats(cfg["gamma"], (2, 3), "gamma")
    if len(gamma) == 2:
        gamma = (gamma[0], gamma[1], gamma[1])
    for s in cfg["starts"]:
        if not box.contains(np.asarray(s)):
            raise CLIError(f"starts: {s} lies outside the box")
    return OptimConfig(gamma=gamma, eps_stop=cfg["eps_stop"], max_iters=cfg["max_iters"],
                       starts=cfg["starts"], lattice=cfg["lattice"], fix_alpha=cfg["fix_alpha"],
                       backtrack=cfg["backtrack"])


def _context(cfg, sample: Sample) -> ContrastContext:
    kernel, bw = _smoothing(cfg)
    return ContrastContext.build(sample, parse_dist(cfg["f0"]), _q(cfg), cfg["seed"], m=cfg["m"],
                                 kernel=kernel, bandwidth=bw)


def _write_summary(summaries: list[ReplicationSummary]) -> str:
    return ReplicationSummary.SUMMARY_HEADER + "\n" + "".join(s.summary_row() + "\n" for s in summaries)


def cmd_simulate(cfg, data=None):
    truth = _truth(cfg)
    d = MODELS[cfg["model"]]
    f1 = Gaussian(0.0, 1.0) if cfg["lam"] is None else asymmetric_error(cfg["lam"])
    sample = simulate(cfg["n"], truth, Gaussian(0.0, 1.0), f1, Gaussian(cfg["design_mean"], d.design_var),
                      cfg["seed"])
    path = Path(cfg["out"]) / "data.csv"
    sample.to_csv(path)
    print(f"wrote {path} (n={sample.n})")


def cmd_estimate(cfg, data):
    sample = Sample.from_csv(data)
    box = ParamBox.parse(cfg["box"])
    ctx = _context(cfg, sample)
    report = minimize(ctx, box, _optim(cfg, box))
    v = report.vartheta_hat
    scale = max(float(np.std(sample.y)), 1.0)
    grid = np.linspace(-5 * scale, 5 * scale, cfg["grid_points"])
    f_raw = plugin_f_hat(ctx, v, grid)
    F_raw = plugin_F_hat(ctx, v, grid, monotone=False)
    F_mono = plugin_F_hat(ctx, v, grid)
    f_rows = "".join(f"{t:.17g},{a:.17g},{max(a, 0.0):.17g}\n" for t, a in zip(grid, f_raw))
    F_rows = "".join(f"{t:.17g},{a:.17g},{b:.17g}\n" for t, a, b in zip(grid, F_raw, F_mono))
    minima = "".join(f"{m.vartheta.p:.17g},{m.vartheta.alpha:.17g},{m.vartheta.beta:.17g},"
                     f"{m.d_value:.17g},{m.l1_score:.17g}\n" for m in report.all_minima)
    write_outputs(cfg["out"], {
        "report.txt": report.to_text(),
        "estimate.csv": report.CSV_HEADER + "\n" + report.csv_row() + "\n",
        "minima.csv": "p,alpha,beta,d_n,l1_score\n" + minima,
        "f_hat.csv": "t,f_hat,f_hat_clipped\n" + f_rows,
        "F_hat.csv": "y,F_hat_raw,F_hat\n" + F_rows,
    })
    sys.stdout.write(report.to_text())


def cmd_diagnose(cfg, data=None):
    box = ParamBox.parse(cfg["box"])
    spec = GaussianModelSpec(cfg["var_f"], cfg["var_f0"], cfg["mu_x"], cfg["var_x"], _truth(cfg))
    text = check_contrast_conditions(spec).to_text()
    sp, note = spurious_in_box(spec, box)
    if sp is not None:
        text += f"spurious zero: ({sp.p:.6g}, {sp.alpha:.6g}, {sp.beta:.6g})\n"
    text += f"{note}\n"
    write_outputs(cfg["out"], {"diagnose.txt": text})
    sys.stdout.write(text)


def cmd_surface(cfg, data):
    sample = Sample.from_csv(data)
    ctx = _context(cfg, sample)
    grid = tuple(int(g) for g in _floats(cfg["grid"], 2, "grid"))
    surf = surface_grid(ctx, _floats(cfg["p_range"], 2, "p-range"), _floats(cfg["beta_range"], 2, "beta-range"),
                        grid, cfg["alpha"])
    write_outputs(cfg["out"], {"surface.csv": surf.to_csv()})
    i, j = surf.argmin()
    print(f"grid minimum d_n={surf.values[i, j]:.6g} at p={surf.p[i]:.6g}, beta={surf.beta[j]:.6g}")


def _experiment(cfg, n) -> ExperimentSpec:
    kernel, bw = _smoothing(cfg)
    box = ParamBox.parse(cfg["box"])
    if cfg["protocol"] == "oracle":
        optimizer = None
    elif cfg["protocol"] == "multistart":
        optimizer = _optim(cfg, box)
    else:
        raise CLIError(f"protocol: expected oracle or multistart, got {cfg['protocol']!r}")
    for key in ("p_star", "alpha_star", "beta_star"):
        if cfg.get(key) is not None:
            raise CLIError(f"{key.replace('_', '-')}: replicate uses the model's true parameter; choose --model")
    return ExperimentSpec(model=cfg["model"], n=n, replications=cfg["reps"], seed=cfg["seed"],
                          optimizer=optimizer, design_mean=cfg["design_mean"], lam=cfg["lam"], box=box,
                          kernel=kernel, bandwidth=bw, workers=cfg["workers"])


def cmd_replicate(cfg, data=None):
    ns = [int(v) for v in _floats(cfg["ns"], None, "ns")] if cfg["ns"] else [cfg["n"]]
    specs = [_experiment(cfg, n) for n in ns]
    files = {"manifest.txt": "".join(s.manifest() + "\n" for s in specs)}
    if cfg["rates"]:
        report = rate_sweep(specs[0], ns, cfg["reps"])
        files["rates.csv"] = report.to_csv()
        print(f"log-log slope {report.slope:.4f}")
    else:
        summaries = []
        for spec in specs:
            if spec.lam is None:
                s = run_table1(spec)
            else:
                s = run_table2(spec.lam, spec.n, spec.replications, spec.seed,
                               **{k: getattr(spec, k) for k in ("optimizer", "design_mean", "box", "kernel",
                                                               "bandwidth", "workers")})
            summaries.append(s)
            files[f"replications_n{spec.n}.csv"] = s.replications_csv()
            sys.stdout.write(s.to_text())
        files["summary.csv"] = _write_summary(summaries)
    write_outputs(cfg["out"], files)


def cmd_demo(cfg, data=None):
    sample = demo_sample(cfg["n"], cfg["seed"])
    thetas = [_floats(t, 2, "thetas") for t in cfg["thetas"].split(";")]
    bins = int(cfg["bins"]) if cfg["bins"].isdigit() else cfg["bins"]
    tables = transformation_demo(sample, thetas, bins)
    files = {"data.csv": sample.to_csv()}
    files.update({t.filename: t.to_csv() for t in tables})
    write_outputs(cfg["out"], files)
    for t in tables:
        print(f"theta=({t.theta[0]:g}, {t.theta[1]:g}): {t.counts.size} bins -> {t.filename}")


HANDLERS = {
    "simulate": cmd_simulate, "estimate": cmd_estimate, "diagnose": cmd_diagnose,
    "surface": cmd_surface, "replicate": cmd_replicate, "demo": cmd_demo,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = "config"
    try:
        cfg = resolve(args.command, args)
        data = getattr(args, "data", None)
        write_config(args.command, cfg, data)
        stage = args.command
        HANDLERS[args.command](cfg, data)
    except (CLIError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"contamreg: error: {stage}: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
