import numpy as np
import pytest
from scipy import stats

from contamreg import experiments as ex
from contamreg.estimator import OptimConfig
from contamreg.model import ParameterError

SMALL = dict(model="M1", n=60, replications=4, seed=11)


def test_spec_validation():
    with pytest.raises(ParameterError):
        ex.ExperimentSpec(model="M9")
    with pytest.raises(ParameterError):
        ex.ExperimentSpec(replications=0)
    with pytest.raises(ParameterError):
        ex.ExperimentSpec(n=9)
    with pytest.raises(ParameterError):
        ex.ExperimentSpec(lam=1.0)
    with pytest.raises(ParameterError):
        ex.run_table1(ex.ExperimentSpec(lam=0.5))


def test_models_and_defaults():
    assert ex.MODELS["M1"].p_star == 0.7 and ex.MODELS["M1"].q_var == 16.0
    assert ex.MODELS["M2"].q_var == 4.0 and ex.MODELS["M3"].p_star == 0.3
    spec = ex.ExperimentSpec()
    assert spec.design.mean == ex.DEFAULT_DESIGN_MEAN and spec.design.variance == 9.0
    cfg = spec.optimizer_config()
    assert cfg.starts == ((0.7, 0.0, 1.0),) and cfg.lattice == 0 and cfg.fix_alpha == 0.0
    assert cfg.gamma == (0.2, 0.5, 0.5) and cfg.eps_stop == 0.005 and not cfg.backtrack


def test_manifest_records_resolved_config():
    text = ex.ExperimentSpec(**SMALL).manifest()
    for key in ("model=M1", "n=60", "replications=4", "seed=11", "q=normal:0.0,16.0", "eps_stop=0.005",
                "box=", "bandwidth=", "kernel=triangular"):
        assert key in text


def test_replication_seeds_are_independent_and_reproducible():
    spec = ex.ExperimentSpec(**SMALL)
    a = [s.generate_state(2).tolist() for s in spec.replication_seeds()]
    b = [s.generate_state(2).tolist() for s in spec.replication_seeds()]
    assert a == b and len({tuple(x) for x in a}) == len(a)


def test_experiment_is_deterministic_across_worker_counts():
    one = ex.run_experiment(ex.ExperimentSpec(**SMALL))
    again = ex.run_experiment(ex.ExperimentSpec(**SMALL))
    two = ex.run_experiment(ex.ExperimentSpec(**SMALL, workers=2))
    assert one.replications_csv() == again.replications_csv() == two.replications_csv()
    assert one.summary_row() == two.summary_row()
    assert [r.index for r in two.results] == list(range(4))


def test_summary_statistics_use_converged_runs():
    spec = ex.ExperimentSpec(**SMALL)
    rows = [ex.ReplicationResult(i, 0.6 + 0.1 * (i % 2), 0.0, 1.0 + 0.01 * i, 0.001, 5, True)
            for i in range(20)]
    rows[3] = ex.ReplicationResult(3, 0.1, 0.0, 9.0, 1.0, 500, False)
    s = ex.summarize(spec, rows)
    ok = [r for r in rows if r.converged]
    assert s.failures == 1
    assert s.mean_p == pytest.approx(np.mean([r.p for r in ok]))
    assert s.sd_beta == pytest.approx(np.std([r.beta for r in ok], ddof=1))
    assert s.replications_csv().count("\n") == 21
    assert ex.ReplicationSummary.SUMMARY_HEADER.count(",") == s.summary_row().count(",")


def test_failure_policy():
    spec = ex.ExperimentSpec(**SMALL)
    good = ex.ReplicationResult(0, 0.7, 0.0, 1.0, 0.0, 3, True)
    bad = ex.ReplicationResult(1, np.nan, np.nan, np.nan, np.nan, 0, False, "NumericalError: x")
    with pytest.raises(ex.ExperimentError, match="all"):
        ex.summarize(spec, [bad, bad])
    with pytest.raises(ex.ExperimentError, match="10%"):
        ex.summarize(spec, [good] * 8 + [bad] * 2)
    assert ex.summarize(spec, [good] * 9 + [bad]).failures == 1


def test_reference_values_attached():
    spec = ex.ExperimentSpec(model="M1", n=100, replications=2, seed=0)
    s = ex.run_table1(spec)
    assert s.reference == ex.REFERENCE_TABLE1[("M1", 100)]
    assert "reference" in s.to_text()
    t2 = ex.run_table2(0.6, 100, 2, 0)
    assert t2.reference == ex.REFERENCE_TABLE2[(0.6, 100)] and t2.spec.lam == 0.6


def test_surface_grid_shape_and_sign(ctx200):
    surf = ex.surface_grid(ctx200, (0.5, 0.8), (0.9, 1.1), grid=(2, 2))
    rows = surf.to_csv().strip().splitlines()
    assert rows[0] == "p,alpha,beta,d_n" and len(rows) == 5
    assert np.all(surf.values >= 0)
    i, j = surf.argmin()
    assert surf.values[i, j] == surf.values.min()
    with pytest.raises(ParameterError):
        ex.surface_grid(ctx200, (0.5, 0.8), (0.9, 1.1), grid=(1, 4))


def test_rate_sweep_self_tests():
    template = ex.ExperimentSpec(**SMALL)
    flat = ex.rate_sweep(template, [100, 400, 1600], 5, error_fn=lambda n, i, s: 0.3)
    assert flat.slope == pytest.approx(0.0, abs=1e-12)
    quarter = ex.rate_sweep(template, [100, 400, 1600, 6400], 5, error_fn=lambda n, i, s: 2.0 * n ** -0.25)
    assert quarter.slope == pytest.approx(-0.25, abs=1e-6)
    assert quarter.to_csv().startswith("n,median_l1_error\n100,")
    with pytest.raises(ParameterError):
        ex.rate_sweep(template, [100, 100, 400], 5, error_fn=lambda n, i, s: 1.0)
    with pytest.raises(ex.ExperimentError):
        ex.rate_sweep(template, [100, 200, 400], 3, error_fn=lambda n, i, s: float("nan"))


def test_rate_sweep_median_ignores_failed_runs():
    template = ex.ExperimentSpec(**SMALL)
    rep = ex.rate_sweep(template, [10, 20, 40], 3,
                        error_fn=lambda n, i, s: float("nan") if i == 0 else 1.0 / n + i)
    assert rep.median_errors == pytest.approx([1.5 + 1 / 10, 1.5 + 1 / 20, 1.5 + 1 / 40])


def test_l1_error_is_picklable_and_finite():
    import pickle

    fn = ex.L1Error(ex.ExperimentSpec(**SMALL))
    fn2 = pickle.loads(pickle.dumps(fn))
    seed = np.random.SeedSequence(3)
    assert fn(60, 0, seed) == fn2(60, 0, seed) and np.isfinite(fn(60, 0, seed))


def test_transformation_demo_tables():
    sample = ex.demo_sample(200, 4)
    tables = ex.transformation_demo(sample, [(0, 0), (1, 0.5), (2, 1)])
    raw = tables[0]
    counts, edges = np.histogram(sample.y, bins="sturges")
    np.testing.assert_array_equal(raw.counts, counts)
    np.testing.assert_allclose(raw.edges, edges)
    assert [t.filename for t in tables] == ["hist_0_0.csv", "hist_1_0.5.csv", "hist_2_1.csv"]
    for t in tables:
        assert t.counts.sum() == 200
        assert np.sum(t.density * np.diff(t.edges)) == pytest.approx(1.0)
        assert t.to_csv().startswith("left,right,count,density\n")
    fixed = ex.transformation_demo(sample, [(0, 0)], bins=5)[0]
    assert fixed.counts.size == 5


def test_residual_skewness_vanishes_at_truth():
    sample = ex.demo_sample(10_000, 21)
    skew = ex.residual_skewness(sample, (2.0, 1.0))
    assert abs(skew) < 0.2
    yt = sample.y - 2.0 - sample.x
    assert skew == pytest.approx(stats.skew(yt[sample.u == 1]))


def test_write_outputs(tmp_path):
    paths = ex.write_outputs(tmp_path / "a" / "b", {"x.csv": "1\n", "y.txt": "z"})
    assert [p.read_text() for p in paths] == ["1\n", "z"]


def test_custom_optimizer_in_spec():
    cfg = OptimConfig(starts=((0.6, 0.0, 0.9),), lattice=0, max_iters=5, backtrack=False, fix_alpha=0.0)
    spec = ex.ExperimentSpec(**SMALL, optimizer=cfg)
    r = ex.run_replication(spec, 0, spec.replication_seeds()[0])
    assert r.iterations <= 5 and r.alpha == 0.0
