from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contamreg import density as de
from contamreg.contrast import ContrastContext, d_n, grad_d_n, h_components
from contamreg.distributions import Gaussian
from contamreg.model import ParameterError, Sample, Vartheta

from conftest import m1_context, m1_sample

varthetas = st.tuples(st.floats(0.05, 0.95), st.floats(-2, 2), st.floats(0.2, 2.5))


@given(varthetas)
def test_contrast_is_nonnegative_and_bounded(ctx200, v):
    assert d_n(ctx200, v) >= 0.0
    h = ctx200.h_at_weights(v)
    assert np.max(np.abs(h)) <= 4.0 / 0.05 + 1.0


def test_contrast_is_deterministic(ctx200):
    v = (0.6, 0.2, 0.9)
    a = d_n(ctx200, v)
    ctx200.clear_cache()
    assert d_n(ctx200, v) == a
    other = m1_context(200, 2024)
    assert d_n(other, v) == a


def test_h_components_agree_with_weight_evaluation(ctx200):
    v = Vartheta(0.65, 0.1, 1.05)
    hv = h_components(ctx200, ctx200.v_points, v)
    np.testing.assert_allclose(hv.h, hv.h1 - hv.h2)
    np.testing.assert_allclose(hv.h, ctx200.h_at_weights(v), atol=1e-12)
    assert d_n(ctx200, v) == pytest.approx(np.mean(hv.h ** 2), rel=1e-12)


def test_h_vanishes_without_contamination_and_symmetric_data():
    # with p = 1 and residuals symmetric about the line, H1 and H2 coincide
    rng = np.random.default_rng(2)
    x = np.tile(rng.normal(size=50), 2)
    r = rng.normal(size=50)
    s = Sample(x, 0.5 + 2.0 * x + np.concatenate([r, -r]))
    ctx = ContrastContext(s, np.linspace(-3, 3, 11), Gaussian(0, 1))
    hv = ctx.h_components(np.linspace(-3, 3, 7), (1.0, 0.5, 2.0))
    np.testing.assert_allclose(hv.h, 0.0, atol=1e-12)
    assert np.max(np.abs(ctx.h_components(np.linspace(-3, 3, 7), (1.0, 0.5, 2.3)).h)) > 1e-3


@pytest.mark.parametrize("kernel", [de.TRIANGULAR, de.GAUSSIAN])
def test_gradient_matches_finite_differences(kernel):
    ctx = m1_context(120, 77, kernel=kernel)
    rng = np.random.default_rng(0)
    h = 1e-5
    for _ in range(5):
        v = np.array([rng.uniform(0.2, 0.9), rng.uniform(-1, 1), rng.uniform(0.5, 1.5)])
        g = grad_d_n(ctx, v)
        fd = np.array([(d_n(ctx, v + h * e) - d_n(ctx, v - h * e)) / (2 * h) for e in np.eye(3)])
        assert np.linalg.norm(g - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)


def test_lipschitz_smoke(ctx200):
    rng = np.random.default_rng(5)
    ratios = []
    for _ in range(40):
        a = np.array([rng.uniform(0.1, 0.9), rng.uniform(-1, 1), rng.uniform(0.5, 1.5)])
        b = a + rng.normal(scale=0.05, size=3)
        b[0] = np.clip(b[0], 0.1, 0.9)
        ratios.append(abs(d_n(ctx200, a) - d_n(ctx200, b)) / np.abs(a - b).sum())
    assert np.isfinite(max(ratios)) and max(ratios) < 50.0


def test_concurrent_evaluation_matches_serial():
    ctx = m1_context(150, 3, cache_size=4)
    pts = [(0.5 + 0.02 * i, 0.1 * (i % 3), 0.8 + 0.03 * i) for i in range(12)]
    serial = [ctx.d_n(p) for p in pts]
    ctx.clear_cache()
    with ThreadPoolExecutor(4) as pool:
        parallel = list(pool.map(ctx.d_n, pts * 2))
    assert parallel == serial * 2


def test_context_validation():
    s = m1_sample(30, 1)
    with pytest.raises(ParameterError):
        ContrastContext(s, [], Gaussian(0, 1))
    with pytest.raises(ParameterError):
        ContrastContext(s, [0.0], Gaussian(0, 1), eps0_sim=np.zeros(5))
    ctx = ContrastContext.build(s, Gaussian(0, 1), Gaussian(0, 16), seed=1, m=7)
    assert ctx.m == 7
    with pytest.raises(ParameterError):
        ctx.d_n((0.0, 0.0, 1.0))
