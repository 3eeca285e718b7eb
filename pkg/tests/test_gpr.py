import numpy as np
import pytest

from metamks import gpr
from metamks.errors import ArgumentError


def theta_of(sf, sn, ls):
    return np.log(np.r_[sf, sn, np.atleast_1d(ls)])


def fd_grad(theta, x, y, h=1e-5):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (gpr.nlml_and_grad(theta + e, x, y)[0] - gpr.nlml_and_grad(theta - e, x, y)[0]) / (2 * h)
    return g


def test_kernel_examples():
    th = theta_of(1.3, 0.2, [0.5, 2.0])
    assert gpr.kernel([1.0, 2.0], [1.0, 2.0], th, same_point=True) == pytest.approx(1.3**2 + 0.2**2)
    assert gpr.kernel([0.0, 0.0], [1e4, 0.0], th, same_point=False) == 0.0
    assert gpr.kernel([0.0], [1.0], theta_of(1.0, 1e-300, 1.0)) == pytest.approx(np.exp(-0.5), abs=1e-12)
    assert gpr.kernel([0.0], [1.0], theta_of(1.0, 1e-300, 1.0)) == pytest.approx(0.60653, abs=1e-5)
    with pytest.raises(ArgumentError):
        gpr.kernel([0.0], [1.0], th)


def test_gram_symmetric_and_matches_pointwise():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((12, 3))
    th = theta_of(0.7, 0.1, [0.5, 1.0, 2.0])
    k = gpr.gram(x, th)
    assert np.abs(k - k.T).max() <= 1e-14
    assert np.linalg.eigvalsh(k).min() > 0
    brute = np.array([[gpr.kernel(a, b, th, same_point=(i == j)) for j, b in enumerate(x)] for i, a in enumerate(x)])
    assert np.allclose(k, brute, rtol=1e-12, atol=1e-15)


def test_nlml_scalar_closed_form():
    th = theta_of(0.8, 0.3, 1.7)
    f, _ = gpr.nlml_and_grad(th, np.zeros((1, 1)), np.zeros(1))
    assert f == pytest.approx(0.5 * np.log(0.8**2 + 0.3**2 + 1e-10) + 0.5 * np.log(2 * np.pi), rel=1e-12)


def test_nlml_matches_dense_formula():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((15, 2))
    y = rng.standard_normal(15)
    th = theta_of(1.1, 0.4, [0.9, 1.3])
    k = gpr.gram(x, th) + 1e-10 * np.eye(15)  # default jitter
    ref = 0.5 * y @ np.linalg.solve(k, y) + 0.5 * np.linalg.slogdet(k)[1] + 7.5 * np.log(2 * np.pi)
    assert gpr.nlml_and_grad(th, x, y)[0] == pytest.approx(ref, rel=1e-10)
    # zero targets: only the determinant and constant remain
    assert gpr.nlml_and_grad(th, x, 0 * y)[0] == pytest.approx(ref - 0.5 * y @ np.linalg.solve(k, y), rel=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((20, 3))
    y = np.sin(x[:, 0]) + 0.1 * rng.standard_normal(20)
    th = np.r_[rng.uniform(-1, 0.5), rng.uniform(-3, -1), rng.uniform(-0.5, 1, 3)]
    _, g = gpr.nlml_and_grad(th, x, y)
    fd = fd_grad(th, x, y)
    assert np.linalg.norm(g - fd) <= 1e-4 * np.linalg.norm(fd)


def test_predict_interpolates_and_far_field():
    rng = np.random.default_rng(2)
    x = rng.uniform(-2, 2, (15, 2))
    y = x[:, 0] ** 2 - x[:, 1]
    th = theta_of(2.0, 1e-5, [1.0, 1.0])
    model = gpr.build_model(th, x, y)
    mean, var = gpr.predict(model, x)
    assert np.abs(mean - y).max() <= 1e-6
    assert np.all(var <= 2.0**2 + 1e-10 + 1e-12)
    far_mean, far_var = gpr.predict(model, np.array([[1e3, -1e3]]))
    assert far_mean[0] == pytest.approx(y.mean(), abs=1e-12)
    assert far_var[0] == pytest.approx(4.0 + 1e-10, abs=1e-6)
    with pytest.raises(ArgumentError):
        gpr.predict(model, np.zeros((1, 3)))


def test_predict_permutation_invariant_and_contracts():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((25, 3))
    y = rng.standard_normal(25)
    th = theta_of(1.0, 0.2, [1.0, 0.7, 1.5])
    xs = rng.standard_normal((10, 3))
    m1, v1 = gpr.predict(gpr.build_model(th, x, y), xs)
    perm = rng.permutation(25)
    m2, v2 = gpr.predict(gpr.build_model(th, x[perm], y[perm]), xs)
    assert np.abs(m1 - m2).max() <= 1e-10 and np.abs(v1 - v2).max() <= 1e-10
    # one more training point never increases the variance
    _, v3 = gpr.predict(gpr.build_model(th, np.vstack([x, xs[:1]]), np.r_[y, 0.0], y_shift=y.mean()), xs)
    assert np.all(v3 <= v1 + 1e-10)


def test_fit_interpolates_noiseless_quadratic():
    x = np.linspace(-1, 1, 15)[:, None]
    y = x[:, 0] ** 2
    model, report = gpr.fit(x, y, n_restarts=2, seed=0)
    mean, _ = gpr.predict(model, x)
    assert np.abs(mean - y).max() <= 1e-4
    assert model.hyperparameters.sigma_n < 1e-2
    assert report.nlml <= min(v for v in report.restart_nlml if v is not None)


def test_fit_deterministic():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((20, 2))
    y = np.cos(x[:, 0])
    a, _ = gpr.fit(x, y, n_restarts=2, seed=5, config=gpr.OptimizerConfig(iterations=60))
    b, _ = gpr.fit(x, y, n_restarts=2, seed=5, config=gpr.OptimizerConfig(iterations=60))
    assert np.array_equal(a.theta, b.theta)


def test_fit_constant_targets():
    x = np.linspace(0, 1, 10)[:, None]
    model, report = gpr.fit(x, np.full(10, 0.3), n_restarts=1, seed=0)
    hp = model.hyperparameters
    assert hp.sigma_f < 0.05  # started at 1.0
    mean, _ = gpr.predict(model, np.array([[0.25], [0.9]]))
    assert np.allclose(mean, 0.3, atol=1e-8)
    # zero data-fit term: NLML is bracketed by the noise-only and Hadamard bounds
    const = 5 * np.log(2 * np.pi)
    assert report.nlml >= 5 * np.log(hp.sigma_n**2) + const - 1e-9
    assert report.nlml <= 5 * np.log(hp.sigma_n**2 + hp.sigma_f**2 + 1e-10) + const + 1e-9


def test_fit_size_cap():
    x = np.zeros((5, 1))
    with pytest.raises(ArgumentError, match="max_exact_n"):
        gpr.fit(x, np.arange(5.0), config=gpr.OptimizerConfig(max_exact_n=4))


def test_metrics_examples():
    y = np.array([0.1, 0.4, 0.9])
    mae, r2, nmae = gpr.metrics(y, y)
    assert mae == 0 and r2 == 1
    mae, _, nmae = gpr.metrics(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    assert mae == 0.5 and nmae == 0.5
    rng = np.random.default_rng(0)
    t, p = rng.random(30), rng.random(30)
    mae, _, nmae = gpr.metrics(t, p)
    assert nmae == mae / (t.max() - t.min())
    with pytest.raises(ArgumentError):
        gpr.metrics(np.ones(3), np.zeros(3))


def test_prefit_refinement_never_worse_than_its_start():
    rng = np.random.default_rng(11)
    x = rng.uniform(-2, 2, (120, 2))
    y = np.sin(x[:, 0]) + 0.3 * x[:, 1] + 0.05 * rng.standard_normal(120)
    cfg = gpr.OptimizerConfig(n_restarts=2, iterations=80, prefit_subsample=40, refine_iterations=15)
    model, report = gpr.fit(x, y, seed=3, config=cfg)
    again, _ = gpr.fit(x, y, seed=3, config=cfg)
    assert np.array_equal(model.theta, again.theta)
    # replay the subsample stage to recover the refinement's starting point
    sub_rng = np.random.default_rng(3)
    sub = np.sort(sub_rng.choice(120, 40, replace=False))
    small = gpr.OptimizerConfig(n_restarts=2, iterations=80)
    pre, _ = gpr.fit(x[sub], y[sub], 2, int(sub_rng.integers(2**63)), small)
    start, _ = gpr.nlml_and_grad(pre.theta, x, y - y.mean())
    assert report.nlml <= start
    assert report.nlml == pytest.approx(gpr.nlml_and_grad(model.theta, x, y - y.mean())[0])
