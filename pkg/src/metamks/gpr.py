"""Exact Gaussian process regression with an ARD squared-exponential kernel.

Hyperparameters live in the log domain as one vector
``theta = (log sigma_f, log sigma_n, log l_1, ..., log l_D)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.linalg.lapack import dpotri

from .errors import ArgumentError, ConditioningError, FitError, NumericalError

LOG_2PI = np.log(2.0 * np.pi)
JITTER_LADDER = tuple(10.0**p for p in range(-10, -3))  # 1e-10 ... 1e-4
DEFAULT_MAX_EXACT_N = 8192


@dataclass(frozen=True)
class Hyperparameters:
    log_sigma_f: float
    log_sigma_n: float
    log_lengthscales: np.ndarray

    @classmethod
    def from_vector(cls, theta):
        theta = np.asarray(theta, dtype=np.float64)
        return cls(float(theta[0]), float(theta[1]), theta[2:].copy())

    def vector(self):
        return np.concatenate([[self.log_sigma_f, self.log_sigma_n], self.log_lengthscales])

    @property
    def sigma_f(self):
        return float(np.exp(self.log_sigma_f))

    @property
    def sigma_n(self):
        return float(np.exp(self.log_sigma_n))

    @property
    def lengthscales(self):
        return np.exp(self.log_lengthscales)


@dataclass(frozen=True)
class OptimizerConfig:
    n_restarts: int = 5
    iterations: int = 500
    learning_rate: float = 0.05
    min_learning_rate: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    max_exact_n: int = DEFAULT_MAX_EXACT_N
    # Optional two-stage fit: the restart schedule runs on a seeded subsample
    # of this many rows, then one warm-started refinement runs on all rows.
    # 0 disables it.
    prefit_subsample: int = 0
    refine_iterations: int = 60
    refine_learning_rate: float = 0.02


@dataclass
class FitReport:
    nlml: float
    restarts: int
    best_restart: int
    iterations: int
    grad_norm: float
    restart_nlml: list = field(default_factory=list)


def kernel(x, x_prime, theta, same_point=False):
    """Single kernel evaluation; the noise term enters only when ``same_point``."""
    hp = theta if isinstance(theta, Hyperparameters) else Hyperparameters.from_vector(theta)
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=np.float64))
    if x.shape != hp.log_lengthscales.shape or x_prime.shape != x.shape:
        raise ArgumentError("input dimension does not match the number of length-scales")
    r2 = np.sum(((x - x_prime) / hp.lengthscales) ** 2)
    value = hp.sigma_f**2 * np.exp(-0.5 * r2)
    if same_point:
        value += hp.sigma_n**2
    return float(value)


def _scaled_sqdist(a, b, lengthscales):
    a = a / lengthscales
    b = b / lengthscales
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d2, 0.0)


def signal_gram(a, b, theta):
    """Signal part ``sigma_f^2 exp(-r^2/2)`` of the cross-covariance (no noise)."""
    hp = theta if isinstance(theta, Hyperparameters) else Hyperparameters.from_vector(theta)
    return hp.sigma_f**2 * np.exp(-0.5 * _scaled_sqdist(a, b, hp.lengthscales))


def gram(x, theta):
    """Training Gram matrix including the noise diagonal, exactly symmetric."""
    hp = theta if isinstance(theta, Hyperparameters) else Hyperparameters.from_vector(theta)
    k = signal_gram(x, x, hp)
    k = 0.5 * (k + k.T)
    k[np.diag_indices_from(k)] = hp.sigma_f**2 + hp.sigma_n**2
    return k


def _factor(k, jitter):
    """Cholesky of ``k + jitter I``, escalating jitter up to 1e-4 on failure.

    Returns ``(lower, jitter_used)``; the strict upper triangle is zero.
    """
    if not np.all(np.isfinite(k)):
        raise NumericalError("kernel matrix contains non-finite entries")
    ladder = [j for j in JITTER_LADDER if j >= jitter] or [jitter]
    if jitter < ladder[0]:
        ladder.insert(0, jitter)
    n = k.shape[0]
    for j in ladder:
        a = k.copy()
        a.flat[:: n + 1] += j
        try:
            return cholesky(a, lower=True, overwrite_a=True, check_finite=False), j
        except LinAlgError:
            continue
    raise ConditioningError(f"kernel matrix not positive definite with jitter up to {ladder[-1]:g}")


def nlml_and_grad(theta, x, y, jitter=1e-10):
    """Negative log marginal likelihood and its gradient in log-hyperparameters."""
    hp = Hyperparameters.from_vector(theta)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = x.shape
    if hp.log_lengthscales.shape[0] != d:
        raise ArgumentError(f"theta has {hp.log_lengthscales.shape[0]} length-scales for {d} inputs")
    if not np.all(np.isfinite(theta)):
        raise NumericalError("non-finite hyperparameters")
    ls = hp.lengthscales
    kf = signal_gram(x, x, hp)
    kf = 0.5 * (kf + kf.T)
    kf.flat[:: n + 1] = hp.sigma_f**2
    k = kf.copy()
    k.flat[:: n + 1] += hp.sigma_n**2
    lower, _ = _factor(k, jitter)
    alpha = cho_solve((lower, True), y, check_finite=False)
    nlml = 0.5 * y @ alpha + np.log(np.diag(lower)).sum() + 0.5 * n * LOG_2PI

    kinv, info = dpotri(lower, lower=1)
    if info != 0:
        raise ConditioningError(f"inverse from the Cholesky factor failed (info={info})")
    # dpotri fills the lower triangle only; the upper one is still zero
    w = kinv + kinv.T
    w.flat[:: n + 1] *= 0.5
    w -= np.outer(alpha, alpha)
    grad = np.empty(2 + d)
    grad[1] = hp.sigma_n**2 * np.trace(w)
    wk = w
    wk *= kf
    grad[0] = wk.sum()  # dK/dlog sf = 2 Kf, times 1/2
    # sum_ij wk_ij (x_id - x_jd)^2 = 2 sum_i x_id^2 rowsum_i - 2 x_d^T wk x_d  (wk symmetric)
    rowsum = wk.sum(axis=1)
    quad = 2.0 * (x * x).T @ rowsum - 2.0 * np.einsum("id,id->d", x, wk @ x)
    grad[2:] = 0.5 * quad / ls**2
    return float(nlml), grad


@dataclass(frozen=True)
class GprModel:
    hyperparameters: Hyperparameters
    x: np.ndarray
    y: np.ndarray  # shifted targets (training mean removed)
    y_shift: float
    jitter: float
    lower: np.ndarray
    alpha: np.ndarray

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def theta(self):
        return self.hyperparameters.vector()


def build_model(theta, x, y, jitter=1e-10, y_shift=None):
    """Factorize the Gram matrix for fixed hyperparameters.

    ``y`` are raw targets; the training mean is removed (or ``y_shift`` if given).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ArgumentError(f"shape mismatch: X {x.shape}, y {y.shape}")
    shift = float(y.mean()) if y_shift is None else float(y_shift)
    hp = Hyperparameters.from_vector(theta)
    if hp.log_lengthscales.shape[0] != x.shape[1]:
        raise ArgumentError("theta dimension does not match X")
    yc = y - shift
    lower, used = _factor(gram(x, hp), jitter)
    alpha = cho_solve((lower, True), yc)
    return GprModel(hp, x, yc, shift, used, lower, alpha)


def predict(model, x_star):
    """Predictive mean and variance (including the noise term) at test inputs."""
    xs = np.atleast_2d(np.asarray(x_star, dtype=np.float64))
    if xs.shape[1] != model.dim:
        raise ArgumentError(f"test inputs have {xs.shape[1]} columns, model expects {model.dim}")
    hp = model.hyperparameters
    ks = signal_gram(model.x, xs, hp)
    mean = ks.T @ model.alpha + model.y_shift
    v = solve_triangular(model.lower, ks, lower=True, check_finite=False)
    prior = hp.sigma_f**2 + hp.sigma_n**2
    var = prior - np.einsum("ij,ij->j", v, v)
    # cancellation at training inputs is bounded by the conditioning of K, so
    # the tolerance scales with the prior variance
    if var.min() < -max(1e-12, 1e-8 * prior):
        raise NumericalError(f"negative predictive variance {var.min():.3e}")
    return mean, np.maximum(var, 0.0)


def default_theta(y, dim):
    scale = float(np.std(y))
    if not scale > 0:
        scale = 1.0
    return np.concatenate([[np.log(scale), np.log(0.05 * scale)], np.zeros(dim)])


def _cosine_lr(cfg, t):
    return cfg.min_learning_rate + 0.5 * (cfg.learning_rate - cfg.min_learning_rate) * (
        1.0 + np.cos(np.pi * t / max(cfg.iterations, 1))
    )


def adam_minimize(theta0, x, y, cfg, jitter=1e-10):
    """Adam with a cosine-annealed step; returns the best iterate visited."""
    theta = np.array(theta0, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    best = (np.inf, theta.copy(), np.inf)
    steps = 0
    for t in range(cfg.iterations + 1):
        try:
            f, g = nlml_and_grad(theta, x, y, jitter)
        except (ConditioningError, NumericalError):
            break
        if f < best[0]:
            best = (f, theta.copy(), float(np.linalg.norm(g)))
        if t == cfg.iterations:
            break
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1 ** (t + 1))
        vhat = v / (1 - cfg.beta2 ** (t + 1))
        theta = theta - _cosine_lr(cfg, t) * mhat / (np.sqrt(vhat) + 1e-8)
        steps += 1
    if not np.isfinite(best[0]):
        raise ConditioningError("no finite objective along the optimization path")
    return best[1], best[0], steps, best[2]


def fit(x, y, n_restarts=None, seed=0, config=None, jitter=1e-10, init_theta=None):
    """Maximize the marginal likelihood from several seeded starts.

    Restart 0 starts at ``init_theta`` when given (warm start), otherwise at
    the defaults ``l_d = 1, sigma_f = std(y), sigma_n = 0.05 std(y)``; every
    further restart multiplies the defaults by ``exp(U[-1, 1])`` elementwise.

    With ``config.prefit_subsample`` set below ``len(x)``, the restarts run on
    a seeded subsample and the winner is refined on all rows. On large
    training sets this avoids a small-length-scale, low-noise local optimum
    that full-data Adam from the defaults tends to settle into.
    """
    cfg = config or OptimizerConfig()
    restarts = cfg.n_restarts if n_restarts is None else n_restarts
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ArgumentError(f"shape mismatch: X {x.shape}, y {y.shape}")
    n, d = x.shape
    if n < 2:
        raise ArgumentError("fit needs at least 2 training points")
    if n > cfg.max_exact_n:
        raise ArgumentError(f"{n} training points exceed max_exact_n={cfg.max_exact_n}; subsample or raise the cap")
    if restarts < 1:
        raise ArgumentError("n_restarts must be >= 1")
    shift = float(y.mean())
    yc = y - shift
    rng = np.random.default_rng(seed)
    if 0 < cfg.prefit_subsample < n:
        sub = np.sort(rng.choice(n, cfg.prefit_subsample, replace=False))
        small = replace(cfg, prefit_subsample=0)
        pre, pre_report = fit(x[sub], y[sub], restarts, int(rng.integers(2**63)), small, jitter, init_theta)
        refine = replace(cfg, iterations=cfg.refine_iterations, learning_rate=cfg.refine_learning_rate, min_learning_rate=0.0)
        try:
            theta, nlml, steps, gnorm = adam_minimize(pre.theta, x, yc, refine, jitter)
        except ConditioningError as exc:
            raise FitError(f"refinement on all {n} rows failed: {exc}") from None
        model = build_model(theta, x, y, jitter=jitter, y_shift=shift)
        report = FitReport(nlml, restarts, pre_report.best_restart, steps, gnorm, [nlml])
        return model, report
    base = default_theta(yc, d)
    results = []
    for r in range(restarts):
        if r == 0:
            start = base if init_theta is None else np.asarray(init_theta, dtype=np.float64)
        else:
            start = base + rng.uniform(-1.0, 1.0, size=base.shape)
        try:
            results.append(adam_minimize(start, x, yc, cfg, jitter))
        except ConditioningError:
            results.append(None)
    ok = [(i, res) for i, res in enumerate(results) if res is not None]
    if not ok:
        raise FitError(f"all {restarts} restarts failed to factorize the kernel matrix")
    best_i, (theta, nlml, steps, gnorm) = min(ok, key=lambda item: item[1][1])
    model = build_model(theta, x, y, jitter=jitter, y_shift=shift)
    report = FitReport(
        nlml=nlml,
        restarts=restarts,
        best_restart=best_i,
        iterations=steps,
        grad_norm=gnorm,
        restart_nlml=[None if res is None else res[1] for res in results],
    )
    return model, report


class UndefinedMetricError(ArgumentError):
    pass


def metrics(y_true, y_pred):
    """Return ``(MAE, R^2, nMAE)``; nMAE divides by the range of ``y_true``."""
    t = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 1 or t.size < 1:
        raise ArgumentError("y_true and y_pred must be equal-length 1D arrays")
    mae = float(np.mean(np.abs(t - p)))
    span = float(t.max() - t.min())
    if t.size < 2 or span == 0.0:
        raise UndefinedMetricError("R^2 and nMAE are undefined for constant y_true")
    r2 = 1.0 - float(np.sum((t - p) ** 2) / np.sum((t - t.mean()) ** 2))
    return mae, r2, mae / span


def mae(y_true, y_pred):
    return float(np.mean(np.abs(np.asarray(y_true, dtype=np.float64) - np.asarray(y_pred, dtype=np.float64))))
