"""Pool-based active learning with maximum-variance queries.

The loop fits a GP on the labeled rows, scores the remaining pool, records
the pool MAE and the largest predictive standard deviation, then moves the
most uncertain pool row into the labeled set. It stops when the mean
relative change of the tracked metric over a sliding window drops below a
threshold, or when the labeling budget is spent.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import gpr
from .errors import ArgumentError, MetamksError, StateError
from .statistics import fit_scaler

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StopRule:
    window: int = 5
    epsilon: float = 1e-4
    budget: int = 600

    def validate(self, n_init=None):
        if self.window < 1:
            raise ArgumentError("window Q must be >= 1")
        if not self.epsilon > 0:
            raise ArgumentError("epsilon must be > 0")
        if n_init is not None and self.budget < n_init:
            raise ArgumentError(f"budget {self.budget} is smaller than the initial set ({n_init})")
        return self


@dataclass
class ActiveState:
    labeled: list
    pool: list
    history: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    @property
    def iteration(self):
        return len(self.history)

    def check_partition(self, n_total):
        sets = [set(self.labeled), set(self.pool), set(self.failed)]
        union = set().union(*sets)
        if sum(map(len, sets)) != n_total or union != set(range(n_total)):
            raise StateError("labeled, pool and failed indices do not partition the index set")


@dataclass(frozen=True)
class CurveRow:
    iteration: int
    n_labeled: int
    pool_mae: float  # nan in oracle mode
    max_pool_std: float
    chosen_index: int  # -1 when nothing was queried after this evaluation
    theta: tuple


@dataclass
class LearningCurve:
    rows: list
    rep: int
    seed: int
    stopped: bool  # True when the window rule fired (as opposed to budget or pool exhaustion)
    skipped: list = field(default_factory=list)

    @property
    def n_labeled(self):
        return np.array([r.n_labeled for r in self.rows])

    @property
    def pool_mae(self):
        return np.array([r.pool_mae for r in self.rows])

    @property
    def max_pool_std(self):
        return np.array([r.max_pool_std for r in self.rows])


def init_state(n_total, n_init, seed):
    if not 1 <= n_init < n_total:
        raise ArgumentError(f"need 1 <= n_init < n_total, got n_init={n_init}, n_total={n_total}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n_total, size=n_init, replace=False)
    mask = np.zeros(n_total, bool)
    mask[chosen] = True
    return ActiveState(labeled=[int(i) for i in chosen], pool=[int(i) for i in np.flatnonzero(~mask)])


def _variance_order(variances):
    # descending variance, ties resolved by lowest position (stable sort)
    return np.argsort(-np.asarray(variances), kind="stable")


def query_max_variance(model, pool_features):
    pool = np.atleast_2d(np.asarray(pool_features, dtype=np.float64))
    if pool.shape[0] == 0 or np.asarray(pool_features).size == 0:
        raise StateError("cannot query an empty pool")
    _, var = gpr.predict(model, pool)
    return int(_variance_order(var)[0])


def stopping_met(history, rule):
    """Mean absolute relative change over the last ``Q`` consecutive pairs below ``epsilon``.

    A zero value in a denominator counts as converged: the metric cannot
    improve further.
    """
    h = np.asarray(history, dtype=np.float64)
    q = rule.window
    if h.size < q + 1:
        return False
    tail = h[-(q + 1) :]
    prev, cur = tail[:-1], tail[1:]
    if np.any(prev == 0):
        return True
    return bool(np.mean(np.abs((cur - prev) / prev)) < rule.epsilon)


def _iteration_seed(seed, iteration):
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])


def run(
    features,
    labels=None,
    oracle=None,
    rule=None,
    gpr_config=None,
    seed=0,
    n_init=10,
    initial_config=None,
    restandardize=False,
    rep=0,
):
    """Run one active-learning repetition; returns ``(LearningCurve, GprModel)``.

    Benchmark mode (``labels`` given) tracks the pool MAE for stopping.
    Oracle mode (``oracle`` callable, ``labels`` None) has no pool MAE and
    applies the same window rule to the max pool standard deviation. The
    first fit uses ``initial_config`` (default: the stock optimizer settings);
    every later fit uses ``gpr_config`` with two restarts, the first
    warm-started from the previous optimum and the second fresh.
    """
    x_all = np.asarray(features, dtype=np.float64)
    if x_all.ndim != 2:
        raise ArgumentError("features must be a 2D matrix")
    n_total = x_all.shape[0]
    if (labels is None) == (oracle is None):
        raise ArgumentError("give exactly one of labels (benchmark mode) or oracle")
    rule = (rule or StopRule()).validate(n_init)
    cfg = gpr_config or gpr.OptimizerConfig()
    benchmark = labels is not None
    y_known = np.full(n_total, np.nan)
    if benchmark:
        y_known = np.asarray(labels, dtype=np.float64).copy()
        if y_known.shape != (n_total,):
            raise ArgumentError("labels must have one entry per feature row")

    state = init_state(n_total, n_init, seed)
    if not benchmark:
        for i in state.labeled:
            y_known[i] = oracle(i)
    rows, skipped = [], []
    theta = None
    stopped = False
    while True:
        lab = np.asarray(state.labeled)
        if restandardize:
            x = fit_scaler(x_all[lab]).transform(x_all)
        else:
            x = x_all
        if theta is None:
            fit_cfg, restarts = initial_config or gpr.OptimizerConfig(), None
        else:
            fit_cfg, restarts = cfg, 2
        model, _ = gpr.fit(
            x[lab], y_known[lab], n_restarts=restarts, seed=_iteration_seed(seed, state.iteration), config=fit_cfg, init_theta=theta
        )
        theta = model.theta
        pool = np.asarray(state.pool, dtype=np.intp)
        if pool.size:
            mean, var = gpr.predict(model, x[pool])
            pool_mae = gpr.mae(y_known[pool], mean) if benchmark else float("nan")
            max_std = float(np.sqrt(var.max()))
        else:
            var = np.empty(0)
            pool_mae, max_std = float("nan"), float("nan")
        state.history.append((pool_mae, max_std))
        metric = [h[0] if benchmark else h[1] for h in state.history]

        chosen = -1
        if stopping_met(metric, rule):
            stopped = True
        elif len(state.labeled) < rule.budget and pool.size:
            for pos in _variance_order(var):
                idx = int(pool[pos])
                try:
                    value = y_known[idx] if benchmark else float(oracle(idx))
                    if not np.isfinite(value):
                        raise MetamksError(f"label for index {idx} is not finite")
                except MetamksError as exc:
                    log.warning("skipping pool index %d: %s", idx, exc)
                    skipped.append(idx)
                    state.pool.remove(idx)
                    state.failed.append(idx)
                    continue
                y_known[idx] = value
                state.pool.remove(idx)
                state.labeled.append(idx)
                chosen = idx
                break
        rows.append(CurveRow(len(rows), len(lab), pool_mae, max_std, chosen, tuple(theta)))
        if chosen < 0:
            break
    state.check_partition(n_total)
    return LearningCurve(rows, rep, seed, stopped, skipped), model


@dataclass
class AggregatedCurve:
    iteration: np.ndarray
    n_labeled: np.ndarray
    mae_mean: np.ndarray
    mae_std: np.ndarray
    std_mean: np.ndarray
    std_std: np.ndarray
    padded: np.ndarray  # (reps, iterations) True where a value was carried forward
    curves: list


def aggregate(curves):
    """Align curves by iteration, carrying each run's last values forward."""
    if not curves:
        raise ArgumentError("no curves to aggregate")
    length = max(len(c.rows) for c in curves)
    mae = np.empty((len(curves), length))
    std = np.empty((len(curves), length))
    nlab = np.empty((len(curves), length))
    padded = np.zeros((len(curves), length), bool)
    for r, c in enumerate(curves):
        k = len(c.rows)
        mae[r, :k], std[r, :k], nlab[r, :k] = c.pool_mae, c.max_pool_std, c.n_labeled
        mae[r, k:], std[r, k:], nlab[r, k:] = mae[r, k - 1], std[r, k - 1], nlab[r, k - 1]
        padded[r, k:] = True
    def spread(a):
        # exact zero for identical repetitions (np.std leaves rounding residue)
        return np.where(np.ptp(a, axis=0) == 0, 0.0, a.std(axis=0))

    return AggregatedCurve(
        iteration=np.arange(length),
        n_labeled=nlab.mean(axis=0),
        mae_mean=mae.mean(axis=0),
        mae_std=spread(mae),
        std_mean=std.mean(axis=0),
        std_std=spread(std),
        padded=padded,
        curves=list(curves),
    )


def repeat_seeds(n_reps, base_seed):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(base_seed).spawn(n_reps)]


def repeat_runs(n_reps, base_seed, features, seeds=None, jobs=1, **run_kwargs):
    """Independent repetitions of :func:`run`, aggregated per iteration."""
    if n_reps < 1:
        raise ArgumentError("n_reps must be >= 1")
    seeds = repeat_seeds(n_reps, base_seed) if seeds is None else list(seeds)
    if len(seeds) != n_reps:
        raise ArgumentError("need one seed per repetition")

    def one(rep):
        return run(features, seed=seeds[rep], rep=rep, **run_kwargs)[0]

    if jobs == 1:
        curves = [one(r) for r in range(n_reps)]
    else:
        from joblib import Parallel, delayed

        curves = Parallel(n_jobs=jobs)(delayed(one)(r) for r in range(n_reps))
    return aggregate(curves)
