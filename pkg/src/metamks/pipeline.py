"""Experiment building blocks shared by the CLI and the acceptance suite.

Each helper is a pure function of its inputs and seeds; the CLI layer only
adds file handling and manifests.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import gpr
from .errors import ArgumentError, MetamksError
from .statistics import COMBINATION_LABELS, combination_pairs, featurize, pca_fit, pca_transform, standardize_scores

STAGES = ("gen", "label", "features", "pca", "train", "sweep", "al", "eval", "import", "plot")


def derive_seed(seed, stage):
    """Stage seed from a global seed by hashing ``"<seed>:<stage>"`` (63-bit)."""
    digest = hashlib.sha256(f"{int(seed)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def split_indices(n, train_fraction=0.8, seed=0):
    """Seeded shuffle split; returns sorted ``(train, test)`` index arrays."""
    if not 0 < train_fraction < 1:
        raise ArgumentError("split fraction must lie in (0, 1)")
    if n < 4:
        raise ArgumentError("need at least 4 samples to split")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 2), n - 1)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def kept_mask(labels, threshold=0.01, converged=None):
    y = np.asarray(labels, dtype=np.float64)
    mask = np.isfinite(y)
    if threshold > 0:
        mask &= np.where(mask, y, -np.inf) >= threshold
    if converged is not None:
        mask &= np.asarray(converged, bool)
    return mask


def pc_scores(cells, combination, n_components=8, seed=0, dtype=np.float64):
    """Features -> PCA -> raw scores for a list of cells. Returns ``(scores, pca, rescale)``."""
    x, rescale = featurize(cells, combination, dtype=dtype)
    pca = pca_fit(x, n_components, seed=seed)
    return pca_transform(pca, x), pca, rescale


@dataclass
class Evaluation:
    n_components: int
    mae: float
    r2: float
    nmae: float
    baseline_mae: float
    y_true: np.ndarray
    y_pred: np.ndarray
    model: object = None
    report: object = None


def train_and_evaluate(scores, labels, train_idx, test_idx, n_components, seed=0, n_restarts=None, config=None):
    """Fit a GP on standardized leading scores of the training rows; score the test rows."""
    s = np.asarray(scores, dtype=np.float64)
    if not 1 <= n_components <= s.shape[1]:
        raise ArgumentError(f"n_components={n_components} not available (have {s.shape[1]})")
    y = np.asarray(labels, dtype=np.float64)
    x_train, x_test, _ = standardize_scores(s[train_idx, :n_components], s[test_idx, :n_components])
    model, report = gpr.fit(x_train, y[train_idx], n_restarts=n_restarts, seed=seed, config=config)
    pred, _ = gpr.predict(model, x_test)
    mae, r2, nmae = gpr.metrics(y[test_idx], pred)
    baseline = gpr.mae(y[test_idx], np.full(len(test_idx), y[train_idx].mean()))
    return Evaluation(n_components, mae, r2, nmae, baseline, y[test_idx], pred, model, report)


@dataclass
class SweepRow:
    combination: str
    n_components: int
    mae: float
    r2: float
    nmae: float
    error: str = ""


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)

    def table(self):
        return {(r.combination, r.n_components): r.mae for r in self.rows}


def sweep(cells, labels, combinations=("s", "si", "six"), components=range(1, 9), train_fraction=0.8, seed=0, n_restarts=None, config=None):
    """Train one model per (combination, PC count) on a single seeded split.

    ``cells`` and ``labels`` should already be restricted to the kept rows.
    A failing model is recorded with its error and the sweep continues.
    """
    components = list(components)
    train_idx, test_idx = split_indices(len(labels), train_fraction, derive_seed(seed, "split"))
    report = SweepReport()
    for combo in combinations:
        combination_pairs(combo)
        scores, _, _ = pc_scores(cells, combo, max(components), seed=derive_seed(seed, "pca"))
        for k in components:
            try:
                ev = train_and_evaluate(scores, labels, train_idx, test_idx, k, seed=derive_seed(seed, "train"), n_restarts=n_restarts, config=config)
                report.rows.append(SweepRow(COMBINATION_LABELS[combo.lower().replace("+", "")], k, ev.mae, ev.r2, ev.nmae))
            except MetamksError as exc:
                nan = float("nan")
                report.rows.append(SweepRow(COMBINATION_LABELS[combo.lower().replace("+", "")], k, nan, nan, nan, str(exc)))
    return report
