"""2-point statistics, variance-equalizing rescaling, feature assembly and PCA.

Correlation maps are stored in canonical (unshifted) FFT order: index ``r``
holds the statistic for shift vector ``r`` modulo the cell size. Use
``np.fft.fftshift`` for display.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DegenerateEnsembleError, NumericalError
from .geometry import INTERFACE, SOLID, local_states

# combination tag -> ordered local-state pairs
COMBINATIONS = {
    "s": ((SOLID, SOLID),),
    "si": ((SOLID, SOLID), (INTERFACE, INTERFACE)),
    "six": ((SOLID, SOLID), (INTERFACE, INTERFACE), (SOLID, INTERFACE)),
}
COMBINATION_LABELS = {"s": "S", "si": "S+I", "six": "S+I+X"}
REFERENCE_PAIR = (SOLID, SOLID)


def combination_pairs(tag):
    key = str(tag).lower().replace("+", "")
    if key not in COMBINATIONS:
        raise ArgumentError(f"unknown combination {tag!r}; expected one of s, si, six")
    return COMBINATIONS[key]


def _check_masks(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ArgumentError(f"mask shapes differ or are not 2D: {a.shape} vs {b.shape}")
    return a, b


def two_point_fft(mask_a, mask_b):
    """Periodic 2-point statistics ``f(r) = 1/|S| sum_s a(s) b(s + r)`` via FFT.

    For binary masks every ``|S| f(r)`` is an integer pair count, so the
    inverse transform is rounded to the nearest integer before normalizing.
    This makes the result exact; the rounding distance is checked to catch
    non-binary input.
    """
    a, b = _check_masks(mask_a, mask_b)
    fa = np.fft.fft2(a.astype(np.float64))
    fb = fa if b is a else np.fft.fft2(b.astype(np.float64))
    raw = np.fft.ifft2(np.conj(fa) * fb)
    scale = max(1.0, float(a.size))
    if np.abs(raw.imag).max() > 1e-10 * scale:
        raise NumericalError("2-point statistics have a non-negligible imaginary residue")
    counts = np.rint(raw.real)
    if np.abs(raw.real - counts).max() > 1e-6:
        raise NumericalError("2-point counts are not integral; masks must be binary")
    return counts / a.size


def two_point_direct(mask_a, mask_b):
    """Direct periodic double sum; quadratic cost, used as an oracle."""
    a, b = _check_masks(mask_a, mask_b)
    h, w = a.shape
    out = np.zeros((h, w))
    for r1 in range(h):
        for r2 in range(w):
            out[r1, r2] = np.sum(a * np.roll(b, (-r1, -r2), axis=(0, 1)))
    return out / a.size


def cell_correlations(cell, pairs):
    states = local_states(cell)
    return {pair: two_point_fft(states[pair[0]], states[pair[1]]) for pair in pairs}


def compute_correlations(cells, pairs):
    """Stack correlation maps per pair: ``{pair: array (J, h, w)}``."""
    cells = list(cells)
    if not cells:
        raise ArgumentError("no cells given")
    h, w = np.asarray(cells[0]).shape
    out = {pair: np.empty((len(cells), h, w)) for pair in pairs}
    for j, cell in enumerate(cells):
        for pair, f in cell_correlations(cell, pairs).items():
            out[pair][j] = f
    return out


@dataclass(frozen=True)
class RescaleModel:
    means: dict
    stds: dict

    @property
    def reference_std(self):
        return self.stds[REFERENCE_PAIR]

    def factor(self, pair):
        pair = tuple(pair)
        if pair not in self.stds:
            raise ArgumentError(f"pair {pair} was not fitted")
        if pair == REFERENCE_PAIR:
            return 1.0
        return self.reference_std / self.stds[pair]


def fit_rescale(ensemble):
    """Mean and population std of each correlation set over all bins and cells."""
    if REFERENCE_PAIR not in ensemble:
        raise ArgumentError("the solid auto-correlation (1, 1) is required as reference")
    means, stds = {}, {}
    for pair, maps in ensemble.items():
        maps = np.asarray(maps)
        if maps.shape[0] < 2:
            raise ArgumentError("fit_rescale needs at least 2 cells")
        mu = float(maps.mean())
        sigma = float(np.sqrt(np.mean((maps - mu) ** 2)))
        if sigma == 0.0:
            raise DegenerateEnsembleError(f"correlation set {tuple(pair)} has zero variance across the ensemble")
        means[tuple(pair)] = mu
        stds[tuple(pair)] = sigma
    return RescaleModel(means, stds)


def apply_rescale(values, pair, model):
    """Multiply by sigma_11 / sigma_pair; the reference set is returned untouched."""
    factor = model.factor(pair)
    if tuple(pair) == REFERENCE_PAIR:
        return values
    return np.asarray(values) * factor


def assemble_features(ensemble, model, combination, dtype=np.float64):
    """Concatenate flattened rescaled maps per cell in the combination's pair order."""
    pairs = combination_pairs(combination)
    missing = [p for p in pairs if p not in ensemble]
    if missing:
        raise ArgumentError(f"correlations missing for pairs {missing}")
    n = ensemble[pairs[0]].shape[0]
    blocks = [apply_rescale(ensemble[p].reshape(n, -1), p, model).astype(dtype, copy=False) for p in pairs]
    return np.hstack(blocks)


def featurize(cells, combination, dtype=np.float64):
    """Correlations, fitted rescaling and feature matrix for a list of cells."""
    pairs = combination_pairs(combination)
    ensemble = compute_correlations(cells, pairs)
    model = fit_rescale(ensemble)
    return assemble_features(ensemble, model, combination, dtype=dtype), model


# -- PCA ---------------------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray  # (R,)
    components: np.ndarray  # (k, R), orthonormal rows
    explained_variance: np.ndarray  # (k,)

    @property
    def n_components(self):
        return self.components.shape[0]

    def truncate(self, k):
        if not 1 <= k <= self.n_components:
            raise ArgumentError(f"cannot keep {k} of {self.n_components} components")
        return PcaModel(self.mean, self.components[:k], self.explained_variance[:k])


def _orthonormal(y):
    q, _ = np.linalg.qr(y)
    return q


def _flip_signs(vt):
    # largest-magnitude entry of each component positive
    idx = np.abs(vt).argmax(axis=1)
    signs = np.sign(vt[np.arange(vt.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vt * signs[:, None]


def randomized_range_svd(x, mean, k, rng, oversample=10, power_iters=4):
    """Top-``k`` right singular vectors and values of ``x - mean`` (centering implicit).

    Gaussian sketch with ``oversample`` extra columns and ``power_iters``
    subspace iterations, re-orthonormalized after every multiplication.
    """
    j, r = x.shape
    width = min(k + oversample, j, r)
    ones = np.ones(j)

    def times(m):  # (x - mean) @ m
        return x @ m - np.outer(ones, mean @ m)

    def t_times(m):  # (x - mean).T @ m
        return x.T @ m - np.outer(mean, ones @ m)

    q = _orthonormal(times(rng.standard_normal((r, width))))
    for _ in range(power_iters):
        q = _orthonormal(times(_orthonormal(t_times(q))))
    b = t_times(q).T  # (width, r)
    _, s, vt = np.linalg.svd(b, full_matrices=False)
    return s[:k], vt[:k]


def pca_fit(features, n_components, seed=0, method="randomized", oversample=10, power_iters=4):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ArgumentError("features must be a 2D matrix")
    j, r = x.shape
    if not 1 <= n_components <= min(j - 1, r):
        raise ArgumentError(f"n_components={n_components} outside [1, {min(j - 1, r)}]")
    mean = x.mean(axis=0)
    if method == "randomized":
        rng = np.random.default_rng(seed)
        s, vt = randomized_range_svd(x, mean, n_components, rng, oversample, power_iters)
    elif method == "exact":
        _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
        s, vt = s[:n_components], vt[:n_components]
    else:
        raise ArgumentError(f"unknown PCA method {method!r}")
    vt = _flip_signs(vt)
    return PcaModel(mean, vt, s**2 / (j - 1))


def pca_transform(model, features):
    x = np.asarray(features, dtype=np.float64)
    if x.shape[-1] != model.mean.shape[0]:
        raise ArgumentError(f"feature length {x.shape[-1]} != model length {model.mean.shape[0]}")
    return (x - model.mean) @ model.components.T


def pca_reconstruct(model, scores):
    a = np.asarray(scores, dtype=np.float64)
    if a.shape[-1] != model.n_components:
        raise ArgumentError(f"score length {a.shape[-1]} != {model.n_components} components")
    return a @ model.components + model.mean


# -- score standardization ---------------------------------------------------


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, scores):
        s = np.asarray(scores, dtype=np.float64)
        if s.shape[-1] != self.mean.shape[0]:
            raise ArgumentError("column count does not match the scaler")
        return (s - self.mean) / self.std


def fit_scaler(train_scores):
    s = np.asarray(train_scores, dtype=np.float64)
    mean = s.mean(axis=0)
    std = s.std(axis=0)
    zero = np.flatnonzero(std == 0)
    if zero.size:
        raise DegenerateEnsembleError(f"PC score column {int(zero[0]) + 1} has zero variance in the training set")
    return Scaler(mean, std)


def standardize_scores(train_scores, apply_scores=None):
    """Standardize with training statistics; returns ``(train, applied, scaler)``."""
    scaler = fit_scaler(train_scores)
    applied = None if apply_scores is None else scaler.transform(apply_scores)
    return scaler.transform(train_scores), applied, scaler
