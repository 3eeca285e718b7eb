"""Stochastic unit-cell generation and local-state extraction.

Cells are ``uint8`` arrays of shape ``(height, width)`` with 1 = solid and
0 = void. Every consumer treats them as periodic in both directions.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, GenerationStallError

SOLID = 1
VOID = 0
INTERFACE = 2


@dataclass(frozen=True)
class GenConfig:
    tile_size: int = 48
    correlation_length: float = 8.0
    density_band: tuple = (0.30, 0.68)
    min_boundary_fraction: float = 0.1
    require_connected: bool = True
    min_acceptance: float = 0.01
    trial_budget: int = 2000

    def validate(self):
        lo, hi = self.density_band
        if not 0.0 < lo <= hi < 1.0:
            raise ArgumentError(f"density_band must satisfy 0 < lo <= hi < 1, got {self.density_band}")
        if self.tile_size < 2:
            raise ArgumentError("tile_size must be >= 2")
        if self.correlation_length <= 0:
            raise ArgumentError("correlation_length must be positive")
        if not 0.0 <= self.min_boundary_fraction <= 1.0:
            raise ArgumentError("min_boundary_fraction must lie in [0, 1]")
        return self


@dataclass(frozen=True)
class DiversityReport:
    mean_pairwise_distance: float
    normalized_score: float
    kmeans_cluster_size_cv: float
    k: int


def as_cell(cells):
    """Validate and return ``cells`` as a binary ``uint8`` array."""
    arr = np.asarray(cells)
    if arr.ndim != 2 or arr.size == 0:
        raise ArgumentError(f"cell must be a non-empty 2D array, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ArgumentError("cell values must be exactly 0 or 1")
    return arr.astype(np.uint8, copy=False)


def sample_gaussian_field(seed, width, height, correlation_length):
    """Periodic Gaussian random field with a squared-exponential spectrum.

    White noise is filtered in Fourier space by ``sqrt(S(k))`` with
    ``S(k) = exp(-|k|^2 l^2 / 2)``; the zero mode is removed and the sample is
    rescaled to exactly zero mean and unit standard deviation.
    """
    if width < 2 or height < 2:
        raise ArgumentError(f"field dimensions must be >= 2, got {width}x{height}")
    if not correlation_length > 0:
        raise ArgumentError("correlation_length must be positive")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width))
    ky = 2.0 * np.pi * np.fft.fftfreq(height)
    kx = 2.0 * np.pi * np.fft.fftfreq(width)
    log_s = -0.5 * (ky[:, None] ** 2 + kx[None, :] ** 2) * correlation_length**2
    log_s[0, 0] = -np.inf
    # shift so the strongest nonzero mode has unit weight (no underflow to all-zero)
    log_s -= log_s[np.isfinite(log_s)].max()
    amp = np.exp(0.5 * log_s)
    field = np.fft.ifft2(np.fft.fft2(noise) * amp).real
    field -= field.mean()
    std = field.std()
    if std > 0:
        field /= std
    return field


def binarize(field, threshold):
    """Solid where ``field >= threshold``."""
    return (np.asarray(field) >= threshold).astype(np.uint8)


def _periodic_labels(solid):
    """Number of 4-connected solid components with periodic wrap."""
    labels, n = ndimage.label(solid)
    if n <= 1:
        return n
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for edge_a, edge_b in ((labels[0, :], labels[-1, :]), (labels[:, 0], labels[:, -1])):
        for a, b in zip(edge_a, edge_b):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb
    return len({find(i) for i in range(1, n + 1)})


def count_solid_components(cell):
    return _periodic_labels(as_cell(cell))


def boundary_connectivity_ok(cell, min_boundary_fraction=0.1, require_connected=True):
    """Check boundary material presence and (optionally) periodic connectivity."""
    cell = as_cell(cell)
    if not 0.0 <= min_boundary_fraction <= 1.0:
        raise ArgumentError("min_boundary_fraction must lie in [0, 1]")
    edges = (cell[0, :], cell[-1, :], cell[:, 0], cell[:, -1])
    if min(e.mean() for e in edges) < min_boundary_fraction:
        return False
    if require_connected:
        return _periodic_labels(cell) == 1
    return True


def mirror_periodic(tile):
    """Mirror a tile horizontally then vertically into a 2x-sized periodic cell."""
    tile = as_cell(tile)
    top = np.hstack([tile, tile[:, ::-1]])
    return np.vstack([top, top[::-1, :]])


def volume_fraction(mask):
    mask = as_cell(mask)
    return int(mask.sum(dtype=np.int64)) / mask.size


def extract_interface(cell):
    """Void pixels with at least one solid pixel in the periodic 5-point stencil."""
    cell = as_cell(cell)
    conv = (
        cell.astype(np.int16)
        + np.roll(cell, 1, axis=0)
        + np.roll(cell, -1, axis=0)
        + np.roll(cell, 1, axis=1)
        + np.roll(cell, -1, axis=1)
    )
    return ((cell == 0) & (conv > 0)).astype(np.uint8)


def local_states(cell):
    """Indicator arrays for void (0), solid (1) and interface (2)."""
    cell = as_cell(cell)
    return {VOID: (1 - cell).astype(np.uint8), SOLID: cell, INTERFACE: extract_interface(cell)}


def _trial(seed, trial, config):
    """One rejection-sampling trial; returns the mirrored cell or None."""
    rng = np.random.default_rng([seed, trial])
    n = config.tile_size
    field = sample_gaussian_field(rng.integers(2**63), n, n, config.correlation_length)
    lo, hi = config.density_band
    npix = field.size
    k_lo, k_hi = int(np.ceil(lo * npix)), int(np.floor(hi * npix))
    if k_hi < k_lo:
        raise ArgumentError(f"density band {config.density_band} admits no pixel count on a {n}x{n} tile")
    target = rng.uniform(lo, hi)
    k = min(max(int(round(target * npix)), k_lo), k_hi)
    threshold = np.sort(field, axis=None)[npix - k]
    tile = binarize(field, threshold)
    if not lo <= volume_fraction(tile) <= hi:
        return None
    if not boundary_connectivity_ok(tile, config.min_boundary_fraction, require_connected=False):
        return None
    cell = mirror_periodic(tile)
    if config.require_connected and _periodic_labels(cell) != 1:
        return None
    return cell


def generate_dataset(count, seed, config=None):
    """Rejection-sample ``count`` periodic cells of size ``2*tile_size``.

    Trial ``t`` draws from its own stream seeded by ``(seed, t)`` and accepted
    trials are kept in trial order, so the result depends only on the inputs.
    """
    config = (config or GenConfig()).validate()
    if count < 1:
        raise ArgumentError("count must be >= 1")
    cells = []
    trial = 0
    while len(cells) < count:
        cell = _trial(seed, trial, config)
        trial += 1
        if cell is not None:
            cells.append(cell)
        if trial >= config.trial_budget and len(cells) / trial < config.min_acceptance:
            raise GenerationStallError(
                f"acceptance rate {len(cells)}/{trial} below {config.min_acceptance} for {config}"
            )
    return cells


def _sq_distances(a, b):
    na = a.sum(axis=1)
    nb = b.sum(axis=1)
    return np.maximum(na[:, None] + nb[None, :] - 2.0 * (a @ b.T), 0.0)


def _kmeans_cv(x, k, rng, max_iter=100):
    n = x.shape[0]
    centers = x[rng.choice(n, size=k, replace=False)].copy()
    labels = None
    xx = (x * x).sum(axis=1)
    for _ in range(max_iter):
        d2 = np.maximum(xx[:, None] + (centers**2).sum(axis=1)[None, :] - 2.0 * x @ centers.T, 0.0)
        new = d2.argmin(axis=1)
        sizes = np.bincount(new, minlength=k)
        for empty in np.flatnonzero(sizes == 0):
            far = int(d2[np.arange(n), new].argmax())
            new[far] = empty
            d2[far, :] = 0.0
            sizes = np.bincount(new, minlength=k)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            centers[j] = x[labels == j].mean(axis=0)
    sizes = np.bincount(labels, minlength=k).astype(float)
    return float(sizes.std() / sizes.mean())


def diversity_stats(dataset, k=500, seed=0, max_pairs=200_000):
    """Mean pairwise Euclidean distance and k-means cluster-size spread."""
    if len(dataset) < 2:
        raise ArgumentError("diversity_stats needs at least 2 cells")
    if not 1 <= k <= len(dataset):
        raise ArgumentError(f"k={k} must lie in [1, {len(dataset)}]")
    x = np.stack([as_cell(c).ravel() for c in dataset]).astype(np.float64)
    n, npix = x.shape
    rng = np.random.default_rng(seed)
    total_pairs = n * (n - 1) // 2
    if total_pairs <= max_pairs:
        acc, chunk = 0.0, 256
        for start in range(0, n, chunk):
            d2 = _sq_distances(x[start:start + chunk], x)
            rows = np.arange(start, min(start + chunk, n))
            upper = np.arange(n)[None, :] > rows[:, None]
            acc += np.sqrt(d2[upper]).sum()
        mean = acc / total_pairs
    else:
        i = rng.integers(0, n, size=max_pairs)
        j = (i + rng.integers(1, n, size=max_pairs)) % n
        mean = float(np.mean(np.sqrt(np.abs(x[i] - x[j]).sum(axis=1))))
    cv = _kmeans_cv(x, k, rng)
    return DiversityReport(float(mean), float(mean / np.sqrt(npix)), cv, k)
