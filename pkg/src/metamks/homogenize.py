"""Effective C11 of periodic solid/void cells by Galerkin FFT homogenization.

Kinematics are plane strain. Loading direction 1 is array axis 0 (rows) and
direction 2 is array axis 1 (columns).

Strain and stress fields are stored in Mandel notation ``(e11, e22, sqrt(2) e12)``
so the Euclidean inner product of the flattened field equals the tensor
double contraction and the Galerkin operator is symmetric.

Discretization: the rotated (staggered, 45 degree) finite-difference scheme,
whose modified wave vector is

    k1 ~ sin(xi1 / 2) cos(xi2 / 2),    k2 ~ cos(xi1 / 2) sin(xi2 / 2)

up to a common complex phase that cancels in the projection. The projection
onto compatible zero-mean strain fields is applied frequency by frequency with
``n = k / |k|``; frequencies where ``k`` vanishes (the mean and, on even grids,
the (pi, pi) checkerboard) are mapped to zero.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from joblib import Parallel, delayed

from .errors import ArgumentError, NumericalError
from .geometry import as_cell
from .krylov import minres

SQRT2 = np.sqrt(2.0)
DEFAULT_BETA = 1e-2
DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class Material:
    youngs_modulus: float = 1.0
    poissons_ratio: float = 0.3

    def __post_init__(self):
        if self.youngs_modulus < 0:
            raise ArgumentError("Young's modulus must be non-negative")
        if not -1.0 < self.poissons_ratio < 0.5:
            raise ArgumentError("Poisson's ratio must lie in (-1, 0.5)")

    @property
    def lame_lambda(self):
        e, nu = self.youngs_modulus, self.poissons_ratio
        return e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def lame_mu(self):
        return self.youngs_modulus / (2.0 * (1.0 + self.poissons_ratio))


@dataclass(frozen=True)
class LoadCase:
    """Macroscopic strain with a single component set to ``beta``.

    ``component`` is one of ``"11"``, ``"22"``, ``"12"`` (tensor shear strain).
    """

    component: str = "11"
    beta: float = DEFAULT_BETA

    def mandel(self):
        idx = {"11": 0, "22": 1, "12": 2}
        if self.component not in idx:
            raise ArgumentError(f"unknown strain component {self.component!r}")
        out = np.zeros(3)
        out[idx[self.component]] = self.beta * (SQRT2 if self.component == "12" else 1.0)
        return out

    @property
    def macro_strain(self):
        m = self.mandel()
        return np.array([[m[0], m[2] / SQRT2], [m[2] / SQRT2, m[1]]])


@dataclass
class SolveReport:
    average_stress: np.ndarray  # 2x2 tensor
    iterations: int
    relative_residual: float
    converged: bool


@dataclass(frozen=True)
class StiffnessResult:
    c11: float
    normalized_c11: float
    iterations: int = 0
    relative_residual: float = 0.0
    converged: bool = True


@dataclass
class LabelResult:
    labels: np.ndarray  # normalized C11 per input cell (nan on failure)
    converged: np.ndarray
    iterations: np.ndarray
    residuals: np.ndarray
    kept: list
    dropped: list
    failures: dict = field(default_factory=dict)


def plane_strain_stiffness(material):
    """Isotropic plane-strain stiffness as a 3x3 Mandel matrix.

    Entries (0,0), (1,1) are C1111, C2222; (0,1) is C1122; (2,2) is 2*C1212.
    """
    lam, mu = material.lame_lambda, material.lame_mu
    return np.array([
        [lam + 2 * mu, lam, 0.0],
        [lam, lam + 2 * mu, 0.0],
        [0.0, 0.0, 2 * mu],
    ])


@lru_cache(maxsize=8)
def _rotated_normals(shape):
    n1, n2 = shape
    half1 = np.pi * np.fft.fftfreq(n1)[:, None]
    half2 = np.pi * np.fft.rfftfreq(n2)[None, :]
    k1 = np.sin(half1) * np.cos(half2)
    k2 = np.cos(half1) * np.sin(half2)
    norm = np.hypot(k1, k2)
    live = norm > 1e-12
    safe = np.where(live, norm, 1.0)
    a = np.where(live, k1 / safe, 0.0)
    b = np.where(live, k2 / safe, 0.0)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


def project(field):
    """Orthogonal projection of a Mandel field ``(3, n1, n2)`` onto compatible zero-mean strains.

    Per frequency, the compatible part of a symmetric ``tau`` is
    ``sym(n (x) v)`` with ``v = 2 tau n - (n . tau n) n``.
    """
    shape = field.shape[1:]
    a, b = _rotated_normals(shape)
    f = np.fft.rfft2(field, axes=(1, 2))
    t11, t22, t12 = f[0], f[1], f[2] / SQRT2
    tn1 = t11 * a + t12 * b
    tn2 = t12 * a + t22 * b
    ntn = a * tn1 + b * tn2
    v1 = 2.0 * tn1 - ntn * a
    v2 = 2.0 * tn2 - ntn * b
    f[0] = a * v1
    f[1] = b * v2
    f[2] = (0.5 * SQRT2) * (a * v2 + b * v1)
    return np.fft.irfft2(f, s=shape, axes=(1, 2))


def _stress(stiffness, phase, strain):
    return np.einsum("ij,jxy->ixy", stiffness, strain) * phase


def solve_cell(cell, material=None, load=None, tol=DEFAULT_TOL, max_iter=None):
    """Solve the periodic cell problem for one macroscopic strain.

    Unknown is the compatible strain fluctuation ``e``; the Galerkin system is
    ``G C G e = -G C E`` with ``G`` the compatibility projection and ``C`` the
    local stiffness (zero on void pixels). Returns the volume-averaged stress.
    """
    cell = as_cell(cell)
    material = material or Material()
    load = load or LoadCase()
    if not tol > 0:
        raise ArgumentError("tol must be positive")
    shape = cell.shape
    if max_iter is None:
        max_iter = default_max_iter(cell.size)
    stiffness = plane_strain_stiffness(material)
    phase = cell.astype(np.float64)

    macro = np.broadcast_to(load.mandel()[:, None, None], (3,) + shape)

    def matvec(x):
        e = project(x.reshape((3,) + shape))
        return project(_stress(stiffness, phase, e)).ravel()

    rhs = -project(_stress(stiffness, phase, macro)).ravel()
    if not np.all(np.isfinite(rhs)):
        raise NumericalError("non-finite values in the load field")
    result = minres(matvec, rhs, tol=tol, max_iter=max_iter)
    strain = macro + project(result.x.reshape((3,) + shape))
    sigma = _stress(stiffness, phase, strain).mean(axis=(1, 2))
    if not np.all(np.isfinite(sigma)):
        raise NumericalError("non-finite average stress")
    s12 = sigma[2] / SQRT2
    avg = np.array([[sigma[0], s12], [s12, sigma[1]]])
    return SolveReport(avg, result.iterations, result.relative_residual, result.converged)


def default_max_iter(npix):
    return int(min(20_000, 100 * np.sqrt(npix)))


def effective_c11(cell, material=None, tol=DEFAULT_TOL, beta=DEFAULT_BETA, max_iter=None):
    """C11 = average sigma11 / beta under the single load eps11 = beta."""
    material = material or Material()
    report = solve_cell(cell, material, LoadCase("11", beta), tol=tol, max_iter=max_iter)
    c11 = float(report.average_stress[0, 0] / beta)
    e = material.youngs_modulus
    normalized = c11 / e if e > 0 else 0.0
    return StiffnessResult(c11, normalized, report.iterations, report.relative_residual, report.converged)


def _label_one(cell, material, tol, beta):
    try:
        return effective_c11(cell, material, tol=tol, beta=beta), None
    except Exception as exc:  # recorded per index, never fatal for the batch
        return None, f"{type(exc).__name__}: {exc}"


def label_dataset(cells, material=None, tol=DEFAULT_TOL, filter_threshold=0.01, beta=DEFAULT_BETA, jobs=1):
    """Normalized C11 for every cell, then drop those below ``filter_threshold``.

    Failed solves get ``nan`` labels, are listed in ``failures`` and dropped.
    """
    if filter_threshold < 0:
        raise ArgumentError("filter_threshold must be >= 0")
    material = material or Material()
    if jobs == 1:
        out = [_label_one(c, material, tol, beta) for c in cells]
    else:
        out = Parallel(n_jobs=jobs)(delayed(_label_one)(c, material, tol, beta) for c in cells)
    n = len(out)
    labels = np.full(n, np.nan)
    converged = np.zeros(n, dtype=bool)
    iterations = np.zeros(n, dtype=np.int64)
    residuals = np.full(n, np.nan)
    failures = {}
    for i, (res, err) in enumerate(out):
        if res is None:
            failures[i] = err
            continue
        labels[i] = res.normalized_c11
        converged[i] = res.converged
        iterations[i] = res.iterations
        residuals[i] = res.relative_residual
    keep = ~np.isnan(labels)
    if filter_threshold > 0:
        keep &= labels >= filter_threshold
    kept = np.flatnonzero(keep).tolist()
    dropped = np.flatnonzero(~keep).tolist()
    return LabelResult(labels, converged, iterations, residuals, kept, dropped, failures)
