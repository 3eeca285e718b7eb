"""Matrix-free MINRES for symmetric (possibly singular) operators."""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError


@dataclass
class MinresResult:
    x: np.ndarray
    iterations: int
    relative_residual: float
    converged: bool


def minres(matvec, b, tol=1e-8, max_iter=1000):
    """Solve ``A x = b`` for symmetric ``A`` given only ``matvec``.

    Lanczos tridiagonalization with Givens-rotation QR (Paige and Saunders),
    started from ``x0 = 0``. ``relative_residual`` is the recurrence estimate
    ``||b - A x|| / ||b||``. On a consistent singular system the iterates stay
    in the Krylov space of ``b`` and converge to the minimum-norm solution.
    """
    b = np.asarray(b, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise NumericalError("right-hand side contains NaN or inf")
    x = np.zeros_like(b)
    beta1 = float(np.linalg.norm(b))
    if beta1 == 0.0:
        return MinresResult(x, 0, 0.0, True)

    v_prev = np.zeros_like(b)
    v = b / beta1
    w_prev = np.zeros_like(b)
    w = np.zeros_like(b)
    beta = beta1
    eta = beta1
    c_prev, c = 1.0, 1.0
    s_prev, s = 0.0, 0.0
    rel = 1.0

    for it in range(1, max_iter + 1):
        p = matvec(v)
        alpha = float(v @ p)
        p -= alpha * v
        p -= beta * v_prev
        beta_next = float(np.linalg.norm(p))

        # apply the two previous rotations to the new tridiagonal column
        r0 = c * alpha - c_prev * s * beta
        r2 = s * alpha + c_prev * c * beta
        r3 = s_prev * beta
        r1 = float(np.hypot(r0, beta_next))
        if r1 == 0.0:
            # exact breakdown: b lies in an invariant subspace already solved
            return MinresResult(x, it - 1, rel, rel <= tol)
        c_next, s_next = r0 / r1, beta_next / r1

        w_next = (v - r3 * w_prev - r2 * w) / r1
        x += (c_next * eta) * w_next
        eta = -s_next * eta
        rel = abs(eta) / beta1

        if not np.isfinite(rel):
            raise NumericalError(f"MINRES produced a non-finite residual at iteration {it}")
        if rel <= tol or beta_next == 0.0:
            return MinresResult(x, it, rel, rel <= tol)

        v_prev, v = v, p / beta_next
        w_prev, w = w, w_next
        beta = beta_next
        c_prev, c = c, c_next
        s_prev, s = s, s_next

    return MinresResult(x, max_iter, rel, rel <= tol)
