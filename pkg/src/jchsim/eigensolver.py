"""
Lowest eigenpair of a real symmetric operator.

``ground_state`` is a thick-restart Lanczos iteration with full
reorthogonalization: the Krylov basis is kept explicitly and every new vector
is Gram-Schmidt orthogonalized (twice) against all previous ones, so no ghost
copies of converged eigenvalues appear. When the basis reaches
``krylov_dim`` vectors it is compressed to the lowest few Ritz vectors plus
the current residual direction and the iteration continues. Only
``op @ v`` is used to touch the operator.

``dense_spectrum`` is the small-matrix oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionLimitError

__all__ = ["GroundState", "ground_state", "dense_spectrum", "dense_ground_state", "DENSE_MAX_DIM"]

DENSE_MAX_DIM = 4000


@dataclass
class GroundState:
    energy: float
    vector: np.ndarray
    residual: float
    iterations: int
    converged: bool
    tol: float = 0.0

    @property
    def dim(self) -> int:
        return self.vector.size


def _matvec(op):
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda v: op @ v


def _dim(op) -> int:
    if hasattr(op, "dim"):
        return int(op.dim)
    return int(op.shape[0])


def _norm_inf(op) -> float:
    if hasattr(op, "norm_inf"):
        return op.norm_inf()
    if sp.issparse(op):
        return float(abs(op).sum(axis=1).max()) if op.nnz else 0.0
    return float(np.abs(np.asarray(op)).sum(axis=1).max())


def _dense(op) -> np.ndarray:
    if hasattr(op, "toarray"):
        return np.asarray(op.toarray(), dtype=float)
    if sp.issparse(op):
        return op.toarray()
    return np.asarray(op, dtype=float)


def ground_state(
    op,
    tol: float = 1e-10,
    max_iter: int = 5000,
    seed: int = 0,
    krylov_dim: int = 60,
    keep: int = 20,
    v0: np.ndarray | None = None,
) -> GroundState:
    """
    Lowest eigenpair of ``op``.

    ``tol`` is relative to the max-row-sum norm of ``op``; the run converges
    when ``||H v - E v|| <= tol * ||H||_inf``. ``max_iter`` bounds the number
    of operator applications. ``v0`` overrides the seeded random start vector
    (a warm start); the result is still deterministic.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = _dim(op)
    if n < 1:
        raise ValueError("operator has dimension 0")
    apply = _matvec(op)
    scale = _norm_inf(op)
    atol = tol * max(scale, 1e-300)

    if v0 is None:
        v = np.random.default_rng(seed).standard_normal(n)
    else:
        v = np.array(v0, dtype=float, copy=True)
        if v.shape != (n,) or not np.any(v):
            raise ValueError("v0 must be a nonzero vector of the operator's dimension")
    v /= np.linalg.norm(v)

    if n == 1:
        hv = apply(v)
        e = float(v @ hv)
        return GroundState(e, v, float(np.linalg.norm(hv - e * v)), 1, True, atol)

    m_max = max(min(krylov_dim, n), 2)
    keep = max(1, min(keep, m_max - 2))
    V = np.zeros((m_max + 1, n))
    T = np.zeros((m_max + 1, m_max + 1))
    V[0] = v
    j = 0  # index of the vector about to be expanded
    n_apply = 0
    theta, x = np.inf, v
    converged = False

    while n_apply < max_iter:
        w = apply(V[j])
        n_apply += 1
        h = V[: j + 1] @ w
        w -= h @ V[: j + 1]
        h2 = V[: j + 1] @ w
        w -= h2 @ V[: j + 1]
        h += h2
        T[: j + 1, j] = h
        T[j, : j + 1] = h
        beta = float(np.linalg.norm(w))
        k = j + 1
        evals, evecs = np.linalg.eigh(T[:k, :k])
        theta = float(evals[0])
        res_est = beta * abs(evecs[k - 1, 0])

        breakdown = beta <= 1e-14 * max(scale, 1.0)
        if res_est <= 0.1 * atol or breakdown or k == n:
            x = evecs[:, 0] @ V[:k]
            x /= np.linalg.norm(x)
            hx = apply(x)
            n_apply += 1
            theta = float(x @ hx)
            true_res = float(np.linalg.norm(hx - theta * x))
            if true_res <= atol:
                converged = True
                break
            if breakdown or k == n:
                # invariant subspace without the target accuracy: restart from x
                V[:] = 0.0
                T[:] = 0.0
                V[0] = x
                j = 0
                continue

        if k < m_max:
            V[k] = w / beta
            T[k, j] = T[j, k] = beta
            j = k
            continue

        # thick restart: keep the lowest Ritz vectors and the residual direction
        s = evecs[:, :keep]
        Vk = s.T @ V[:k]
        coupling = beta * evecs[k - 1, :keep]
        V[:] = 0.0
        T[:] = 0.0
        V[:keep] = Vk
        V[keep] = w / beta
        T[np.arange(keep), np.arange(keep)] = evals[:keep]
        T[keep, :keep] = coupling
        T[:keep, keep] = coupling
        j = keep

    if not converged:
        k = j + 1
        evals, evecs = np.linalg.eigh(T[:k, :k])
        x = evecs[:, 0] @ V[:k]
        x /= np.linalg.norm(x)
        hx = apply(x)
        theta = float(x @ hx)
        true_res = float(np.linalg.norm(hx - theta * x))

    return GroundState(theta, x, true_res, n_apply, converged, atol)


def dense_spectrum(op, max_dim: int = DENSE_MAX_DIM) -> np.ndarray:
    n = _dim(op)
    if n > max_dim:
        raise DimensionLimitError(f"dense diagonalization refused for dim={n} > {max_dim}")
    return np.linalg.eigvalsh(_dense(op))


def dense_ground_state(op, max_dim: int = DENSE_MAX_DIM) -> GroundState:
    n = _dim(op)
    if n > max_dim:
        raise DimensionLimitError(f"dense diagonalization refused for dim={n} > {max_dim}")
    h = _dense(op)
    evals, evecs = np.linalg.eigh(h)
    v = evecs[:, 0]
    res = float(np.linalg.norm(h @ v - evals[0] * v))
    return GroundState(float(evals[0]), v, res, 0, True, 0.0)
