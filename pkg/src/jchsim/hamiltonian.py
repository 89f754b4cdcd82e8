"""
Sparse Hamiltonians for coupled cavities with three-level ladder atoms.

Per site (rotating frame, cavity resonant with the lower transition):

    -delta * |e2><e2| + beta01 * (|e1><g| a + h.c.) + beta12 * (|e2><e1| a + h.c.)

plus photon tunnelling ``-kappa * (a_i^dag a_j + h.c.)`` on every bond. All
couplings are real, so every operator here is a real symmetric matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .basis import FullBasis, SectorBasis, enumerate_sector, full_basis, local_dim

__all__ = [
    "ModelParams",
    "SparseOperator",
    "ClusterGeometry",
    "cluster_geometry",
    "chain_bonds",
    "build_sector",
    "build_chain",
    "build_single_cavity",
    "build_cluster_gc",
    "photon_quadrature",
    "charge_operator",
    "charge_commutator_norm",
    "embed_in_full",
]


@dataclass(frozen=True)
class ModelParams:
    beta01: float = 1.0
    beta12: float = math.sqrt(2.0)
    delta: float = 0.4
    kappa: float = 0.0

    def __post_init__(self):
        if not self.beta01 > 0:
            raise ValueError(f"beta01 must be positive, got {self.beta01}")
        if self.beta12 < 0:
            raise ValueError(f"beta12 must be non-negative, got {self.beta12}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")

    def with_kappa(self, kappa: float) -> "ModelParams":
        return ModelParams(self.beta01, self.beta12, self.delta, kappa)


@dataclass(frozen=True)
class SparseOperator:
    """Real symmetric matrix stored in full (both triangles) CSR form."""

    matrix: sp.csr_matrix
    storage: str = "full"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    __matmul__ = matvec

    def norm_inf(self) -> float:
        if self.nnz == 0:
            return 0.0
        return float(abs(self.matrix).sum(axis=1).max())

    def entries(self) -> list[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_symmetric(self) -> bool:
        diff = self.matrix - self.matrix.T
        return diff.nnz == 0 or not np.any(diff.data)


@dataclass(frozen=True)
class ClusterGeometry:
    """
    Rectangular cluster tiling the square lattice (z = 4).

    ``boundary_bonds`` holds one ``(site, image)`` pair per cut bond, where
    ``image`` is the cluster site whose periodic copy sits across the cut.
    """

    shape: tuple[int, int]
    internal_bonds: tuple[tuple[int, int], ...]
    boundary_bonds: tuple[tuple[int, int], ...]
    coordination: int = 4

    @property
    def n_sites(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def name(self) -> str:
        return f"{self.shape[0]}x{self.shape[1]}"

    def cut_counts(self) -> list[int]:
        counts = [0] * self.n_sites
        for i, _ in self.boundary_bonds:
            counts[i] += 1
        return counts


def cluster_geometry(shape: str | tuple[int, int] = "2x2") -> ClusterGeometry:
    if isinstance(shape, str):
        try:
            lx, ly = (int(x) for x in shape.lower().split("x"))
        except ValueError:
            raise ValueError(f"cluster shape must look like '2x2', got {shape!r}") from None
    else:
        lx, ly = shape
    if (lx, ly) not in {(1, 1), (2, 1), (1, 2), (2, 2)}:
        raise ValueError(f"unsupported cluster shape {lx}x{ly}")

    def site(x, y):
        return x + lx * y

    internal, boundary = [], []
    for y in range(ly):
        for x in range(lx):
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nx_, ny_ = x + dx, y + dy
                if 0 <= nx_ < lx and 0 <= ny_ < ly:
                    if (dx, dy) in ((1, 0), (0, 1)):
                        internal.append((site(x, y), site(nx_, ny_)))
                else:
                    boundary.append((site(x, y), site(nx_ % lx, ny_ % ly)))
    return ClusterGeometry((lx, ly), tuple(internal), tuple(boundary))


def chain_bonds(L: int, boundary: str = "open") -> list[tuple[int, int]]:
    if boundary not in ("open", "periodic"):
        raise ValueError(f"boundary must be 'open' or 'periodic', got {boundary!r}")
    bonds = [(i, i + 1) for i in range(L - 1)]
    if boundary == "periodic" and L > 2:
        bonds.append((L - 1, 0))
    return bonds


def _assemble(
    basis: SectorBasis | FullBasis,
    params: ModelParams,
    bonds: Sequence[tuple[int, int]],
    mu: float = 0.0,
    field: np.ndarray | None = None,
    constant: float = 0.0,
) -> SparseOperator:
    """
    ``field[i]`` multiplies ``(a_i + a_i^dag)``; it requires a FullBasis since
    it changes the charge.
    """
    L, n_max = basis.L, basis.n_max
    codes = basis.codes
    pw = basis.powers
    dg = basis.digits
    n_ph = (dg // 3).astype(np.int64)
    lev = (dg % 3).astype(np.int64)
    dim = basis.dim

    diag = -params.delta * (lev == 2).sum(axis=1) + constant
    if mu:
        diag = diag - mu * (n_ph + lev).sum(axis=1)

    rows, cols, vals = [], [], []

    def add(mask, shift, amp):
        src = np.nonzero(mask)[0]
        if src.size == 0:
            return
        tgt = basis.rank(codes[src] + shift)
        ok = tgt >= 0
        rows.append(src[ok])
        cols.append(tgt[ok])
        vals.append(np.broadcast_to(np.asarray(amp, dtype=float), src.shape)[ok])

    for i in range(L):
        n_i = n_ph[:, i]
        sq = np.sqrt(n_i.astype(float))
        # (n, g) -> (n-1, e1) and (n, e1) -> (n-1, e2): both lower s by 2
        m = (lev[:, i] == 0) & (n_i >= 1)
        add(m, -2 * pw[i], params.beta01 * sq[m])
        if params.beta12:
            m = (lev[:, i] == 1) & (n_i >= 1)
            add(m, -2 * pw[i], params.beta12 * sq[m])
        if field is not None and field[i]:
            m = n_i >= 1
            add(m, -3 * pw[i], field[i] * sq[m])

    if params.kappa:
        for i, j in bonds:
            m = (n_ph[:, i] >= 1) & (n_ph[:, j] < n_max)
            amp = -params.kappa * np.sqrt(n_ph[m, i] * (n_ph[m, j] + 1.0))
            add(m, -3 * pw[i] + 3 * pw[j], amp)

    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        v = np.concatenate(vals)
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    off = sp.coo_matrix((v, (r, c)), shape=(dim, dim)).tocsr()
    h = (off + off.T + sp.diags(diag, format="csr")).tocsr()
    h.sum_duplicates()
    h.eliminate_zeros()
    h.sort_indices()
    return SparseOperator(h)


def build_sector(
    basis: SectorBasis | FullBasis,
    params: ModelParams,
    bonds: Sequence[tuple[int, int]],
) -> SparseOperator:
    """Canonical Hamiltonian on an arbitrary bond list."""
    return _assemble(basis, params, bonds)


def build_chain(
    L: int,
    N: int,
    params: ModelParams,
    n_max: int | None = None,
    boundary: str = "open",
) -> tuple[SparseOperator, SectorBasis]:
    basis = enumerate_sector(L, N, n_max)
    return _assemble(basis, params, chain_bonds(L, boundary)), basis


def build_single_cavity(N: int, params: ModelParams, n_max: int | None = None):
    return build_chain(1, N, params, n_max)


def build_cluster_gc(
    geom: ClusterGeometry,
    params: ModelParams,
    mu: float,
    psi: Sequence[float],
    n_max: int = 6,
    basis: FullBasis | None = None,
) -> tuple[SparseOperator, FullBasis]:
    """
    Grand-canonical cluster Hamiltonian with mean-field cut bonds:

        H_C - mu * N - kappa * sum_cut [ psi_img * (a_i + a_i^dag) - psi_i * psi_img ]
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (geom.n_sites,):
        raise ValueError(f"psi needs {geom.n_sites} entries, got shape {psi.shape}")
    if n_max < 2:
        raise ValueError("grand-canonical cluster needs n_max >= 2")
    if basis is None:
        basis = full_basis(geom.n_sites, n_max)
    field_ = np.zeros(geom.n_sites)
    constant = 0.0
    for i, img in geom.boundary_bonds:
        field_[i] -= params.kappa * psi[img]
        constant += params.kappa * psi[i] * psi[img]
    op = _assemble(basis, params, geom.internal_bonds, mu=mu, field=field_, constant=constant)
    return op, basis


def photon_quadrature(basis: SectorBasis | FullBasis, site: int) -> sp.csr_matrix:
    """``a_site + a_site^dag`` on a FullBasis (charge-changing)."""
    n = (basis.digits[:, site] // 3).astype(np.int64)
    src = np.nonzero(n >= 1)[0]
    tgt = basis.rank(basis.codes[src] - 3 * basis.powers[site])
    ok = tgt >= 0
    low = sp.coo_matrix(
        (np.sqrt(n[src[ok]].astype(float)), (src[ok], tgt[ok])), shape=(basis.dim, basis.dim)
    ).tocsr()
    return (low + low.T).tocsr()


def charge_operator(basis, weights: Sequence[int] = (0, 1, 2)) -> np.ndarray:
    """Diagonal of the total charge; ``weights=(0, 1, 1)`` gives the unweighted count."""
    dg = basis.digits
    w = np.asarray(weights, dtype=float)
    return (dg // 3 + w[dg % 3]).sum(axis=1)


def charge_commutator_norm(
    op: SparseOperator,
    basis,
    weights: Sequence[int] = (0, 1, 2),
    n_vectors: int = 4,
    seed: int = 0,
) -> float:
    """Largest max-norm of ``[H, N] v`` over a few random unit vectors."""
    q = charge_operator(basis, weights)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_vectors):
        v = rng.standard_normal(op.dim)
        v /= np.linalg.norm(v)
        c = op.matvec(q * v) - q * op.matvec(v)
        worst = max(worst, float(np.max(np.abs(c))))
    return worst


def embed_in_full(op: SparseOperator, sector: SectorBasis, full: FullBasis | None = None):
    """Place a sector operator into the full (all-charge) basis."""
    if full is None:
        full = full_basis(sector.L, sector.n_max)
    idx = sector.codes
    coo = op.matrix.tocoo()
    m = sp.coo_matrix((coo.data, (idx[coo.row], idx[coo.col])), shape=(full.dim, full.dim))
    return SparseOperator(m.tocsr()), full
