"""
Cluster mean-field theory on the square lattice.

A small cluster is diagonalized exactly in the grand-canonical ensemble while
each bond leaving it is decoupled as

    a_i^dag a_j + h.c.  ->  psi_j (a_i + a_i^dag) - psi_i psi_j

with psi_j the order parameter of the periodic image of site j inside the
cluster. psi is iterated to a fixed point psi_i = <a_i>.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .basis import FullBasis, enumerate_sector, full_basis
from .eigensolver import dense_ground_state, ground_state
from .hamiltonian import (
    ClusterGeometry,
    ModelParams,
    SparseOperator,
    _assemble,
    build_sector,
    cluster_geometry,
    photon_quadrature,
)
from .observables import CORRELATION_KINDS, apply_local, site_occupations

__all__ = [
    "CMFTResult",
    "PhasePoint",
    "ClusterModel",
    "self_consistent",
    "classify_phase",
    "phase_point",
    "phase_scan",
    "mu_scan",
    "phase_boundaries",
    "truncation_shift",
    "LABELS",
]

LABELS = ("Vacuum", "MI(2)", "SF", "PSF", "Unclassified")

PSI_SEED = 0.1


@dataclass
class CMFTResult:
    mu: float
    kappa: float
    psi: np.ndarray
    rho: float
    energy: float
    iterations: int
    converged: bool
    cluster_correlations: dict[str, float]
    branch: str = ""
    psi_error: float = math.nan
    vector: np.ndarray | None = field(default=None, repr=False)

    @property
    def psi_mean(self) -> float:
        return float(np.mean(np.abs(self.psi)))


class ClusterModel:
    """
    Cached pieces of the grand-canonical cluster Hamiltonian, so each sweep
    only rescales the psi-dependent part instead of reassembling.
    """

    def __init__(self, geom: ClusterGeometry, params: ModelParams, mu: float, n_max: int = 6):
        if n_max < 2:
            raise ValueError("cluster truncation needs n_max >= 2")
        self.geom = geom
        self.params = params
        self.mu = mu
        self.n_max = n_max
        self.basis: FullBasis = full_basis(geom.n_sites, n_max)
        self.h0 = _assemble(self.basis, params, geom.internal_bonds, mu=mu).matrix
        self.x = [photon_quadrature(self.basis, i) for i in range(geom.n_sites)]

    def fields(self, psi: np.ndarray) -> tuple[np.ndarray, float]:
        f = np.zeros(self.geom.n_sites)
        const = 0.0
        for i, img in self.geom.boundary_bonds:
            f[i] -= self.params.kappa * psi[img]
            const += self.params.kappa * psi[i] * psi[img]
        return f, const

    def hamiltonian(self, psi: Sequence[float]) -> SparseOperator:
        psi = np.asarray(psi, dtype=float)
        f, const = self.fields(psi)
        h = self.h0
        for fi, xi in zip(f, self.x):
            if fi:
                h = h + fi * xi
        if const:
            h = h + const * sp.identity(self.basis.dim, format="csr")
        return SparseOperator(h.tocsr())

    def measure_psi(self, v: np.ndarray) -> np.ndarray:
        return np.array([0.5 * float(v @ (xi @ v)) for xi in self.x])

    def measure(self, v: np.ndarray) -> tuple[float, dict[str, float]]:
        occ = site_occupations(v, self.basis)
        rho = float(np.mean(occ["charge"]))
        corr = {}
        bonds = self.geom.internal_bonds
        for kind in CORRELATION_KINDS:
            if not bonds:
                corr[kind] = 0.0
                continue
            ops = [apply_local(v, self.basis, i, kind, self.basis)[0] for i in range(self.geom.n_sites)]
            corr[kind] = float(np.mean([ops[i] @ ops[j] for i, j in bonds]))
        return rho, corr


@lru_cache(maxsize=256)
def _sector_ground_state(geom: ClusterGeometry, params: ModelParams, n_max: int, N: int, seed: int, tol: float):
    sec = enumerate_sector(geom.n_sites, N, n_max)
    op = build_sector(sec, params, geom.internal_bonds)
    if sec.dim <= 400:
        gs = dense_ground_state(op)
    else:
        gs = ground_state(op, tol=tol, seed=seed)
    return gs.energy, gs.vector, gs.converged, sec.codes


def _zero_branch(model: ClusterModel, seed: int, solver_tol: float) -> CMFTResult:
    """
    psi = 0 fixed point. The cluster Hamiltonian then conserves charge, so the
    grand-canonical ground state is the best sector ground state (ties go to
    the larger charge).
    """
    geom, n_max = model.geom, model.n_max
    best = None
    for N in range(geom.n_sites * (n_max + 2) + 1):
        e, vec, ok, codes = _sector_ground_state(geom, model.params, n_max, N, seed, solver_tol)
        g = e - model.mu * N
        if best is None or g <= best[0] + 1e-13 * max(1.0, abs(g)):
            best = (g, vec, ok, codes)
    g, vec, ok, codes = best
    v = np.zeros(model.basis.dim)
    v[codes] = vec
    rho, corr = model.measure(v)
    return CMFTResult(
        mu=model.mu,
        kappa=model.params.kappa,
        psi=np.zeros(geom.n_sites),
        rho=rho,
        energy=float(g),
        iterations=1,
        converged=bool(ok),
        cluster_correlations=corr,
        branch="zero",
        psi_error=float(np.max(np.abs(model.measure_psi(v)))),
        vector=v,
    )


def _iterate(
    model: ClusterModel,
    psi0: np.ndarray,
    tol_psi: float,
    max_sweeps: int,
    mixing: float,
    seed: int,
    solver_tol: float,
    branch: str,
) -> CMFTResult:
    psi = np.array(psi0, dtype=float)
    v = None
    err = math.inf
    converged = False
    sweeps = 0
    gs = None
    for sweeps in range(1, max_sweeps + 1):
        op = model.hamiltonian(psi)
        # loose solves while psi is far from its fixed point
        tol = max(solver_tol, min(1e-7, 1e-3 * err))
        gs = ground_state(op, tol=tol, seed=seed, v0=v)
        v = gs.vector
        psi_new = model.measure_psi(v)
        err = float(np.max(np.abs(psi_new - psi)))
        if err < tol_psi:
            if tol > solver_tol:
                continue
            converged = gs.converged
            psi = psi_new
            break
        psi = (1.0 - mixing) * psi + mixing * psi_new
    # final solve at the returned psi so energy, vector and psi agree
    op = model.hamiltonian(psi)
    gs = ground_state(op, tol=solver_tol, seed=seed, v0=v)
    v = gs.vector
    psi_check = model.measure_psi(v)
    err_check = float(np.max(np.abs(psi_check - psi)))
    rho, corr = model.measure(v)
    return CMFTResult(
        mu=model.mu,
        kappa=model.params.kappa,
        psi=psi,
        rho=rho,
        energy=gs.energy,
        iterations=sweeps,
        converged=converged and gs.converged and err_check < tol_psi,
        cluster_correlations=corr,
        branch=branch,
        psi_error=err_check,
        vector=v,
    )


def self_consistent(
    geom: ClusterGeometry | str,
    params: ModelParams,
    mu: float,
    psi0: Sequence[float] | float | None = None,
    tol_psi: float = 1e-8,
    max_sweeps: int = 500,
    mixing: float = 0.5,
    n_max: int = 4,
    seed: int = 0,
    solver_tol: float = 1e-10,
    model: ClusterModel | None = None,
) -> CMFTResult:
    """
    Fixed point of psi at one (kappa, mu).

    Without ``psi0`` two branches run, one seeded at psi = 0.1 on every site
    and one at psi = 0, and the one with the lower grand energy is returned
    (ties go to the psi = 0 branch). With ``psi0`` only that branch runs.
    """
    if tol_psi <= 0:
        raise ValueError("tol_psi must be positive")
    if not 0 < mixing <= 1:
        raise ValueError("mixing must lie in (0, 1]")
    if isinstance(geom, str):
        geom = cluster_geometry(geom)
    if model is None:
        model = ClusterModel(geom, params, mu, n_max)
    n = geom.n_sites
    args = (tol_psi, max_sweeps, mixing, seed, solver_tol)
    if psi0 is not None:
        start = np.broadcast_to(np.asarray(psi0, dtype=float), (n,)).copy()
        if not np.any(start):
            return _zero_branch(model, seed, solver_tol)
        return _iterate(model, start, *args, branch="given")
    zero = _zero_branch(model, seed, solver_tol)
    if params.kappa == 0:
        return zero
    seeded = _iterate(model, np.full(n, PSI_SEED), *args, branch="seeded")
    # prefer a converged branch; among equals, the lower grand energy
    if seeded.converged and (not zero.converged or seeded.energy < zero.energy - 1e-12):
        return seeded
    if not zero.converged and not seeded.converged:
        return seeded if seeded.energy < zero.energy else zero
    return zero


def truncation_shift(geom, params, mu, psi, n_max: int, step: int = 2, seed: int = 0) -> float:
    """|E(n_max + step) - E(n_max)| for the cluster ground energy at fixed psi."""
    if isinstance(geom, str):
        geom = cluster_geometry(geom)
    e = []
    for m in (n_max, n_max + step):
        op = ClusterModel(geom, params, mu, m).hamiltonian(np.broadcast_to(psi, (geom.n_sites,)))
        e.append(ground_state(op, seed=seed).energy)
    return abs(e[1] - e[0])


# ---------------------------------------------------------------- classification


@dataclass
class PhasePoint:
    kappa: float
    mu: float
    label: str | None
    psi_mean: float
    rho: float
    cluster_charge: int
    step_dN: int
    pair_ratio: float
    converged: bool
    energy: float = math.nan
    compressible: bool = False


def pair_ratio(corr: dict[str, float]) -> float:
    single = abs(corr["photon"]) + abs(corr["atom"])
    pair = abs(corr["photon-pair"]) + abs(corr["atom-pair"])
    if single == 0.0:
        return math.inf if pair > 0 else math.nan
    return pair / single


def classify_phase(
    result: CMFTResult,
    below: CMFTResult,
    above: CMFTResult,
    n_sites: int,
    psi_tol: float = 1e-4,
    rho_tol: float = 1e-3,
) -> PhasePoint:
    """
    Label one point from its own fixed point and those at mu -/+ dmu.

    SF when the order parameter survives. Otherwise Vacuum at rho ~ 0, MI(2)
    at rho ~ 2 with no density change across the window, and PSF for an
    even cluster charge strictly between, with any density step in the window
    even and pair correlators dominating single-particle ones.
    """
    ratio = pair_ratio(result.cluster_correlations)
    n_here = int(round(result.rho * n_sites))
    n_lo = int(round(below.rho * n_sites))
    n_hi = int(round(above.rho * n_sites))
    step = n_hi - n_lo
    compressible = abs(above.rho - below.rho) >= rho_tol
    point = PhasePoint(
        kappa=result.kappa,
        mu=result.mu,
        label=None,
        psi_mean=result.psi_mean,
        rho=result.rho,
        cluster_charge=n_here,
        step_dN=step,
        pair_ratio=ratio,
        converged=result.converged,
        energy=result.energy,
        compressible=compressible,
    )
    if not (result.converged and below.converged and above.converged):
        return point
    if result.psi_mean > psi_tol:
        point.label = "SF"
    elif result.rho < rho_tol:
        point.label = "Vacuum"
    elif abs(result.rho - 2.0) < rho_tol and not compressible:
        point.label = "MI(2)"
    elif (
        rho_tol <= result.rho <= 2.0 - rho_tol
        and n_here % 2 == 0
        and step % 2 == 0
        and ratio > 1.0
    ):
        point.label = "PSF"
    else:
        point.label = "Unclassified"
    return point


def phase_point(
    geom: ClusterGeometry | str,
    params: ModelParams,
    mu: float,
    dmu: float = 1e-3,
    n_max: int = 4,
    seed: int = 0,
    **kw,
) -> tuple[PhasePoint, CMFTResult]:
    if isinstance(geom, str):
        geom = cluster_geometry(geom)
    res = self_consistent(geom, params, mu, n_max=n_max, seed=seed, **kw)
    side = []
    for m in (mu - dmu * params.beta01, mu + dmu * params.beta01):
        side.append(self_consistent(geom, params, m, psi0=res.psi, n_max=n_max, seed=seed, **kw))
    return classify_phase(res, side[0], side[1], geom.n_sites), res


def _scan_task(task):
    geom, params, mu, dmu, n_max, seed, kw = task
    point, _ = phase_point(geom, params, mu, dmu=dmu, n_max=n_max, seed=seed, **kw)
    return point


def phase_scan(
    geom: ClusterGeometry | str,
    params: ModelParams,
    kappas: Sequence[float],
    mus: Sequence[float],
    dmu: float = 1e-3,
    n_max: int = 4,
    seed: int = 0,
    workers: int = 1,
    **kw,
) -> list[PhasePoint]:
    """Classify every (kappa, mu) grid point; output ordered by (kappa, mu)."""
    if isinstance(geom, str):
        geom = cluster_geometry(geom)
    tasks = [
        (geom, params.with_kappa(float(k)), float(m), dmu, n_max, seed, kw)
        for k in sorted(kappas)
        for m in sorted(mus)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_scan_task, tasks))
    return [_scan_task(t) for t in tasks]


def _mu_task(task):
    geom, params, mu, n_max, seed, kw = task
    res = self_consistent(geom, params, mu, n_max=n_max, seed=seed, **kw)
    res.vector = None
    return res


def mu_scan(
    geom: ClusterGeometry | str,
    params: ModelParams,
    mus: Sequence[float],
    n_max: int = 4,
    seed: int = 0,
    workers: int = 1,
    **kw,
) -> list[CMFTResult]:
    """Independent fixed points along mu at fixed kappa, in the order given."""
    if isinstance(geom, str):
        geom = cluster_geometry(geom)
    tasks = [(geom, params, float(m), n_max, seed, kw) for m in mus]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_mu_task, tasks))
    return [_mu_task(t) for t in tasks]


def phase_boundaries(points: Sequence[PhasePoint]) -> list[tuple[float, float, float, str | None, str | None]]:
    """(kappa, mu_below, mu_above, label_below, label_above) at every label change along mu."""
    out = []
    by_kappa: dict[float, list[PhasePoint]] = {}
    for p in points:
        by_kappa.setdefault(p.kappa, []).append(p)
    for k in sorted(by_kappa):
        col = sorted(by_kappa[k], key=lambda p: p.mu)
        for a, b in zip(col, col[1:]):
            if a.label != b.label:
                out.append((k, a.mu, b.mu, a.label, b.label))
    return out
