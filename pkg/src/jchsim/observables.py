"""
Measured quantities: ground-energy tables and chemical potentials, the
density staircase rho(mu), two-point correlators, fidelity susceptibility and
single-cavity polariton energies.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .basis import FullBasis, SectorBasis, enumerate_sector
from .eigensolver import GroundState, dense_spectrum, ground_state
from .errors import ConvergenceError, EmptySectorError, OrthogonalStatesError
from .hamiltonian import ModelParams, build_chain

__all__ = [
    "CORRELATION_KINDS",
    "EnergyTable",
    "Step",
    "Staircase",
    "Extrapolation",
    "CorrelationSeries",
    "CavitySpectrum",
    "energy_table",
    "chemical_potentials",
    "extrapolate_gap",
    "staircase",
    "density_on_grid",
    "apply_local",
    "correlation",
    "correlation_series",
    "site_occupations",
    "fidelity_susceptibility",
    "FidelityPoint",
    "fidelity_scan",
    "peak_location",
    "local_maxima",
    "single_cavity_spectrum",
]

# kind -> (charge removed, local transition on s = 3*n_p + level)
CORRELATION_KINDS = ("photon", "photon-pair", "atom", "atom-pair", "atom-photon")
_CHARGE = {"photon": 1, "photon-pair": 2, "atom": 1, "atom-pair": 2, "atom-photon": 2}


def _local_action(kind: str, s: np.ndarray):
    """Return (mask, shift of s, amplitude) for the lowering operator ``kind``."""
    n = s // 3
    lev = s % 3
    if kind == "photon":
        m = n >= 1
        return m, -3, np.sqrt(n[m].astype(float))
    if kind == "photon-pair":
        m = n >= 2
        return m, -6, np.sqrt((n[m] * (n[m] - 1)).astype(float))
    if kind == "atom":
        m = lev == 1
        return m, -1, np.ones(int(m.sum()))
    if kind == "atom-pair":
        m = lev == 2
        return m, -2, np.ones(int(m.sum()))
    if kind == "atom-photon":
        m = (lev == 1) & (n >= 1)
        return m, -4, np.sqrt(n[m].astype(float))
    raise ValueError(f"unknown correlation kind {kind!r}; expected one of {CORRELATION_KINDS}")


# ---------------------------------------------------------------- energies


@dataclass
class EnergyTable:
    L: int
    energies: dict[int, float]
    params: ModelParams | None = None
    residuals: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        ns = sorted(self.energies)
        if ns and ns != list(range(ns[0], ns[-1] + 1)):
            raise ValueError(f"energy table must cover a contiguous N range, got {ns}")

    @property
    def n_range(self) -> range:
        ns = sorted(self.energies)
        return range(ns[0], ns[-1] + 1)

    def __getitem__(self, N: int) -> float:
        return self.energies[N]


def _solve_sector(task):
    L, N, params, n_max, boundary, tol, max_iter, seed = task
    op, basis = build_chain(L, N, params, n_max, boundary)
    gs = ground_state(op, tol=tol, max_iter=max_iter, seed=seed)
    return N, gs.energy, gs.residual, gs.converged


def energy_table(
    L: int,
    Ns: Iterable[int],
    params: ModelParams,
    n_max: int | None = None,
    boundary: str = "open",
    tol: float = 1e-10,
    max_iter: int = 5000,
    seed: int = 0,
    workers: int = 1,
) -> EnergyTable:
    """Ground energies E_N of the open chain, one independent solve per N."""
    tasks = [(L, N, params, n_max, boundary, tol, max_iter, seed) for N in Ns]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_solve_sector, tasks))
    else:
        results = [_solve_sector(t) for t in tasks]
    energies, residuals = {}, {}
    for N, e, res, ok in results:
        if not ok:
            raise ConvergenceError(f"sector N={N} did not converge (residual {res:.3e})")
        energies[N] = e
        residuals[N] = res
    return EnergyTable(L, energies, params, residuals)


def chemical_potentials(table: EnergyTable, N: int) -> tuple[float, float]:
    """(mu_minus, mu_plus) = (E_N - E_{N-1}, E_{N+1} - E_N)."""
    missing = [k for k in (N - 1, N, N + 1) if k not in table.energies]
    if missing:
        raise KeyError(f"energy table lacks N={missing}")
    e = table.energies
    return e[N] - e[N - 1], e[N + 1] - e[N]


@dataclass
class Extrapolation:
    intercept: float
    slope: float
    intercept_stderr: float
    residual: float


def extrapolate_gap(values: Sequence[tuple[float, float]]) -> Extrapolation:
    """Least-squares line mu(L) = mu_inf + slope / L."""
    if len(values) < 2:
        raise ValueError("need at least two system sizes to extrapolate")
    x = np.array([1.0 / v[0] for v in values])
    y = np.array([v[1] for v in values], dtype=float)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(values) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        cov = s2 * np.linalg.inv(A.T @ A)
        stderr = math.sqrt(max(cov[0, 0], 0.0))
    else:
        stderr = 0.0
    return Extrapolation(float(coef[0]), float(coef[1]), stderr, float(np.linalg.norm(resid)))


# ---------------------------------------------------------------- staircase


@dataclass(frozen=True)
class Step:
    mu_lo: float
    mu_hi: float
    N: int
    rho: float
    dN: int  # jump in N when entering this interval from below (0 for the first)


@dataclass
class Staircase:
    L: int
    steps: list[Step]

    @property
    def transitions(self) -> list[tuple[float, int, int]]:
        """(mu, N below, N above) for every jump inside the scanned range."""
        return [(b.mu_lo, a.N, b.N) for a, b in zip(self.steps, self.steps[1:])]

    def jumps(self) -> list[int]:
        return [s.dN for s in self.steps[1:]]

    def rho_at(self, mu: float) -> float:
        for s in self.steps:
            if s.mu_lo <= mu < s.mu_hi:
                return s.rho
        return self.steps[-1].rho if mu >= self.steps[-1].mu_hi else self.steps[0].rho


def _lower_hull(ns: list[int], es: list[float], rtol: float) -> list[int]:
    scale = max(1.0, max(abs(e) for e in es))
    hull: list[int] = []
    for k in range(len(ns)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it is on or above the chord a -> k
            cross = (ns[b] - ns[a]) * (es[k] - es[a]) - (es[b] - es[a]) * (ns[k] - ns[a])
            if cross <= rtol * scale * (ns[k] - ns[a]):
                hull.pop()
            else:
                break
        hull.append(k)
    return hull


def staircase(table: EnergyTable, mu_grid: Sequence[float], rtol: float = 1e-12) -> Staircase:
    """
    Exact piecewise-constant rho(mu) = argmin_N (E_N - mu N) / L over the
    range of ``mu_grid``.

    Jumps sit at slopes of the lower convex hull of (N, E_N). At a jump the
    larger N is selected. Sectors that are collinear within ``rtol`` (relative)
    are treated as degenerate, so the jump goes straight past them.
    """
    ns = list(table.n_range)
    es = [table.energies[n] for n in ns]
    hull = _lower_hull(ns, es, rtol)
    hn = [ns[k] for k in hull]
    he = [es[k] for k in hull]
    slopes = [(he[k + 1] - he[k]) / (hn[k + 1] - hn[k]) for k in range(len(hn) - 1)]

    lo, hi = float(min(mu_grid)), float(max(mu_grid))
    steps: list[Step] = []
    edges = [-math.inf] + slopes + [math.inf]
    prev_N = None
    for k, N in enumerate(hn):
        a, b = max(edges[k], lo), min(edges[k + 1], hi)
        if b < a or (b == a and not (edges[k] <= a < edges[k + 1])):
            continue
        dN = 0 if prev_N is None else N - prev_N
        steps.append(Step(a, b, N, N / table.L, dN))
        prev_N = N
    return Staircase(table.L, steps)


def density_on_grid(table: EnergyTable, mu_grid: Sequence[float]) -> np.ndarray:
    """Brute-force argmin over N at each grid point; ties go to the larger N."""
    ns = np.array(list(table.n_range))
    es = np.array([table.energies[n] for n in ns])
    out = np.empty(len(mu_grid))
    for k, mu in enumerate(mu_grid):
        g = es - mu * ns
        best = np.flatnonzero(g == g.min())
        out[k] = ns[best[-1]] / table.L
    return out


# ---------------------------------------------------------------- correlators


def _target_basis(basis, q: int):
    if isinstance(basis, FullBasis):
        return basis
    if basis.N - q < 0:
        return None
    return enumerate_sector(basis.L, basis.N - q, basis.n_max)


def apply_local(vec: np.ndarray, basis, site: int, kind: str, target=None):
    """
    Apply the lowering operator ``kind`` on ``site`` to ``vec``.

    Returns ``(new_vec, target_basis)``; for a sector basis the result lives
    in the sector with the operator's charge removed. ``target_basis`` is None
    when that sector does not exist.
    """
    if not 0 <= site < basis.L:
        raise IndexError(f"site {site} out of range for L={basis.L}")
    if target is None:
        target = _target_basis(basis, _CHARGE[kind])
    if target is None:
        return None, None
    s = basis.digits[:, site].astype(np.int64)
    m, shift, amp = _local_action(kind, s)
    src = np.nonzero(m)[0]
    tgt = target.rank(basis.codes[src] + shift * basis.powers[site])
    out = np.zeros(target.dim)
    ok = tgt >= 0
    np.add.at(out, tgt[ok], amp[ok] * vec[src[ok]])
    return out, target


def _state_vector(gs) -> np.ndarray:
    return gs.vector if isinstance(gs, GroundState) else np.asarray(gs)


def correlation(gs, basis, kind: str, i: int, j: int) -> float:
    """<O_i^dag O_j> in the state ``gs`` for O of the given kind."""
    v = _state_vector(gs)
    oi, target = apply_local(v, basis, i, kind)
    if oi is None:
        return 0.0
    oj = oi if i == j else apply_local(v, basis, j, kind, target)[0]
    return float(oi @ oj)


@dataclass
class CorrelationSeries:
    kind: str
    ref: int
    distances: list[int]
    values: list[float]


def correlation_series(gs, basis, kind: str, ref: int | None = None, stop: int | None = None) -> CorrelationSeries:
    """
    Gamma(ref, ref + d). Default reference site is L // 4 and the scan runs to
    3L // 4 inclusive, keeping away from the open ends.
    """
    L = basis.L
    ref = L // 4 if ref is None else ref
    stop = max(3 * L // 4, ref) if stop is None else stop
    if not 0 <= ref <= stop < L:
        raise IndexError(f"bad correlation window ref={ref}, stop={stop}, L={L}")
    v = _state_vector(gs)
    oi, target = apply_local(v, basis, ref, kind)
    distances, values = [], []
    for j in range(ref, stop + 1):
        distances.append(j - ref)
        if oi is None:
            values.append(0.0)
        else:
            oj = oi if j == ref else apply_local(v, basis, j, kind, target)[0]
            values.append(float(oi @ oj))
    return CorrelationSeries(kind, ref, distances, values)


def site_occupations(gs, basis) -> dict[str, np.ndarray]:
    """Per-site <n_p>, <P_e1>, <P_e2> and weighted charge."""
    p = _state_vector(gs) ** 2
    dg = basis.digits
    photons = p @ (dg // 3)
    p1 = p @ (dg % 3 == 1)
    p2 = p @ (dg % 3 == 2)
    return {"photons": photons, "e1": p1, "e2": p2, "charge": photons + p1 + 2 * p2}


# ---------------------------------------------------------------- fidelity


def fidelity_susceptibility(gs1, gs2, dk: float) -> float:
    """-2 ln|<psi(k)|psi(k + dk)>| / dk^2."""
    if dk <= 0:
        raise ValueError("dk must be positive")
    v1, v2 = _state_vector(gs1), _state_vector(gs2)
    if v1.shape != v2.shape:
        raise ValueError("states live in different bases")
    ov = abs(float(v1 @ v2)) / (np.linalg.norm(v1) * np.linalg.norm(v2))
    if ov < 1e-12:
        raise OrthogonalStatesError("states orthogonal: dk too large or a level crossing")
    return -2.0 * math.log(min(ov, 1.0)) / dk**2


@dataclass(frozen=True)
class FidelityPoint:
    kappa: float
    chi: float
    overlap: float


def _fidelity_task(task):
    L, N, params, k, dk, n_max, boundary, tol, max_iter, seed = task
    op1, basis = build_chain(L, N, params.with_kappa(k), n_max, boundary)
    gs1 = ground_state(op1, tol=tol, max_iter=max_iter, seed=seed)
    op2, _ = build_chain(L, N, params.with_kappa(k + dk), n_max, boundary)
    gs2 = ground_state(op2, tol=tol, max_iter=max_iter, seed=seed, v0=gs1.vector)
    for g, kk in ((gs1, k), (gs2, k + dk)):
        if not g.converged:
            raise ConvergenceError(f"L={L}, N={N}, kappa={kk}: residual {g.residual:.3e}")
    ov = abs(float(gs1.vector @ gs2.vector))
    return FidelityPoint(float(k), fidelity_susceptibility(gs1, gs2, dk), ov)


def fidelity_scan(
    L: int,
    N: int,
    params: ModelParams,
    kappas: Sequence[float],
    dk: float = 1e-3,
    n_max: int | None = None,
    boundary: str = "open",
    tol: float = 1e-10,
    seed: int = 0,
    max_iter: int = 5000,
    workers: int = 1,
) -> list[FidelityPoint]:
    """chi_FS(kappa) on a grid; the kappa + dk solve is warm-started from kappa."""
    tasks = [(L, N, params, float(k), dk, n_max, boundary, tol, max_iter, seed) for k in kappas]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_fidelity_task, tasks))
    return [_fidelity_task(t) for t in tasks]


def peak_location(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, int]:
    """Grid argmax refined by a parabola through its two neighbours; (x_peak, grid index)."""
    k = int(np.argmax(ys))
    if 0 < k < len(xs) - 1:
        x0, x1, x2 = xs[k - 1], xs[k], xs[k + 1]
        y0, y1, y2 = ys[k - 1], ys[k], ys[k + 1]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
        b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
        if a < 0:
            return float(-b / (2 * a)), k
    return float(xs[k]), k


def local_maxima(ys: Sequence[float]) -> list[int]:
    return [k for k in range(1, len(ys) - 1) if ys[k] > ys[k - 1] and ys[k] > ys[k + 1]]


# ---------------------------------------------------------------- single cavity


@dataclass
class CavitySpectrum:
    n: int
    mu: float
    energies: np.ndarray
    shifted: np.ndarray

    @property
    def lowest(self) -> float:
        return float(self.energies[0])

    @property
    def lowest_shifted(self) -> float:
        return float(self.shifted[0])


def single_cavity_spectrum(n: int, params: ModelParams, mu: float = 0.0) -> CavitySpectrum:
    """Full spectrum of the charge-n block of one cavity, raw and shifted by -mu n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    op, _ = build_chain(1, n, params, n_max=n)
    e = dense_spectrum(op)
    return CavitySpectrum(n, mu, e, e - mu * n)
