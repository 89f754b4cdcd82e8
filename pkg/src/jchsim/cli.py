"""
Command-line driver.

Every subcommand reads one JSON config, writes a CSV table and (with --out)
a JSON sidecar holding the resolved config and the same rows. Feeding the
sidecar back through --config reproduces both files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from . import cmft, observables
from .basis import sector_dimension
from .config import COMMANDS, RunConfig, load_config, parse_config
from .errors import ConfigError, ConvergenceError, DimensionLimitError, JCHError, OrthogonalStatesError
from .eigensolver import ground_state
from .hamiltonian import ModelParams, build_chain, chain_bonds, cluster_geometry

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_RESOURCE = 0, 2, 3, 4
SCHEMA_VERSION = 1
DEFAULT_CLUSTER_NMAX = 4


class RunOutput:
    def __init__(self, columns: list[str], rows: list[dict[str, Any]], summary: dict[str, Any] | None = None,
                 ok: bool = True):
        self.columns = columns
        self.rows = rows
        self.summary = summary or {}
        self.ok = ok


# ------------------------------------------------------------------ formatting


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def render_csv(out: RunOutput) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(out.columns)
    for row in out.rows:
        w.writerow([_fmt(row[c]) for c in out.columns])
    return buf.getvalue()


def _json_safe(v: Any) -> Any:
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    return v


def render_json(cfg: RunConfig, out: RunOutput) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "config": cfg.to_dict(),
        "columns": out.columns,
        "results": [_json_safe(r) for r in out.rows],
        "summary": _json_safe(out.summary),
    }
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=False) + "\n"


def output_schema() -> dict:
    return json.loads(resources.files("jchsim").joinpath("schemas/output.schema.json").read_text())


# ------------------------------------------------------------------ resource guard


def _chain_nnz_bound(L: int, N: int, n_max: int | None, boundary: str) -> int:
    nm = N if n_max is None else n_max
    dim = sector_dimension(L, N, nm)
    per_row = 1 + 4 * L + 2 * len(chain_bonds(L, boundary))
    return dim * per_row


def _cluster_nnz_bound(shape: str, n_max: int) -> int:
    geom = cluster_geometry(shape)
    d = 3 * (n_max + 1)
    per_row = 1 + 6 * geom.n_sites + 2 * len(geom.internal_bonds)
    return d**geom.n_sites * per_row


def _guard(nnz: int, cfg: RunConfig, what: str) -> None:
    if nnz > cfg.solver.max_nnz:
        raise DimensionLimitError(
            f"{what}: estimated {nnz} nonzeros exceeds solver.max_nnz = {cfg.solver.max_nnz}"
        )


# ------------------------------------------------------------------ commands


def cmd_single_cavity(cfg: RunConfig, workers: int = 1) -> RunOutput:
    rows = []
    for b12 in cfg.model.beta12_grid:
        params = ModelParams(cfg.model.beta01, b12, cfg.model.delta, 0.0)
        for n in cfg.n_values:
            spec = observables.single_cavity_spectrum(n, params, cfg.mu)
            rows.append({"beta12": float(b12), "n": n, "mu": float(cfg.mu),
                         "E_n": spec.lowest, "E_n_shifted": spec.lowest_shifted})
    return RunOutput(["beta12", "n", "mu", "E_n", "E_n_shifted"], rows)


def _n_range(cfg: RunConfig) -> range:
    L = cfg.geometry.L
    lo, hi = cfg.sector.N_range if cfg.sector.N_range is not None else (0, 2 * L + 1)
    return range(lo, hi + 1)


def cmd_rho_mu(cfg: RunConfig, workers: int = 1) -> RunOutput:
    g = cfg.geometry
    if g.kind == "cluster":
        return _cmft_rows(cfg, workers, full=False)
    Ns = _n_range(cfg)
    _guard(max(_chain_nnz_bound(g.L, N, cfg.n_max, g.boundary) for N in Ns), cfg, f"chain L={g.L}")
    table = observables.energy_table(
        g.L, Ns, cfg.params(), n_max=cfg.n_max, boundary=g.boundary,
        tol=cfg.solver.tol, max_iter=cfg.solver.max_iter, seed=cfg.seed, workers=workers,
    )
    st = observables.staircase(table, cfg.mu_grid)
    rows = [{"mu_lo": s.mu_lo, "mu_hi": s.mu_hi, "N": s.N, "rho": s.rho, "dN": s.dN} for s in st.steps]
    summary = {"energies": {str(N): table[N] for N in table.n_range}}
    return RunOutput(["mu_lo", "mu_hi", "N", "rho", "dN"], rows, summary)


def cmd_correlations(cfg: RunConfig, workers: int = 1) -> RunOutput:
    g, N = cfg.geometry, cfg.sector.N
    _guard(_chain_nnz_bound(g.L, N, cfg.n_max, g.boundary), cfg, f"chain L={g.L}, N={N}")
    op, basis = build_chain(g.L, N, cfg.params(), cfg.n_max, g.boundary)
    gs = ground_state(op, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter, seed=cfg.seed)
    if not gs.converged:
        raise ConvergenceError(f"L={g.L}, N={N}: residual {gs.residual:.3e} above {gs.tol:.3e}")
    series = {k: observables.correlation_series(gs, basis, k) for k in observables.CORRELATION_KINDS}
    first = series["photon"]
    rows = []
    for idx, r in enumerate(first.distances):
        row: dict[str, Any] = {"distance": r, "i": first.ref, "j": first.ref + r}
        for k in observables.CORRELATION_KINDS:
            row[k] = series[k].values[idx]
        rows.append(row)
    summary = {"energy": gs.energy, "residual": gs.residual}
    return RunOutput(["distance", "i", "j", *observables.CORRELATION_KINDS], rows, summary)


def cmd_fidelity(cfg: RunConfig, workers: int = 1) -> RunOutput:
    g, N = cfg.geometry, cfg.sector.N
    _guard(_chain_nnz_bound(g.L, N, cfg.n_max, g.boundary), cfg, f"chain L={g.L}, N={N}")
    kappas = cfg.model.kappa_grid
    pts = observables.fidelity_scan(
        g.L, N, cfg.params(0.0), kappas, dk=cfg.dk, n_max=cfg.n_max, boundary=g.boundary,
        tol=cfg.solver.tol, seed=cfg.seed, max_iter=cfg.solver.max_iter, workers=workers,
    )
    chis = [p.chi for p in pts]
    x_peak, k_peak = observables.peak_location(kappas, chis)
    rows = [{"kappa": p.kappa, "chi": p.chi, "overlap": p.overlap, "max": i == k_peak} for i, p in enumerate(pts)]
    summary = {"kappa_peak": x_peak, "interior_maxima": len(observables.local_maxima(chis))}
    return RunOutput(["kappa", "chi", "overlap", "max"], rows, summary)


def _cmft_kw(cfg: RunConfig) -> dict[str, Any]:
    c = cfg.cmft
    return {"tol_psi": c.tol_psi, "max_sweeps": c.max_sweeps, "mixing": c.mixing, "solver_tol": cfg.solver.tol}


def _cluster_nmax(cfg: RunConfig) -> int:
    return DEFAULT_CLUSTER_NMAX if cfg.n_max is None else cfg.n_max


def _cmft_rows(cfg: RunConfig, workers: int, full: bool) -> RunOutput:
    shape, n_max = cfg.geometry.shape, _cluster_nmax(cfg)
    _guard(_cluster_nnz_bound(shape, n_max), cfg, f"cluster {shape}, n_max={n_max}")
    results = cmft.mu_scan(shape, cfg.params(), cfg.mu_grid, n_max=n_max, seed=cfg.seed,
                           workers=workers, **_cmft_kw(cfg))
    rows = []
    for r in results:
        row: dict[str, Any] = {"kappa": r.kappa, "mu": r.mu, "rho": r.rho, "psi_mean": r.psi_mean,
                               "energy": r.energy, "converged": r.converged}
        if full:
            row.update(branch=r.branch, iterations=r.iterations, psi_error=r.psi_error)
            for k in observables.CORRELATION_KINDS:
                row[k] = r.cluster_correlations[k]
            row["pair_ratio"] = cmft.pair_ratio(r.cluster_correlations)
        rows.append(row)
    cols = ["kappa", "mu", "rho", "psi_mean", "energy", "converged"]
    if full:
        cols += ["branch", "iterations", "psi_error", *observables.CORRELATION_KINDS, "pair_ratio"]
    return RunOutput(cols, rows, ok=all(r.converged for r in results))


def cmd_cmft_scan(cfg: RunConfig, workers: int = 1) -> RunOutput:
    return _cmft_rows(cfg, workers, full=True)


def cmd_phase_diagram(cfg: RunConfig, workers: int = 1) -> RunOutput:
    shape, n_max = cfg.geometry.shape, _cluster_nmax(cfg)
    _guard(_cluster_nnz_bound(shape, n_max), cfg, f"cluster {shape}, n_max={n_max}")
    pts = cmft.phase_scan(shape, cfg.params(0.0), cfg.model.kappa_grid, cfg.mu_grid, dmu=cfg.cmft.dmu,
                          n_max=n_max, seed=cfg.seed, workers=workers, **_cmft_kw(cfg))
    rows = [{"kappa": p.kappa, "mu": p.mu, "label": p.label, "psi_mean": p.psi_mean, "rho": p.rho,
             "ratio": p.pair_ratio, "cluster_charge": p.cluster_charge, "step_dN": p.step_dN,
             "converged": p.converged} for p in pts]
    bounds = [{"kappa": k, "mu_below": a, "mu_above": b, "label_below": la, "label_above": lb}
              for k, a, b, la, lb in cmft.phase_boundaries(pts)]
    cols = ["kappa", "mu", "label", "psi_mean", "rho", "ratio", "cluster_charge", "step_dN", "converged"]
    return RunOutput(cols, rows, {"boundaries": bounds}, ok=all(p.converged for p in pts))


HANDLERS: dict[str, Callable[[RunConfig, int], RunOutput]] = {
    "single-cavity": cmd_single_cavity,
    "rho-mu": cmd_rho_mu,
    "correlations": cmd_correlations,
    "fidelity": cmd_fidelity,
    "cmft-scan": cmd_cmft_scan,
    "phase-diagram": cmd_phase_diagram,
}


def run(cfg: RunConfig, workers: int = 1) -> RunOutput:
    return HANDLERS[cfg.command](cfg, workers)


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jchsim", description="Three-level Jaynes-Cummings-Hubbard simulations.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run config, or a previous JSON output")
        p.add_argument("--out", help="CSV path; the JSON sidecar goes next to it with a .json suffix")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return ap


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config)
    if cfg.command != args.command:
        raise ConfigError(f"command: config is for {cfg.command!r}, subcommand is {args.command!r}")
    if args.seed is not None:
        doc = cfg.to_dict()
        doc["seed"] = args.seed
        cfg = parse_config(doc)
    if args.workers < 1:
        raise ConfigError("--workers: must be >= 1")
    if args.out is not None and Path(args.out).suffix == ".json":
        raise ConfigError("--out: give the CSV path; the .json sidecar name is derived from it")
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
        out = run(cfg, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionLimitError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConvergenceError, OrthogonalStatesError) as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except JCHError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    text = render_csv(out)
    if args.out is None:
        sys.stdout.write(text)
    else:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        path.with_suffix(".json").write_text(render_json(cfg, out))
    if not out.ok:
        print("not converged: at least one point failed to reach the fixed point", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
