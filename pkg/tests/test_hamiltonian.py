import math

import numpy as np
import pytest
import scipy.sparse as sp

from jchsim.basis import Level, LocalState, enumerate_sector, full_basis
from jchsim.eigensolver import dense_spectrum, ground_state
from jchsim.hamiltonian import (
    ModelParams,
    build_chain,
    build_cluster_gc,
    build_sector,
    charge_commutator_norm,
    charge_operator,
    cluster_geometry,
    embed_in_full,
)

SQ2 = math.sqrt(2.0)
G, E1, E2 = Level.G, Level.E1, Level.E2


def S(n, lv):
    return LocalState(n, lv)


def matrix_in(op, basis, order):
    """Dense matrix with rows/columns in the caller's configuration order."""
    idx = [basis.index(c) for c in order]
    return op.toarray()[np.ix_(idx, idx)]


def test_single_cavity_charge_one():
    op, b = build_chain(1, 1, ModelParams(beta12=SQ2, delta=0.4))
    h = matrix_in(op, b, [(S(1, G),), (S(0, E1),)])
    np.testing.assert_array_equal(h, [[0, 1], [1, 0]])


def test_single_cavity_charge_two():
    op, b = build_chain(1, 2, ModelParams(beta12=SQ2, delta=0.4))
    h = matrix_in(op, b, [(S(2, G),), (S(1, E1),), (S(0, E2),)])
    np.testing.assert_allclose(h, [[0, SQ2, 0], [SQ2, 0, SQ2], [0, SQ2, -0.4]], atol=1e-15)


def test_two_site_hopping_element():
    op, b = build_chain(2, 1, ModelParams(kappa=0.05))
    i = b.index((S(1, G), S(0, G)))
    j = b.index((S(0, G), S(1, G)))
    assert op.toarray()[i, j] == pytest.approx(-0.05, abs=1e-15)


def test_hopping_amplitude_bosonic_factor():
    op, b = build_chain(2, 3, ModelParams(kappa=0.1), n_max=3)
    i = b.index((S(2, G), S(1, G)))
    j = b.index((S(1, G), S(2, G)))
    assert op.toarray()[i, j] == pytest.approx(-0.1 * math.sqrt(2) * math.sqrt(2))


def test_truncation_drops_out_of_range_states():
    # n_max = 1 forbids (0g, 2g); the (1g,1g) state must not couple to it
    op, b = build_chain(2, 2, ModelParams(kappa=0.1), n_max=1)
    assert all(max(s.n_p for s in c) <= 1 for c in b.configs)
    assert op.is_symmetric()


@pytest.mark.parametrize("L,N,kappa", [(3, 4, 0.07), (4, 5, 0.2), (2, 6, 0.01)])
def test_hermiticity(L, N, kappa):
    op, _ = build_chain(L, N, ModelParams(kappa=kappa))
    assert op.is_symmetric()
    d = op.toarray()
    assert np.array_equal(d, d.T)


def test_periodic_chain_adds_closing_bond():
    op_o, b = build_chain(3, 1, ModelParams(kappa=0.3), boundary="open")
    op_p, _ = build_chain(3, 1, ModelParams(kappa=0.3), boundary="periodic")
    i = b.index((S(1, G), S(0, G), S(0, G)))
    j = b.index((S(0, G), S(0, G), S(1, G)))
    assert op_o.toarray()[i, j] == 0
    assert op_p.toarray()[i, j] == pytest.approx(-0.3)


def test_cluster_geometry_bond_counts():
    g = cluster_geometry("2x2")
    assert len(g.internal_bonds) == 4
    internal_deg = [0] * 4
    for i, j in g.internal_bonds:
        internal_deg[i] += 1
        internal_deg[j] += 1
    assert internal_deg == [2, 2, 2, 2]
    assert g.cut_counts() == [2, 2, 2, 2]
    g1 = cluster_geometry("1x1")
    assert g1.internal_bonds == () and g1.cut_counts() == [4]
    g2 = cluster_geometry("2x1")
    assert len(g2.internal_bonds) == 1 and g2.cut_counts() == [3, 3]


def test_cluster_1x1_psi_zero_is_decoupled_cavity():
    p = ModelParams(kappa=0.05)
    mu = -0.9
    op, fb = build_cluster_gc(cluster_geometry("1x1"), p, mu, [0.0], n_max=4)
    e_gc = dense_spectrum(op)[0]
    levels = []
    for n in range(0, 5):
        o, _ = build_chain(1, n, p, n_max=4)
        levels.append(dense_spectrum(o)[0] - mu * n)
    assert e_gc == pytest.approx(min(levels), abs=1e-12)


def test_cluster_1x1_mean_field_elements():
    kappa, psi = 0.05, 0.1
    p = ModelParams(kappa=kappa)
    op, fb = build_cluster_gc(cluster_geometry("1x1"), p, 0.0, [psi], n_max=3)
    h = op.toarray()
    z = 4
    for n in range(3):
        for lv in (G, E1, E2):
            i = fb.index((S(n, lv),))
            j = fb.index((S(n + 1, lv),))
            assert h[i, j] == pytest.approx(-kappa * z * psi * math.sqrt(n + 1))
    # diagonal of |0,g>: only the constant
    k = fb.index((S(0, G),))
    assert h[k, k] == pytest.approx(kappa * z * psi**2)


def _charge_blocks(op, fb):
    q = charge_operator(fb)
    h = op.matrix.tocsr()
    return q, h


@pytest.mark.parametrize("L,n_max", [(1, 0), (1, 3), (2, 1), (2, 2), (2, 3)])
def test_block_structure_matches_sector_builder(L, n_max):
    p = ModelParams(kappa=0.13)
    geom = cluster_geometry("2x1") if L == 2 else cluster_geometry("1x1")
    # chain bonds and the 2x1 internal bond coincide; mu = 0 isolates H_C
    op, fb = build_cluster_gc(geom, p, 0.0, [0.0] * L, n_max=max(n_max, 2))
    fb_small = full_basis(L, n_max)
    if n_max < 2:
        # compare on the smaller truncation directly
        op = build_sector(fb_small, p, geom.internal_bonds)
        fb = fb_small
    q = charge_operator(fb)
    h = op.matrix.tocsr()
    for N in range(0, L * (fb.n_max + 2) + 1):
        sec = enumerate_sector(L, N, fb.n_max)
        idx = sec.codes
        other = np.flatnonzero(q != N)
        blk = h[idx][:, idx].toarray()
        ref, _ = build_chain(L, N, p, n_max=fb.n_max)
        np.testing.assert_array_equal(blk, ref.toarray())
        # nothing couples this sector to any other
        assert h[idx][:, other].nnz == 0


def test_plaquette_psi_zero_spectrum_shift():
    """2x2 cluster at psi = 0 equals the open plaquette sectors shifted by -mu N."""
    p = ModelParams(kappa=0.05)
    mu = -1.02
    geom = cluster_geometry("2x2")
    op, fb = build_cluster_gc(geom, p, mu, [0.0] * 4, n_max=2)
    q = charge_operator(fb)
    h = op.matrix.tocsr()
    for N in range(0, 7):
        sec = enumerate_sector(4, N, 2)
        ref = build_sector(sec, p, geom.internal_bonds)
        blk = h[sec.codes][:, sec.codes]
        diff = blk - (ref.matrix - mu * N * sp.identity(sec.dim))
        assert abs(diff).max() < 1e-13
    # lowest grand energy equals the best sector
    best = min(
        ground_state(build_sector(enumerate_sector(4, N, 2), p, geom.internal_bonds)).energy - mu * N
        for N in range(0, 9)
    )
    assert ground_state(op).energy == pytest.approx(best, abs=1e-9)


def test_cluster_2x2_psi_terms_use_mirror_sites():
    p = ModelParams(kappa=0.1)
    geom = cluster_geometry("2x2")
    psi = [0.1, 0.2, 0.3, 0.4]
    op, fb = build_cluster_gc(geom, p, 0.0, psi, n_max=2)
    vac = fb.index(tuple(S(0, G) for _ in range(4)))
    one = fb.index((S(1, G), S(0, G), S(0, G), S(0, G)))
    # site 0 is cut towards images of sites 1 and 2
    assert op.toarray()[vac, one] == pytest.approx(-0.1 * (0.2 + 0.3))
    const = 0.1 * sum(psi[i] * psi[j] for i, j in geom.boundary_bonds)
    assert op.toarray()[vac, vac] == pytest.approx(const)


def test_charge_commutator_chain_embedded():
    op, sec = build_chain(2, 3, ModelParams(kappa=0.3), n_max=3)
    full_op, fb = embed_in_full(op, sec)
    assert charge_commutator_norm(full_op, fb) <= 1e-12 * max(op.norm_inf(), 1)


def test_charge_commutator_full_canonical_cluster():
    op, fb = build_cluster_gc(cluster_geometry("2x1"), ModelParams(kappa=0.3), -0.5, [0.0, 0.0], n_max=3)
    assert charge_commutator_norm(op, fb) <= 1e-12 * op.norm_inf()


def test_charge_commutator_mean_field_breaks_symmetry():
    op, fb = build_cluster_gc(cluster_geometry("1x1"), ModelParams(kappa=0.05), 0.0, [0.1], n_max=4)
    assert charge_commutator_norm(op, fb) > 1e-3


def test_unweighted_charge_is_not_conserved():
    p = ModelParams(beta12=SQ2, kappa=0.0)
    op, fb = build_cluster_gc(cluster_geometry("1x1"), p, 0.0, [0.0], n_max=4)
    assert charge_commutator_norm(op, fb, weights=(0, 1, 1)) > 0.1
    assert charge_commutator_norm(op, fb, weights=(0, 1, 2)) < 1e-12
    # without the second transition the two definitions agree
    op0, fb0 = build_cluster_gc(cluster_geometry("1x1"), ModelParams(beta12=0.0), 0.0, [0.0], n_max=4)
    assert charge_commutator_norm(op0, fb0, weights=(0, 1, 1)) < 1e-12


@pytest.mark.parametrize("N", [1, 2, 3, 5])
def test_two_level_reduction(N):
    op, b = build_chain(1, N, ModelParams(beta12=0.0, delta=0.4))
    keep = [k for k, c in enumerate(b.configs) if c[0].level != E2]
    h = op.toarray()[np.ix_(keep, keep)]
    np.testing.assert_allclose(np.linalg.eigvalsh(h), [-math.sqrt(N), math.sqrt(N)], atol=1e-12)


def test_truncation_convergence_of_cluster_energy():
    p = ModelParams(kappa=0.05)
    geom = cluster_geometry("1x1")
    e = []
    for n_max in range(2, 9):
        op, _ = build_cluster_gc(geom, p, -0.9, [0.3], n_max=n_max)
        e.append(dense_spectrum(op)[0])
    shifts = np.abs(np.diff(e))
    assert np.all(np.diff(shifts) <= 1e-15)
    assert shifts[-1] < 1e-8
