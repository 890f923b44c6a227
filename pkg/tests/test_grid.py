import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as orc
from dnmaps import grid
from dnmaps.grid import (
    DomainError,
    NeumannEliminationError,
    assemble,
    build_chain,
    build_masked,
    build_rectangle,
)
from dnmaps.relcore import ContractViolation

L_MASK_12 = np.array(
    [[1, 1, 1, 1], [1, 1, 1, 1], [1, 1, 0, 0], [1, 1, 0, 0]], dtype=bool
)


def green_second_defect(model, trials=1000, seed=0):
    rng = np.random.default_rng(seed)
    I, B = model.I, model.B
    S = model.S.toarray()
    worst = 0.0
    for _ in range(trials):
        u, v = rng.standard_normal((2, model.domain.n_nodes))
        Su, Sv = S @ u, S @ v
        lhs = Su[I] @ v[I] - u[I] @ Sv[I]
        rhs = u[B] @ Sv[B] - Su[B] @ v[B]
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return worst


MODELS = {
    "chain4": lambda: assemble(build_chain(4, 1.0)),
    "chain7_pot": lambda: assemble(build_chain(7, 0.5), np.linspace(-1, 2, 7)),
    "rect5x3": lambda: assemble(build_rectangle(5, 3, 0.2), 1.5),
    "lmask": lambda: assemble(build_masked(L_MASK_12, 0.25), 0.0),
}


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "nx, ny, h, n_nodes, n_int",
    [(2, 2, 1.0, 9, 1), (3, 2, 1.0, 12, 2), (32, 32, 1 / 32, 33 * 33, 31 * 31)],
)
def test_rectangle_counts(nx, ny, h, n_nodes, n_int):
    d = build_rectangle(nx, ny, h)
    assert d.n_nodes == n_nodes
    assert len(d.interior) == n_int
    assert len(d.boundary) == n_nodes - n_int


def test_rectangle_edges_and_perimeter():
    d = build_rectangle(3, 2, 1.0)
    # horizontal 3*3 + vertical 4*2
    assert len(d.edges) == 17
    perim = (d.nodes[:, 0] == 0) | (d.nodes[:, 0] == 3) | (d.nodes[:, 1] == 0) | (d.nodes[:, 1] == 2)
    assert np.array_equal(perim, d.boundary_flags)


@pytest.mark.parametrize("nx, ny", [(1, 4), (4, 1), (0, 0)])
def test_rectangle_too_small(nx, ny):
    with pytest.raises(DomainError):
        build_rectangle(nx, ny, 1.0)


def test_nonpositive_spacing():
    with pytest.raises(DomainError):
        build_rectangle(3, 3, 0.0)


def test_chain4_fixture(chain4):
    assert list(chain4.B) == [0, 3]
    assert list(chain4.I) == [1, 2]
    assert np.array_equal(chain4.S.toarray(), orc.CHAIN4_S)


def test_chain5_is_path_laplacian():
    m = assemble(build_chain(5, 1.0))
    L = 2 * np.eye(5) - np.eye(5, k=1) - np.eye(5, k=-1)
    L[0, 0] = L[4, 4] = 1
    assert m.n_interior == 3
    assert np.array_equal(m.S.toarray(), L)


def test_chain_too_short():
    with pytest.raises(DomainError):
        build_chain(3, 1.0)


def test_full_mask_matches_rectangle():
    a = build_masked(np.ones((2, 2), dtype=bool), 0.5)
    b = build_rectangle(2, 2, 0.5)
    ka = {tuple(c): f for c, f in zip(a.nodes, a.boundary_flags)}
    kb = {tuple(c): f for c, f in zip(b.nodes, b.boundary_flags)}
    assert ka == kb
    pa = {frozenset((tuple(a.nodes[i]), tuple(a.nodes[j]))) for i, j in a.edges}
    pb = {frozenset((tuple(b.nodes[i]), tuple(b.nodes[j]))) for i, j in b.edges}
    assert pa == pb


def test_three_cell_l_layout():
    # hand count: the 3x3 corner lattice minus (2, 2), and no node is
    # surrounded by four selected cells
    coords, edges, flags = grid.mask_layout([[1, 1], [1, 0]])
    assert len(coords) == 8
    assert flags.all()
    assert len(edges) == 10
    with pytest.raises(DomainError):
        build_masked([[1, 1], [1, 0]], 1.0)


def test_twelve_cell_l_classification():
    d = build_masked(L_MASK_12, 0.25)
    assert d.n_nodes == 21
    interior = {tuple(c) for c in d.nodes[d.interior]}
    assert interior == {(1, 1), (1, 2), (1, 3), (2, 1), (3, 1)}
    # the re-entrant corner is a boundary node
    assert (2, 2) not in interior


@pytest.mark.parametrize(
    "mask",
    [
        [[1]],  # single cell: no interior node
        [[0, 0], [0, 0]],  # empty
        [[1, 0], [0, 1]],  # disconnected (diagonal only)
    ],
)
def test_mask_rejections(mask):
    with pytest.raises(DomainError):
        build_masked(mask, 1.0)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def test_rectangle_2x2_single_interior_entry():
    h = 0.3
    m = assemble(build_rectangle(2, 2, h))
    assert m.S_II.shape == (1, 1)
    assert m.S_II[0, 0] == pytest.approx(4 / h**2, rel=1e-15)


@pytest.mark.parametrize("c", [-3.0, 0.5, 10.0])
def test_constant_potential_shift(c):
    dom = build_rectangle(4, 3, 0.25)
    m0, mc = assemble(dom, 0.0), assemble(dom, c)
    assert np.allclose(mc.dirichlet_eigenvalues, m0.dirichlet_eigenvalues + c, rtol=0, atol=1e-11)
    # boundary values of V enter S_BB; d/dc of the Schur complement is
    # I + S_IB (S_BB + c)^-2 S_BI >= I, so Neumann eigenvalues move in the
    # direction of c by at least |c|
    shift = mc.neumann_eigenvalues - m0.neumann_eigenvalues
    assert np.all(np.sign(c) * (shift - c) >= -1e-11)


@pytest.mark.parametrize("c", [-3.0, 0.5, 10.0])
def test_interior_constant_potential_shifts_both(c):
    dom = build_rectangle(4, 3, 0.25)
    V = np.where(dom.boundary_flags, 0.0, c)
    m0, mc = assemble(dom, 0.0), assemble(dom, V)
    assert np.allclose(mc.dirichlet_eigenvalues, m0.dirichlet_eigenvalues + c, rtol=0, atol=1e-11)
    assert np.allclose(mc.neumann_eigenvalues, m0.neumann_eigenvalues + c, rtol=0, atol=1e-11)


def test_potential_length_mismatch():
    with pytest.raises(ValueError):
        assemble(build_chain(4, 1.0), np.zeros(3))


def test_complex_potential_rejected():
    with pytest.raises(ValueError):
        assemble(build_chain(4, 1.0), np.full(4, 1j))


@pytest.mark.parametrize("name", sorted(MODELS))
def test_model_blocks_symmetric(name):
    m = MODELS[name]()
    S = m.S.toarray()
    assert np.array_equal(S, S.T)
    assert np.array_equal(m.S_IB, m.S_BI.T)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_green_second_form(name):
    m = MODELS[name]()
    assert green_second_defect(m) <= 1e-12 * m.scale


@pytest.mark.parametrize("name", sorted(MODELS))
def test_green_first_form(name, rng):
    m = MODELS[name]()
    S = m.S.toarray()
    deg = np.bincount(m.domain.edges.ravel(), minlength=m.domain.n_nodes)
    assert deg.sum() == 2 * len(m.domain.edges)
    for _ in range(50):
        u, v = rng.standard_normal((2, m.domain.n_nodes))
        i, j = m.domain.edges.T
        form = np.sum((u[i] - u[j]) * (v[i] - v[j])) / m.domain.h**2 + np.sum(m.V * u * v)
        Sv = S @ v
        split = Sv[m.I] @ u[m.I] + grid.conormal(m, v) @ grid.trace(m, u)
        assert form == pytest.approx(split, rel=1e-12, abs=1e-12 * m.scale)


def test_corrupted_matrix_detected():
    m = assemble(build_chain(5, 1.0))
    S = m.S.toarray()
    S[1, 2] += 1e-3
    bad = grid.with_matrix(m, S)
    assert bad.green_defect() == pytest.approx(1e-3, rel=1e-12)
    with pytest.raises(ValueError):
        grid._check_green(bad)


# ---------------------------------------------------------------------------
# realizations
# ---------------------------------------------------------------------------


def test_chain4_realizations(chain4):
    R = chain4.realizations
    assert np.allclose(R.A_D, orc.CHAIN4_AD, atol=1e-15)
    assert np.allclose(R.A_N, orc.CHAIN4_AN, atol=1e-15)
    assert np.allclose(chain4.dirichlet_eigenvalues, orc.CHAIN4_AD_EIGS, atol=1e-14)
    assert np.allclose(chain4.neumann_eigenvalues, orc.CHAIN4_AN_EIGS, atol=1e-14)


def test_neumann_kernel_constants_8x8():
    m = assemble(build_rectangle(8, 8, 1 / 8))
    en = m.neumann_eigenvalues
    assert abs(en[0]) <= 1e-9 * m.scale and en[1] > 1.0
    ext = grid.neumann_extension(m, np.ones(m.n_interior))
    assert np.allclose(ext, 1.0, atol=1e-12)


def test_shifted_chain4_lower_bound():
    m = assemble(build_chain(4, 1.0), -5.0)
    assert np.allclose(m.dirichlet_eigenvalues, [-4.0, -2.0], atol=1e-14)
    R = m.realizations
    assert R.essinf_V == -5.0
    assert m.neumann_eigenvalues.min() >= R.essinf_V - 1e-8 * m.scale


@pytest.mark.parametrize("name", sorted(MODELS))
def test_neumann_extension_properties(name, rng):
    m = MODELS[name]()
    u = rng.standard_normal(m.n_interior)
    f = grid.neumann_extension(m, u)
    assert np.max(np.abs(grid.conormal(m, f))) <= 1e-12 * m.scale
    assert np.allclose((m.S @ f)[m.I], m.realizations.A_N @ u, atol=1e-11 * m.scale)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_realizations_bounded_below(name):
    m = MODELS[name]()
    eps = 1e-8 * m.scale
    assert m.dirichlet_eigenvalues.min() >= m.V.min() - eps
    assert m.neumann_eigenvalues.min() >= m.V.min() - eps


@pytest.mark.parametrize("name", ["chain4", "lmask"])
def test_interlacing_zero_potential(name):
    m = MODELS[name]()
    en, ed = m.neumann_eigenvalues, m.dirichlet_eigenvalues
    assert np.all(en <= ed + 1e-10 * m.scale)


def test_singular_boundary_block():
    V = np.zeros(4)
    V[0] = -1.0  # S_BB = diag(0, 1)
    m = assemble(build_chain(4, 1.0), V)
    with pytest.raises(NeumannEliminationError):
        m.realizations


# ---------------------------------------------------------------------------
# traces and conormal derivatives
# ---------------------------------------------------------------------------


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_conormal_of_affine(a, b):
    m = assemble(build_chain(4, 1.0))
    f = a + b * np.arange(4.0)
    assert np.allclose(grid.conormal(m, f), [-b, b], atol=1e-12)
    assert np.allclose(grid.trace(m, f), [a, a + 3 * b])


def test_conormal_of_constant():
    m = MODELS["lmask"]()
    assert np.allclose(grid.conormal(m, np.full(m.domain.n_nodes, 2.5)), 0.0, atol=1e-12)


def test_zero_extension_conormal(chain4):
    g = np.array([1.0, 1.0])
    assert np.allclose(grid.conormal(chain4, grid.zero_extension(chain4, g)), [-1.0, -1.0])
    assert np.allclose(chain4.S_BI @ g, [-1.0, -1.0])


def test_trace_length_mismatch(chain4):
    with pytest.raises(ValueError):
        grid.trace(chain4, np.zeros(3))
    with pytest.raises(ValueError):
        grid.neumann_trace(chain4, np.zeros(3))


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


def test_spectrum_of_examples(chain4):
    assert np.allclose(grid.spectrum_of(chain4.realizations.A_D).eigenvalues, [1, 3])
    assert np.allclose(grid.spectrum_of([[5.0]]).eigenvalues, [5.0])
    with pytest.raises(ContractViolation):
        grid.spectrum_of([[1.0, 2.0], [0.0, 1.0]])


def test_unit_square_smallest_dirichlet():
    h = 1 / 32
    m = assemble(build_rectangle(32, 32, h))
    lam0 = m.dirichlet_eigenvalues[0]
    assert lam0 == pytest.approx((8 / h**2) * math.sin(math.pi * h / 2) ** 2, rel=1e-12)
    assert abs(lam0 - 2 * math.pi**2) / (2 * math.pi**2) <= 3e-3


def test_node_potential():
    d = build_rectangle(2, 2, 0.5)
    V = grid.node_potential(d, lambda x, y: x + 10 * y)
    assert np.allclose(V, d.positions() @ [1.0, 10.0])
    assert np.allclose(grid.node_potential(d, lambda x, y: 3.0), 3.0)
