"""Lattice domains and the discrete Schrödinger operator -Δ + V.

The full-node matrix ``S = (1/h^2) L + diag(V)`` (``L`` the graph
Laplacian of nearest-neighbour edges) plays the role of the form on
H^1.  Its interior rows act as the differential expression, its boundary
rows as the conormal derivative, ``Λf = (S f)_B``.  With that choice both
Green identities hold exactly, which is what lets every boundary-map
identity be checked at machine precision.

Interior-indexed vectors follow ``domain.interior`` order, boundary
vectors follow ``domain.boundary`` order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .relcore import Spectrum, spectrum_of_matrix


class DomainError(ValueError):
    pass


class NeumannEliminationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Lattice nodes with a boundary/interior partition.

    Attributes
    ----------
    h : float
        Grid spacing.
    nodes : ndarray, shape (n, 2)
        Integer lattice coordinates; physical position is ``h * nodes``.
    edges : ndarray, shape (m, 2)
        Index pairs of nearest neighbours.
    boundary_flags : ndarray of bool, shape (n,)
    name : str
        Short descriptor used in reports.
    """

    h: float
    nodes: np.ndarray
    edges: np.ndarray
    boundary_flags: np.ndarray
    name: str = "grid"

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("grid spacing must be positive")
        for attr in ("nodes", "edges", "boundary_flags"):
            a = np.array(getattr(self, attr), copy=True)
            a.setflags(write=False)
            object.__setattr__(self, attr, a)
        self._validate()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_flags)

    @cached_property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_flags)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.n_nodes
        e = self.edges
        data = np.ones(2 * len(e))
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    def positions(self) -> np.ndarray:
        return self.h * self.nodes.astype(float)

    def _validate(self):
        I, B = self.interior, self.boundary
        if len(I) == 0 or len(B) == 0:
            raise DomainError("domain needs at least one interior and one boundary node")
        adj = self.adjacency
        ncomp, _ = connected_components(adj[I][:, I], directed=False)
        if ncomp != 1:
            raise DomainError("interior nodes are not connected")
        # Rectangle corners touch only boundary nodes; it is enough that each
        # boundary component reaches the interior (keeps S_BB invertible).
        ncomp, labels = connected_components(adj[B][:, B], directed=False)
        touches = np.asarray(adj[B][:, I].sum(axis=1)).ravel() > 0
        for c in range(ncomp):
            if not touches[labels == c].any():
                raise DomainError("a boundary component has no interior neighbour")


def _lattice_edges(coords: np.ndarray) -> np.ndarray:
    index = {tuple(c): k for k, c in enumerate(coords)}
    edges = []
    for k, (i, j) in enumerate(coords):
        for di, dj in ((1, 0), (0, 1)):
            m = index.get((i + di, j + dj))
            if m is not None:
                edges.append((k, m))
    return np.array(edges, dtype=int).reshape(-1, 2)


def build_rectangle(nx: int, ny: int, h: float) -> GridDomain:
    """(nx+1) x (ny+1) lattice with the perimeter as boundary."""
    if nx < 2 or ny < 2:
        raise DomainError("rectangle needs at least 2 cells per direction")
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="ij")
    coords = np.column_stack([ii.ravel(), jj.ravel()])
    flags = (coords[:, 0] == 0) | (coords[:, 0] == nx) | (coords[:, 1] == 0) | (coords[:, 1] == ny)
    return GridDomain(h, coords, _lattice_edges(coords), flags, name=f"rectangle({nx}x{ny},h={h:g})")


def build_chain(n_nodes: int, h: float) -> GridDomain:
    """Path graph; the two end nodes form the boundary."""
    if n_nodes < 4:
        raise DomainError("chain needs at least 4 nodes")
    coords = np.column_stack([np.arange(n_nodes), np.zeros(n_nodes, dtype=int)])
    flags = np.zeros(n_nodes, dtype=bool)
    flags[[0, -1]] = True
    return GridDomain(h, coords, _lattice_edges(coords), flags, name=f"chain({n_nodes},h={h:g})")


def build_masked(cell_mask, h: float) -> GridDomain:
    """Union of unit cells ``mask[i, j]`` (row i = x index, column j = y index).

    Nodes are cell corners; a node is on the boundary iff it lies on a cell
    face that belongs to exactly one selected cell.
    """
    coords, edges, flags = mask_layout(cell_mask)
    shape = np.shape(cell_mask)
    return GridDomain(h, coords, edges, flags, name=f"mask({shape[0]}x{shape[1]},h={h:g})")


def mask_layout(cell_mask):
    """Nodes, edges and boundary flags of a cell mask, before domain validation."""
    mask = np.asarray(cell_mask, dtype=bool)
    if mask.ndim != 2 or not mask.any():
        raise DomainError("mask must be a non-empty 2-D boolean array")
    ncomp, _ = _cell_components(mask)
    if ncomp != 1:
        raise DomainError("mask cells are not edge-connected")
    cells = np.argwhere(mask)
    corners = sorted({(i + a, j + b) for i, j in cells for a in (0, 1) for b in (0, 1)})
    coords = np.array(corners, dtype=int)
    index = {c: k for k, c in enumerate(corners)}

    def selected(i, j):
        return 0 <= i < mask.shape[0] and 0 <= j < mask.shape[1] and mask[i, j]

    flags = np.zeros(len(coords), dtype=bool)
    # faces x = i spanning y in [j, j+1]
    for i in range(mask.shape[0] + 1):
        for j in range(mask.shape[1]):
            if selected(i - 1, j) != selected(i, j):
                flags[index[(i, j)]] = flags[index[(i, j + 1)]] = True
    # faces y = j spanning x in [i, i+1]
    for i in range(mask.shape[0]):
        for j in range(mask.shape[1] + 1):
            if selected(i, j - 1) != selected(i, j):
                flags[index[(i, j)]] = flags[index[(i + 1, j)]] = True
    edge_set = set()
    for i, j in cells:
        for a, b in (((i, j), (i + 1, j)), ((i, j + 1), (i + 1, j + 1)),
                     ((i, j), (i, j + 1)), ((i + 1, j), (i + 1, j + 1))):
            edge_set.add((index[a], index[b]))
    edges = np.array(sorted(edge_set), dtype=int)
    return coords, edges, flags


def _cell_components(mask: np.ndarray):
    cells = np.argwhere(mask)
    index = {tuple(c): k for k, c in enumerate(cells)}
    rows, cols = [], []
    for k, (i, j) in enumerate(cells):
        for di, dj in ((1, 0), (0, 1)):
            m = index.get((i + di, j + dj))
            if m is not None:
                rows.append(k)
                cols.append(m)
    n = len(cells)
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return connected_components(adj, directed=False)


# ---------------------------------------------------------------------------
# discrete model
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """Assembled ``S`` over all nodes together with its I/B blocks."""

    domain: GridDomain
    V: np.ndarray
    S: sp.csr_matrix

    @property
    def I(self) -> np.ndarray:  # noqa: E743
        return self.domain.interior

    @property
    def B(self) -> np.ndarray:
        return self.domain.boundary

    @property
    def n_interior(self) -> int:
        return len(self.I)

    @property
    def n_boundary(self) -> int:
        return len(self.B)

    @cached_property
    def S_II(self) -> np.ndarray:
        return self.S[self.I][:, self.I].toarray()

    @cached_property
    def S_IB(self) -> np.ndarray:
        return self.S[self.I][:, self.B].toarray()

    @cached_property
    def S_BI(self) -> np.ndarray:
        return self.S[self.B][:, self.I].toarray()

    @cached_property
    def S_BB(self) -> np.ndarray:
        return self.S[self.B][:, self.B].toarray()

    @cached_property
    def scale(self) -> float:
        """Max absolute entry of S, the natural size of residuals."""
        return float(max(1.0, abs(self.S).max()))

    @cached_property
    def realizations(self) -> "RealizationPair":
        return realizations(self)

    @cached_property
    def dirichlet_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.realizations.A_D)

    @cached_property
    def neumann_eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.realizations.A_N)

    @property
    def name(self) -> str:
        v = self.V
        pot = f"V={v[0]:g}" if np.all(v == v[0]) else "V=var"
        return f"{self.domain.name},{pot}"

    def green_defect(self) -> float:
        """``max |((Su)_I,v_I) - (u_I,(Sv)_I) - (u_B,Λv) + (Λu,v_B)|`` over unit u, v.

        The expression equals ``v^T (S - S^T) u``, so the sharp value is the
        spectral norm of the antisymmetric part.
        """
        d = (self.S - self.S.T).toarray()
        return float(np.linalg.norm(d, 2)) if d.size else 0.0


def assemble(domain: GridDomain, V=0.0, check: bool = True) -> DiscreteModel:
    """``S = (1/h^2) Σ_edges (e_i - e_j)(e_i - e_j)^T + diag(V)``."""
    n = domain.n_nodes
    V = np.asarray(V)
    if np.iscomplexobj(V):
        raise ValueError("potential must be real")
    V = np.broadcast_to(V.astype(float), (n,)).copy() if V.ndim == 0 else V.astype(float)
    if V.shape != (n,):
        raise ValueError(f"potential has {V.shape[0]} values for {n} nodes")
    e = domain.edges
    deg = np.bincount(e.ravel(), minlength=n).astype(float)
    lap = sp.diags(deg) - domain.adjacency
    S = (lap / domain.h**2 + sp.diags(V)).tocsr()
    V.setflags(write=False)
    model = DiscreteModel(domain, V, S)
    if check:
        _check_green(model)
    return model


def _check_green(model: DiscreteModel, trials: int = 8, seed: int = 0):
    rng = np.random.default_rng(seed)
    I, B = model.I, model.B
    n = model.domain.n_nodes
    worst = 0.0
    for _ in range(trials):
        u, v = rng.standard_normal((2, n))
        Su, Sv = model.S @ u, model.S @ v
        lhs = Su[I] @ v[I] - u[I] @ Sv[I]
        rhs = u[B] @ Sv[B] - Su[B] @ v[B]
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v)))
    if worst > 1e-12 * model.scale:
        raise ValueError(f"discrete Green identity violated (defect {worst:.3e})")


def with_matrix(model: DiscreteModel, S) -> DiscreteModel:
    """Same domain and potential, different ``S`` (no validation; for fault injection)."""
    return DiscreteModel(model.domain, model.V, sp.csr_matrix(S))


@dataclass(frozen=True, eq=False)
class RealizationPair:
    A_D: np.ndarray
    A_N: np.ndarray
    essinf_V: float


def realizations(model: DiscreteModel, cond_limit: float = 1e12) -> RealizationPair:
    """Dirichlet (``S_II``) and Neumann (Schur complement of ``S_BB``) matrices."""
    S_BB = model.S_BB
    if np.linalg.cond(S_BB) > cond_limit:
        raise NeumannEliminationError("Neumann elimination impossible for this potential")
    A_D = model.S_II
    A_N = A_D - model.S_IB @ np.linalg.solve(S_BB, model.S_BI)
    A_N = 0.5 * (A_N + A_N.T)
    return RealizationPair(A_D, A_N, float(np.min(model.V)))


def trace(model: DiscreteModel, f) -> np.ndarray:
    f = _full_vector(model, f)
    return f[model.B]


def conormal(model: DiscreteModel, f) -> np.ndarray:
    """``Λf = (S f)_B``."""
    f = _full_vector(model, f)
    return (model.S @ f)[model.B]


def neumann_trace(model: DiscreteModel, u_I) -> np.ndarray:
    """Boundary values of the Neumann extension, ``-S_BB^{-1} S_BI u_I``."""
    u_I = np.asarray(u_I)
    if u_I.shape[0] != model.n_interior:
        raise ValueError(f"interior vector of length {u_I.shape[0]}, expected {model.n_interior}")
    return -np.linalg.solve(model.S_BB, model.S_BI @ u_I)


def neumann_extension(model: DiscreteModel, u_I) -> np.ndarray:
    """All-node vector with interior ``u_I`` and vanishing conormal derivative."""
    return to_nodes(model, np.asarray(u_I), neumann_trace(model, u_I))


def zero_extension(model: DiscreteModel, u_I) -> np.ndarray:
    u_I = np.asarray(u_I)
    return to_nodes(model, u_I, np.zeros((model.n_boundary,) + u_I.shape[1:], dtype=u_I.dtype))


def to_nodes(model: DiscreteModel, f_I, f_B) -> np.ndarray:
    f_I, f_B = np.asarray(f_I), np.asarray(f_B)
    out = np.zeros((model.domain.n_nodes,) + f_I.shape[1:], dtype=np.result_type(f_I, f_B))
    out[model.I] = f_I
    out[model.B] = f_B
    return out


def _full_vector(model: DiscreteModel, f) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[0] != model.domain.n_nodes:
        raise ValueError(f"node vector of length {f.shape[0]}, expected {model.domain.n_nodes}")
    return f


def spectrum_of(matrix) -> Spectrum:
    """Full dense eigendecomposition of a symmetric matrix (ascending)."""
    return spectrum_of_matrix(np.asarray(matrix))


def node_potential(domain: GridDomain, fn) -> np.ndarray:
    """Evaluate ``fn(x, y)`` at the physical node positions."""
    xy = domain.positions()
    return np.broadcast_to(np.asarray(fn(xy[:, 0], xy[:, 1]), dtype=float), (domain.n_nodes,)).copy()
