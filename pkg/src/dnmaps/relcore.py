"""Finite-dimensional linear relations.

A linear relation from G to H is a subspace of G x H, stored as an
orthonormal basis of its graph.  Everything here reduces to SVD-based
rank decisions on such bases, so every object is canonical up to the
choice of basis and comparisons go through orthogonal projectors.

Graph vectors are stacked as ``[g; h]`` (source block first).  Inner
products are ``(x, y) = y^H x``; real inputs stay real.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

DEFAULT_TOL = 1e-10
EQUAL_TOL = 1e-9
KAPPA_REL_TOL = 1e-8


class DimensionMismatch(ValueError):
    pass


class ContractViolation(ValueError):
    """A precondition on a relation (e.g. selfadjointness) does not hold."""


class Verdict(NamedTuple):
    ok: bool
    residual: float


# ---------------------------------------------------------------------------
# subspaces
# ---------------------------------------------------------------------------


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Subspace:
    """Subspace of C^n given by orthonormal columns ``basis`` (n x k)."""

    ambient_dim: int
    basis: np.ndarray
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        b = np.asarray(self.basis)
        if b.ndim != 2 or b.shape[0] != self.ambient_dim:
            raise DimensionMismatch(
                f"basis shape {b.shape} does not match ambient dimension {self.ambient_dim}"
            )
        if b.shape[1] > self.ambient_dim:
            raise DimensionMismatch("more basis vectors than ambient dimension")
        object.__setattr__(self, "basis", _frozen(b))

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.basis)

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.basis @ (self.basis.conj().T @ v)

    def contains(self, v: np.ndarray, tol: float | None = None) -> bool:
        v = np.asarray(v)
        tol = self.tol if tol is None else tol
        return np.linalg.norm(v - self.project(v)) <= tol * max(1.0, np.linalg.norm(v))

    def orthonormality_defect(self) -> float:
        if self.dim == 0:
            return 0.0
        gram = self.basis.conj().T @ self.basis
        return float(np.max(np.abs(gram - np.eye(self.dim))))

    def __repr__(self) -> str:
        return f"Subspace(ambient_dim={self.ambient_dim}, dim={self.dim})"


def _as_columns(vectors, ambient_dim: int) -> np.ndarray:
    if isinstance(vectors, np.ndarray) and vectors.ndim == 2:
        rows = vectors
    else:
        vectors = [np.asarray(v) for v in vectors]
        if not vectors:
            return np.zeros((ambient_dim, 0))
        for v in vectors:
            if v.ndim != 1 or v.shape[0] != ambient_dim:
                raise DimensionMismatch(
                    f"vector of shape {v.shape} in ambient dimension {ambient_dim}"
                )
        rows = np.vstack(vectors)
    if rows.shape[0] and rows.shape[1] != ambient_dim:
        raise DimensionMismatch(f"vectors of length {rows.shape[1]}, expected {ambient_dim}")
    return rows.T


def _span(cols: np.ndarray, tol: float, scale: float | None = None) -> Subspace:
    """Orthonormal basis of the column span; ``scale=None`` means relative to sigma_max."""
    n, m = cols.shape
    if m == 0:
        return Subspace(n, np.zeros((n, 0), dtype=cols.dtype), tol)
    u, s, _ = sla.svd(cols, full_matrices=False, check_finite=False)
    if scale is None:
        scale = s[0] if s.size and s[0] > 0 else 1.0
    r = int(np.count_nonzero(s > tol * scale))
    return Subspace(n, u[:, :r], tol)


def _orth_full_rank(cols: np.ndarray, tol: float) -> Subspace:
    """Orthonormal basis of columns known to be linearly independent (QR)."""
    q, _ = np.linalg.qr(cols)
    return Subspace(cols.shape[0], q, tol)


def _null(a: np.ndarray, tol: float, scale: float | None = 1.0) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of ``a``."""
    p, q = a.shape
    if q == 0:
        return np.zeros((0, 0), dtype=a.dtype)
    if p == 0:
        return np.eye(q, dtype=a.dtype)
    # the full right factor is only needed when a is wide
    _, s, vh = sla.svd(a, full_matrices=p < q, check_finite=False)
    if scale is None:
        scale = s[0] if s.size and s[0] > 0 else 1.0
    r = int(np.count_nonzero(s > tol * scale))
    return vh[r:].conj().T


def span_columns(cols, tol: float = DEFAULT_TOL, scale: float | None = None) -> Subspace:
    """Orthonormal basis of the span of the columns of ``cols``.

    Singular values at or below ``tol * scale`` are dropped; ``scale``
    defaults to the largest singular value.
    """
    return _span(np.atleast_2d(np.asarray(cols)), tol, scale)


def subspace_from_spanning(vectors, ambient_dim: int, tol: float = DEFAULT_TOL) -> Subspace:
    """Orthonormal basis of ``span(vectors)``.

    Singular values at or below ``tol * sigma_max`` are treated as zero.
    ``vectors`` is a sequence of 1-D arrays or a 2-D array with one
    vector per row.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    cols = _as_columns(vectors, ambient_dim)
    return _span(cols, tol)


def zero_subspace(n: int, tol: float = DEFAULT_TOL) -> Subspace:
    return Subspace(n, np.zeros((n, 0)), tol)


def full_space(n: int, tol: float = DEFAULT_TOL) -> Subspace:
    return Subspace(n, np.eye(n), tol)


def complement(U: Subspace) -> Subspace:
    n = U.ambient_dim
    if U.dim == 0:
        return full_space(n, U.tol)
    # the basis is orthonormal, so a complete QR splits off the complement
    q, _ = np.linalg.qr(U.basis, mode="complete")
    return Subspace(n, q[:, U.dim :], U.tol)


def subspace_sum(U: Subspace, W: Subspace) -> Subspace:
    _check_same_ambient(U, W)
    tol = max(U.tol, W.tol)
    return _span(np.hstack([U.basis, W.basis]), tol, scale=1.0)


def intersect(U: Subspace, W: Subspace) -> Subspace:
    """``U ∩ W`` from the null space of ``[U, -W]`` in basis coefficients."""
    _check_same_ambient(U, W)
    tol = max(U.tol, W.tol)
    if U.dim == 0 or W.dim == 0:
        return zero_subspace(U.ambient_dim, tol)
    coeffs = _null(np.hstack([U.basis, -W.basis]), tol)
    return _span(U.basis @ coeffs[: U.dim], tol, scale=1.0)


def projector_distance(U: Subspace, W: Subspace) -> float:
    """Operator-norm distance of the orthogonal projectors (1.0 if dims differ)."""
    _check_same_ambient(U, W)
    if U.dim != W.dim:
        return 1.0
    if U.dim == 0:
        return 0.0
    # for equal dimensions |P_U - P_W| = |(I - P_U) P_W| = |W - U U^H W|
    r = W.basis - U.basis @ (U.basis.conj().T @ W.basis)
    return float(min(1.0, sla.svdvals(r, check_finite=False)[0]))


def _check_same_ambient(U: Subspace, W: Subspace):
    if U.ambient_dim != W.ambient_dim:
        raise DimensionMismatch(f"ambient dimensions {U.ambient_dim} and {W.ambient_dim}")


def _direct_sum(U: Subspace, W: Subspace) -> Subspace:
    n, m = U.ambient_dim, W.ambient_dim
    dtype = np.result_type(U.basis, W.basis)
    b = np.zeros((n + m, U.dim + W.dim), dtype=dtype)
    b[:n, : U.dim] = U.basis
    b[n:, U.dim :] = W.basis
    return Subspace(n + m, b, max(U.tol, W.tol))


# ---------------------------------------------------------------------------
# relations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearRelation:
    """Subspace of G x H read as the graph of a multivalued map G -> H."""

    dim_g: int
    dim_h: int
    graph: Subspace

    def __post_init__(self):
        if self.graph.ambient_dim != self.dim_g + self.dim_h:
            raise DimensionMismatch(
                f"graph ambient {self.graph.ambient_dim} != {self.dim_g} + {self.dim_h}"
            )

    @property
    def tol(self) -> float:
        return self.graph.tol

    @property
    def g_block(self) -> np.ndarray:
        return self.graph.basis[: self.dim_g]

    @property
    def h_block(self) -> np.ndarray:
        return self.graph.basis[self.dim_g :]

    @property
    def dim(self) -> int:
        return self.graph.dim

    @property
    def is_square(self) -> bool:
        return self.dim_g == self.dim_h

    @cached_property
    def dom(self) -> Subspace:
        return _span(self.g_block, self.tol, scale=1.0)

    @cached_property
    def ran(self) -> Subspace:
        return _span(self.h_block, self.tol, scale=1.0)

    @cached_property
    def ker(self) -> Subspace:
        return _span(self.g_block @ _null(self.h_block, self.tol), self.tol, scale=1.0)

    @cached_property
    def mul(self) -> Subspace:
        return _span(self.h_block @ _null(self.g_block, self.tol), self.tol, scale=1.0)

    def __repr__(self) -> str:
        return f"LinearRelation(dim_g={self.dim_g}, dim_h={self.dim_h}, dim={self.dim})"


def relation_from_pairs(
    g_cols: np.ndarray, h_cols: np.ndarray, tol: float = DEFAULT_TOL, scale: float | None = None
) -> LinearRelation:
    """Relation spanned by the pairs ``(g_cols[:, i], h_cols[:, i])``."""
    g_cols = np.asarray(g_cols)
    h_cols = np.asarray(h_cols)
    if g_cols.shape[1] != h_cols.shape[1]:
        raise DimensionMismatch("unequal number of source and target vectors")
    graph = _span(np.vstack([g_cols, h_cols]), tol, scale)
    return LinearRelation(g_cols.shape[0], h_cols.shape[0], graph)


def relation_from_matrix(M, tol: float = DEFAULT_TOL) -> LinearRelation:
    """Graph ``{(g, M g)}`` of a dim_h x dim_g matrix."""
    M = np.atleast_2d(np.asarray(M))
    n = M.shape[1]
    # the graph of a matrix always has full dimension n
    graph = _orth_full_rank(np.vstack([np.eye(n, dtype=M.dtype), M]), tol)
    return LinearRelation(n, M.shape[0], graph)


def component(S: LinearRelation, which: str) -> Subspace:
    """``dom``, ``ran``, ``ker`` or ``mul`` of ``S``."""
    if which not in ("dom", "ran", "ker", "mul"):
        raise ValueError(f"unknown component {which!r}")
    return getattr(S, which)


def inverse(S: LinearRelation) -> LinearRelation:
    b = np.vstack([S.h_block, S.g_block])
    return LinearRelation(S.dim_h, S.dim_g, Subspace(S.graph.ambient_dim, b, S.tol))


def adjoint(S: LinearRelation) -> LinearRelation:
    """``S* = {(h', g') : (h, h') = (g, g') for all (g, h) in S}``.

    Realized as the orthogonal complement in H x G of ``{(h, -g)}``.
    """
    flipped = np.vstack([S.h_block, -S.g_block])
    comp = complement(Subspace(S.graph.ambient_dim, flipped, S.tol))
    return LinearRelation(S.dim_h, S.dim_g, comp)


def _check_shape(S: LinearRelation, T: LinearRelation):
    if (S.dim_g, S.dim_h) != (T.dim_g, T.dim_h):
        raise DimensionMismatch(
            f"relations {S.dim_g}->{S.dim_h} and {T.dim_g}->{T.dim_h} are not comparable"
        )


def op_sum(S: LinearRelation, T: LinearRelation) -> LinearRelation:
    """Operator-like sum ``{(g, h + h') : (g, h) in S, (g, h') in T}``."""
    _check_shape(S, T)
    tol = max(S.tol, T.tol)
    coeffs = _null(np.hstack([S.g_block, -T.g_block]), tol)
    a, b = coeffs[: S.dim], coeffs[S.dim :]
    return relation_from_pairs(S.g_block @ a, S.h_block @ a + T.h_block @ b, tol, scale=1.0)


def compose(S: LinearRelation, R: LinearRelation) -> LinearRelation:
    """Product ``S R = {(k, h) : (k, g) in R, (g, h) in S for some g}``.

    The middle block is matched by the null space of ``[R_g, -S_g]``,
    i.e. the intersection of the two cylinders written in coefficients.
    """
    if S.dim_g != R.dim_h:
        raise DimensionMismatch(f"cannot compose {S.dim_g}->{S.dim_h} after {R.dim_g}->{R.dim_h}")
    tol = max(S.tol, R.tol)
    coeffs = _null(np.hstack([R.h_block, -S.g_block]), tol)
    a, b = coeffs[: R.dim], coeffs[R.dim :]
    return relation_from_pairs(R.g_block @ a, S.h_block @ b, tol, scale=1.0)


def scale_shift(S: LinearRelation, alpha=1.0, lam=0.0) -> LinearRelation:
    """``alpha S - lam = {(g, alpha h - lam g)}``."""
    if lam != 0 and not S.is_square:
        raise DimensionMismatch("shift of a non-square relation")
    G, H = S.g_block, S.h_block
    new_h = alpha * H - lam * G if lam != 0 else alpha * H
    if alpha != 0:
        # (g, h) -> (g, alpha h - lam g) is injective, so the dimension is kept
        return LinearRelation(S.dim_g, S.dim_h, _orth_full_rank(np.vstack([G, new_h]), S.tol))
    scale = max(1.0, abs(lam))
    return relation_from_pairs(G, new_h, S.tol, scale=scale)


def negate(S: LinearRelation) -> LinearRelation:
    return scale_shift(S, -1.0)


def op_difference(S: LinearRelation, T: LinearRelation) -> LinearRelation:
    return op_sum(S, negate(T))


def identity_relation(n: int, tol: float = DEFAULT_TOL) -> LinearRelation:
    return relation_from_matrix(np.eye(n), tol)


def restrict_to_product(S: LinearRelation, U: Subspace, W: Subspace) -> LinearRelation:
    """``graph(S) ∩ (U x W)``.

    Computed in graph coefficients: ``a`` with ``(I - P_U) S_g a = 0`` and
    ``(I - P_W) S_h a = 0``.
    """
    if U.ambient_dim != S.dim_g or W.ambient_dim != S.dim_h:
        raise DimensionMismatch("restriction subspaces do not match the relation")
    tol = max(S.tol, U.tol, W.tol)
    if S.dim == 0:
        return S
    rows = []
    for X, Y in ((S.g_block, U), (S.h_block, W)):
        if Y.dim < Y.ambient_dim:
            rows.append(X - Y.project(X))
    if not rows:
        return S
    coeffs = _null(np.vstack(rows), tol)
    graph = _span(S.graph.basis @ coeffs, tol, scale=1.0)
    return LinearRelation(S.dim_g, S.dim_h, graph)


def relation_equal(S: LinearRelation, T: LinearRelation, tol: float = EQUAL_TOL) -> Verdict:
    _check_shape(S, T)
    d = projector_distance(S.graph, T.graph)
    return Verdict(d <= tol, d)


def symmetry_residual(S: LinearRelation) -> float:
    if not S.is_square:
        raise DimensionMismatch("symmetry of a non-square relation")
    if S.dim == 0:
        return 0.0
    G, H = S.g_block, S.h_block
    # entry (i, j) = (h_j, g_i) - (g_j, h_i)
    m = G.conj().T @ H - H.conj().T @ G
    return float(np.max(np.abs(m)))


def is_symmetric(S: LinearRelation, tol: float = EQUAL_TOL) -> bool:
    return symmetry_residual(S) <= tol


def is_selfadjoint(S: LinearRelation, tol: float = EQUAL_TOL) -> Verdict:
    if not S.is_square:
        raise DimensionMismatch("selfadjointness of a non-square relation")
    return relation_equal(S, adjoint(S), tol)


# ---------------------------------------------------------------------------
# selfadjoint relations: operator part and spectra
# ---------------------------------------------------------------------------


class OperatorPart(NamedTuple):
    carrier: Subspace
    matrix: np.ndarray
    mul: Subspace


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Spectrum of a selfadjoint relation.

    ``eigenvectors`` are ambient vectors (columns) spanning ``carrier``;
    ``mul_dim`` counts the eigenvalue at infinity.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mul_dim: int
    carrier: Subspace

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(np.asarray(self.eigenvalues, dtype=float)))
        object.__setattr__(self, "eigenvectors", _frozen(self.eigenvectors))

    @property
    def graph_dim(self) -> int:
        return len(self.eigenvalues) + self.mul_dim

    def default_zero_tol(self) -> float:
        scale = float(np.max(np.abs(self.eigenvalues))) if len(self.eigenvalues) else 0.0
        return KAPPA_REL_TOL * (scale if scale > 0 else 1.0)

    def zero_gap(self) -> float:
        """Distance from zero to the nearest eigenvalue (inf if none)."""
        if not len(self.eigenvalues):
            return float("inf")
        return float(np.min(np.abs(self.eigenvalues)))


def fix_signs(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Normalize column phases so the first non-negligible entry is real positive."""
    v = np.array(vectors, copy=True)
    for j in range(v.shape[1]):
        col = v[:, j]
        idx = np.flatnonzero(np.abs(col) > tol * max(np.max(np.abs(col)), 1e-300))
        if idx.size:
            c = col[idx[0]]
            v[:, j] = col * (abs(c) / c)
    return v


def operator_part(S: LinearRelation, tol: float = EQUAL_TOL, check: bool = True) -> OperatorPart:
    """Split a selfadjoint relation into its operator part and ``mul``.

    The returned matrix acts in the coordinates of ``carrier.basis``.
    """
    if not S.is_square:
        raise DimensionMismatch("operator part of a non-square relation")
    if check:
        v = is_selfadjoint(S, tol)
        if not v.ok:
            raise ContractViolation(f"relation is not selfadjoint (residual {v.residual:.3e})")
    G, H = S.g_block, S.h_block
    mul = S.mul
    u, s, vh = np.linalg.svd(G, full_matrices=False)
    r = int(np.count_nonzero(s > S.tol))
    carrier = Subspace(S.dim_g, u[:, :r], S.tol)
    if r == 0:
        return OperatorPart(carrier, np.zeros((0, 0)), mul)
    # graph element with source u_i: coefficients v_i / s_i
    h = H @ (vh[:r].conj().T / s[:r])
    mat = carrier.basis.conj().T @ h
    mat = 0.5 * (mat + mat.conj().T)
    return OperatorPart(carrier, mat, mul)


def eigen(S: LinearRelation, tol: float = EQUAL_TOL, check: bool = True) -> Spectrum:
    part = operator_part(S, tol, check)
    if part.carrier.dim == 0:
        return Spectrum(np.zeros(0), np.zeros((S.dim_g, 0)), part.mul.dim, part.carrier)
    w, v = np.linalg.eigh(part.matrix)
    vecs = fix_signs(part.carrier.basis @ v)
    return Spectrum(w, vecs, part.mul.dim, part.carrier)


def kappa(spec: Spectrum, sign: str, zero_tol: float | None = None) -> int:
    """Number of eigenvalues below ``-zero_tol`` (``'-'``), within it (``'0'``) or above (``'+'``)."""
    z = spec.default_zero_tol() if zero_tol is None else zero_tol
    w = spec.eigenvalues
    if sign == "-":
        return int(np.count_nonzero(w < -z))
    if sign == "0":
        return int(np.count_nonzero(np.abs(w) <= z))
    if sign == "+":
        return int(np.count_nonzero(w > z))
    raise ValueError(f"sign must be one of '-', '0', '+', got {sign!r}")


def reassemble(part: OperatorPart) -> LinearRelation:
    """Orthogonal sum of the operator part on ``carrier`` and ``{0} x mul``."""
    C = part.carrier.basis
    n = part.carrier.ambient_dim
    g = np.hstack([C, np.zeros((n, part.mul.dim))])
    h = np.hstack([C @ part.matrix, part.mul.basis])
    return relation_from_pairs(g, h, part.carrier.tol, scale=1.0)


def spectrum_of_matrix(M: np.ndarray, sym_tol: float = 1e-10) -> Spectrum:
    """Dense eigendecomposition of a symmetric (Hermitian) matrix, ascending."""
    M = np.asarray(M)
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    asym = float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0
    if asym > sym_tol * scale:
        raise ContractViolation(f"matrix is not symmetric (defect {asym:.3e})")
    n = M.shape[0]
    w, v = np.linalg.eigh(M)
    return Spectrum(w, fix_signs(v), 0, full_space(n))


def random_orthonormal(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((n, max(k, 1))))
    return q[:, :k]


def random_relation(dim_g: int, dim_h: int, rank: int, rng: np.random.Generator) -> LinearRelation:
    """Random graph subspace of the given rank (generic position)."""
    b = random_orthonormal(dim_g + dim_h, rank, rng)
    return LinearRelation(dim_g, dim_h, Subspace(dim_g + dim_h, b))


def random_selfadjoint(
    n: int, mul_dim: int, rng: np.random.Generator, zero_eigs: int = 0
) -> LinearRelation:
    """Selfadjoint relation: symmetric operator on a random carrier plus ``{0} x mul``."""
    q = random_orthonormal(n, n, rng)
    m = q[:, :mul_dim]
    c = q[:, mul_dim:]
    r = n - mul_dim
    w = rng.uniform(0.5, 2.0, r) * rng.choice([-1.0, 1.0], r)
    w[: min(zero_eigs, r)] = 0.0
    op = c @ np.diag(w) @ c.T
    g = np.hstack([c, np.zeros((n, mul_dim))])
    h = np.hstack([op @ c, m])
    return relation_from_pairs(g, h, DEFAULT_TOL, scale=1.0)
