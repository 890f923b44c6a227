"""Dirichlet-to-Neumann and Neumann-to-Dirichlet relations of a model.

Everything on the subspace path derives from one basis of the solution
space ``{f : (S f)_I = λ f_I}`` (boundary values free), so that identities
between the maps compare bases that came from the same numbers.

Vectors over ``I ∪ B`` are stacked interior block first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import relcore as rc
from .grid import DiscreteModel, neumann_trace
from .relcore import LinearRelation, Subspace

FAST_PATH_REL_GAP = 1e-6


class EigenvalueProximityError(ValueError):
    def __init__(self, lam, eigenvalue):
        super().__init__(
            f"λ={lam!r} lies within the fast-path tolerance of the eigenvalue {eigenvalue!r}"
        )
        self.lam = lam
        self.eigenvalue = eigenvalue


def _shift_dtype(lam):
    return complex if np.iscomplexobj(lam) and np.imag(lam) != 0 else float


def model_tol(model: DiscreteModel, tol: float | None = None) -> float:
    """Rank threshold for relations built from ``model``.

    Relation bases are orthonormal, but their entries carry rounding of
    order ``eps * |S|``; the base tolerance is therefore scaled by
    ``model.scale``.
    """
    return (rc.DEFAULT_TOL if tol is None else tol) * model.scale


def _scalar(lam):
    lam = complex(lam)
    return lam.real if lam.imag == 0 else lam


# ---------------------------------------------------------------------------
# solution space and subspace-path maps
# ---------------------------------------------------------------------------


def solution_space(model: DiscreteModel, lam, tol: float | None = None) -> Subspace:
    """Orthonormal basis of ``{f : (S f)_I = λ f_I}`` in C^{|I|+|B|}.

    Null space of ``[S_II - λ, S_IB]``, rank decided relative to its
    largest singular value.  The returned subspace carries the model
    tolerance of :func:`model_tol`.
    """
    base = rc.DEFAULT_TOL if tol is None else tol
    lam = _scalar(lam)
    nI = model.n_interior
    block = np.hstack([model.S_II - lam * np.eye(nI), model.S_IB])
    basis = rc._null(block, base, scale=None)
    return Subspace(block.shape[1], basis, model_tol(model, tol))


def _split(model: DiscreteModel, F: Subspace):
    """Interior part, trace and conormal derivative of a solution basis."""
    nI = model.n_interior
    f_I = F.basis[:nI]
    f_B = F.basis[nI:]
    lam_f = model.S_BI @ f_I + model.S_BB @ f_B
    return f_I, f_B, lam_f


def dtn(model: DiscreteModel, lam, method: str = "subspace", tol: float | None = None) -> LinearRelation:
    """Dirichlet-to-Neumann relation ``D(λ) = {(f_B, Λf)}``.

    Parameters
    ----------
    method : {"subspace", "matrix", "auto"}
        ``"subspace"`` builds the graph from the solution space and is exact
        at eigenvalues of ``A_D``.  ``"matrix"`` uses the Schur complement and
        raises :class:`EigenvalueProximityError` near ``σ(A_D)``.  ``"auto"``
        takes the matrix path whenever it is admissible.
    tol : float, optional
        Base rank tolerance; relations carry ``tol * model.scale``.
    """
    if method == "auto":
        method = "matrix" if _far_from(model.dirichlet_eigenvalues, lam) else "subspace"
    if method == "matrix":
        return rc.relation_from_matrix(dtn_matrix(model, lam), model_tol(model, tol))
    if method != "subspace":
        raise ValueError(f"unknown method {method!r}")
    _, f_B, lam_f = _split(model, solution_space(model, lam, tol))
    return rc.relation_from_pairs(f_B, lam_f, model_tol(model, tol))


def ntd(model: DiscreteModel, lam, method: str = "subspace", tol: float | None = None) -> LinearRelation:
    """Neumann-to-Dirichlet relation ``N(λ) = D(λ)^{-1}``."""
    if method == "auto":
        far = _far_from(model.dirichlet_eigenvalues, lam) and _far_from(model.neumann_eigenvalues, lam)
        method = "matrix" if far else "subspace"
    if method == "matrix":
        return rc.relation_from_matrix(np.linalg.inv(dtn_matrix(model, lam)), model_tol(model, tol))
    return rc.inverse(dtn(model, lam, "subspace", tol))


def gamma_d(model: DiscreteModel, lam, tol: float | None = None, F: Subspace | None = None) -> LinearRelation:
    """``γ_D(λ) = {(f_B, f_I)}`` from boundary traces to interior values."""
    F = solution_space(model, lam, tol) if F is None else F
    f_I, f_B, _ = _split(model, F)
    return rc.relation_from_pairs(f_B, f_I, model_tol(model, tol))


def gamma_n(model: DiscreteModel, lam, tol: float | None = None, F: Subspace | None = None) -> LinearRelation:
    """``γ_N(λ) = {(Λf, f_I)}`` from conormal data to interior values."""
    F = solution_space(model, lam, tol) if F is None else F
    f_I, _, lam_f = _split(model, F)
    return rc.relation_from_pairs(lam_f, f_I, model_tol(model, tol))


def gamma_d_adjoint_direct(model: DiscreteModel, lam, tol: float | None = None) -> LinearRelation:
    """``{((A_D - conj λ) g, -S_BI g) : g}``."""
    lam = _scalar(lam)
    nI = model.n_interior
    A = model.realizations.A_D - np.conj(lam) * np.eye(nI)
    return rc.relation_from_pairs(A, -model.S_BI, model_tol(model, tol))


def gamma_n_adjoint_direct(model: DiscreteModel, lam, tol: float | None = None) -> LinearRelation:
    """``{((A_N - conj λ) g, g_B) : g}`` with ``g_B`` the Neumann-extension trace."""
    lam = _scalar(lam)
    nI = model.n_interior
    A = model.realizations.A_N - np.conj(lam) * np.eye(nI)
    return rc.relation_from_pairs(A, neumann_trace(model, np.eye(nI)), model_tol(model, tol))


def _matrix_tol(matrix: np.ndarray, tol: float | None) -> float:
    base = rc.DEFAULT_TOL if tol is None else tol
    return base * max(1.0, float(np.max(np.abs(matrix))) if matrix.size else 1.0)


def resolvent(matrix: np.ndarray, lam, tol: float | None = None) -> LinearRelation:
    """``(A - λ)^{-1}`` as a relation; multivalued when λ is an eigenvalue."""
    rel = rc.relation_from_matrix(matrix, _matrix_tol(matrix, tol))
    return rc.inverse(rc.scale_shift(rel, 1.0, _scalar(lam)))


def eigenspace(matrix: np.ndarray, lam, tol: float | None = None) -> Subspace:
    """``ker(A - λ)`` computed from the matrix alone (relative rank decision)."""
    base = rc.DEFAULT_TOL if tol is None else tol
    lam = _scalar(lam)
    n = matrix.shape[0]
    return Subspace(n, rc._null(matrix - lam * np.eye(n), base, scale=None), _matrix_tol(matrix, tol))


# ---------------------------------------------------------------------------
# matrix fast path
# ---------------------------------------------------------------------------


def _far_from(eigs: np.ndarray, lam) -> bool:
    radius = max(1.0, float(np.max(np.abs(eigs))))
    return float(np.min(np.abs(eigs - lam))) > FAST_PATH_REL_GAP * radius


def dtn_matrix(model: DiscreteModel, lam) -> np.ndarray:
    """Schur complement ``S_BB - S_BI (S_II - λ)^{-1} S_IB``."""
    lam = _scalar(lam)
    eigs = model.dirichlet_eigenvalues
    if not _far_from(eigs, lam):
        raise EigenvalueProximityError(lam, float(eigs[np.argmin(np.abs(eigs - lam))]))
    nI = model.n_interior
    X = np.linalg.solve(model.S_II - lam * np.eye(nI), model.S_IB)
    D = model.S_BB - model.S_BI @ X
    if np.isrealobj(D):
        D = 0.5 * (D + D.T)
    return D


def dtn_apply(model: DiscreteModel, lam, phi) -> np.ndarray:
    """``D(λ) φ`` by a direct interior solve (λ outside σ(A_D))."""
    nI = model.n_interior
    f_I = np.linalg.solve(model.S_II - _scalar(lam) * np.eye(nI), -model.S_IB @ phi)
    return model.S_BI @ f_I + model.S_BB @ phi


def ntd_apply(model: DiscreteModel, lam, psi) -> np.ndarray:
    """``N(λ) ψ`` by solving the full system with Neumann data ψ (λ outside σ(A_N))."""
    nI, nB = model.n_interior, model.n_boundary
    K = np.block([[model.S_II - _scalar(lam) * np.eye(nI), model.S_IB], [model.S_BI, model.S_BB]])
    rhs = np.concatenate([np.zeros(nI, dtype=np.result_type(psi, lam)), psi])
    return np.linalg.solve(K, rhs)[nI:]


# ---------------------------------------------------------------------------
# bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryMapBundle:
    """All boundary maps at one λ, built from a single solution basis.

    ``uc_defect`` is the dimension of ``{f : f_B = 0, Λf = 0}``; a nonzero
    value is a discrete failure of unique continuation and is reported,
    not raised.
    """

    lam: complex | float
    D: LinearRelation
    N: LinearRelation
    gamma_D: LinearRelation
    gamma_N: LinearRelation
    sol_dim: int
    uc_defect: int
    solutions: Subspace
    ker_AD: Subspace
    ker_AN: Subspace
    violations: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations


def bundle(model: DiscreteModel, lam, tol: float | None = None, check_tol: float = 1e-9) -> BoundaryMapBundle:
    """Compute every map at ``lam`` once and check the bundle invariants."""
    lam = _scalar(lam)
    F = solution_space(model, lam, tol)
    rt = model_tol(model, tol)
    f_I, f_B, lam_f = _split(model, F)
    D = rc.relation_from_pairs(f_B, lam_f, rt)
    N = rc.relation_from_pairs(lam_f, f_B, rt)
    gD = rc.relation_from_pairs(f_B, f_I, rt)
    gN = rc.relation_from_pairs(lam_f, f_I, rt)
    R = model.realizations
    ker_AD = eigenspace(R.A_D, lam, tol)
    ker_AN = eigenspace(R.A_N, lam, tol)
    # solutions with vanishing Cauchy data
    cauchy = np.vstack([f_B, lam_f])
    uc_defect = rc._null(cauchy, rt).shape[1]

    violations = {}
    d = rc.projector_distance(N.graph, rc.inverse(D).graph)
    if d > check_tol:
        violations["N = D^-1"] = d
    if D.dim != F.dim - uc_defect or N.dim != D.dim:
        violations["graph dimension"] = float(abs(D.dim - (F.dim - uc_defect)))
    d = max(
        rc.projector_distance(D.ker, N.mul),
        rc.projector_distance(N.ker, D.mul),
    )
    if d > check_tol:
        violations["ker/mul exchange"] = d
    return BoundaryMapBundle(lam, D, N, gD, gN, F.dim, uc_defect, F, ker_AD, ker_AN, violations)
