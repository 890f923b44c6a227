"""Named checks of the boundary-map identities, oracles and experiments.

Each check returns a :class:`CheckReport`; failures are data, never
exceptions.  Oracles here (closed-form grid eigenvalues, direct linear
solves for the derivative check, counting functions) do not go through
the relation code they are compared against.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from . import maps
from . import relcore as rc
from .grid import DiscreteModel, assemble, build_rectangle, neumann_trace

DERIV_STEP = 1e-4
DERIV_RTOL = 1e-5
CLUSTER_RTOL = 1e-8


@dataclass(frozen=True)
class CheckReport:
    name: str
    context: dict
    residual: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    @classmethod
    def make(cls, name, context, residual, tolerance, details=None):
        residual = float(abs(residual))
        return cls(name, dict(context), residual, float(tolerance), residual <= tolerance, details or {})

    def to_dict(self) -> dict:
        return asdict(self)


def _fmt_scalar(z):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def _conj(z):
    return np.conj(z) if isinstance(z, complex) else z


# ---------------------------------------------------------------------------
# per-λ cache
# ---------------------------------------------------------------------------


class _Point:
    """Every relation needed at one spectral parameter, computed lazily once."""

    def __init__(self, model: DiscreteModel, lam, tol: float):
        self.model = model
        self.lam = lam
        self.tol = tol

    @cached_property
    def F(self):
        return maps.solution_space(self.model, self.lam, self.tol)

    @cached_property
    def gN(self):
        return maps.gamma_n(self.model, self.lam, self.tol, F=self.F)

    @cached_property
    def gD(self):
        return maps.gamma_d(self.model, self.lam, self.tol, F=self.F)

    @cached_property
    def D(self):
        nI = self.model.n_interior
        f_I, f_B = self.F.basis[:nI], self.F.basis[nI:]
        lam_f = self.model.S_BI @ f_I + self.model.S_BB @ f_B
        return rc.relation_from_pairs(f_B, lam_f, self.F.tol)

    @cached_property
    def N(self):
        return rc.inverse(self.D)

    @cached_property
    def gN_adj(self):
        return rc.adjoint(self.gN)

    @cached_property
    def gD_adj(self):
        return rc.adjoint(self.gD)

    @cached_property
    def res_N(self):
        return maps.resolvent(self.model.realizations.A_N, self.lam, self.tol)

    @cached_property
    def res_D(self):
        return maps.resolvent(self.model.realizations.A_D, self.lam, self.tol)

    @cached_property
    def ker_AD(self):
        return maps.eigenspace(self.model.realizations.A_D, self.lam, self.tol)

    @cached_property
    def ker_AN(self):
        return maps.eigenspace(self.model.realizations.A_N, self.lam, self.tol)

    @cached_property
    def conormal_ker_AD(self):
        """``S_BI ker(A_D - λ)`` as a subspace of the boundary space."""
        return rc.span_columns(self.model.S_BI @ self.ker_AD.basis, self.F.tol, 1.0) if self.ker_AD.dim else rc.zero_subspace(self.model.n_boundary)

    @cached_property
    def trace_ker_AN(self):
        """Neumann-extension traces of ``ker(A_N - λ)``."""
        if not self.ker_AN.dim:
            return rc.zero_subspace(self.model.n_boundary)
        return rc.span_columns(neumann_trace(self.model, self.ker_AN.basis), self.F.tol, 1.0)


class _Cache:
    def __init__(self, model: DiscreteModel, tol: float):
        self.model = model
        self.tol = tol
        self._points: dict = {}

    def __call__(self, lam) -> _Point:
        key = complex(lam)
        if key not in self._points:
            self._points[key] = _Point(self.model, lam, self.tol)
        return self._points[key]


def _shifted_identity(n, resolvent_rel, factor, tol):
    """``I + factor * R`` by the relation sum; exactly ``I`` when ``factor == 0``."""
    eye = rc.identity_relation(n, tol)
    if factor == 0:
        return eye
    return rc.op_sum(eye, rc.scale_shift(resolvent_rel, factor))


def resolvent_factor(matrix: np.ndarray, lam, mu, tol: float) -> rc.LinearRelation:
    """``I + (λ - μ)(A - λ)^{-1}`` as the span of ``((A - λ)x, (A - μ)x)``.

    Equal to the relation sum (including the multivalued part at
    eigenvalues) but built without adding two steep graphs; ``I`` when
    ``λ = μ``.
    """
    n = matrix.shape[0]
    if lam == mu:
        return rc.identity_relation(n, tol)
    eye = np.eye(n)
    # x -> ((A - λ)x, (A - μ)x) is injective for λ ≠ μ
    graph = rc._orth_full_rank(np.vstack([matrix - lam * eye, matrix - mu * eye]), tol)
    return rc.LinearRelation(n, n, graph)


# ---------------------------------------------------------------------------
# individual checks
# ---------------------------------------------------------------------------


def check_green(model: DiscreteModel, tol: float, trials: int = 1000, seed: int = 0) -> CheckReport:
    """Exact discrete second Green identity over random vector pairs."""
    rng = np.random.default_rng(seed)
    n = model.S.shape[0]
    I, B = model.I, model.B
    U = rng.standard_normal((n, trials))
    W = rng.standard_normal((n, trials))
    U /= np.linalg.norm(U, axis=0)
    W /= np.linalg.norm(W, axis=0)
    SU, SW = model.S @ U, model.S @ W
    lhs = np.einsum("ij,ij->j", SU[I], W[I]) - np.einsum("ij,ij->j", U[I], SW[I])
    rhs = np.einsum("ij,ij->j", U[B], SW[B]) - np.einsum("ij,ij->j", SU[B], W[B])
    sampled = float(np.max(np.abs(lhs - rhs)))
    sharp = model.green_defect()
    return CheckReport.make(
        "green.discrete", {"model": model.name}, max(sampled, sharp), tol * model.scale,
        {"sampled": sampled, "antisymmetric_norm": sharp, "trials": trials},
    )


def check_mulker(pt: _Point, ctx, tol) -> CheckReport:
    d = {
        "ker D = mul N": rc.projector_distance(pt.D.ker, pt.N.mul),
        "mul N = trace ker(A_N-λ)": rc.projector_distance(pt.N.mul, pt.trace_ker_AN),
        "ker N = mul D": rc.projector_distance(pt.N.ker, pt.D.mul),
        "mul D = S_BI ker(A_D-λ)": rc.projector_distance(pt.D.mul, pt.conormal_ker_AD),
    }
    return CheckReport.make("mulker", ctx, max(d.values()), tol, d)


def _uc_defects(pt: _Point):
    """Eigenvectors of A_D with zero conormal / of A_N with zero trace."""
    dD = pt.ker_AD.dim - pt.conormal_ker_AD.dim
    dN = pt.ker_AN.dim - pt.trace_ker_AN.dim
    return dD, dN


def check_unique_continuation(pt: _Point, ctx) -> CheckReport:
    """Discrete unique continuation: nonzero solutions have nonzero Cauchy data.

    A failure is a property of the grid (a discrete counterexample), so the
    report is tagged as a finding.  Boundary nodes without interior
    neighbours (rectangle corners) give solutions vanishing inside; their
    number is recorded but does not count against unique continuation.
    """
    dD, dN = _uc_defects(pt)
    m = pt.model
    nI = m.n_interior
    f_I, f_B = pt.F.basis[:nI], pt.F.basis[nI:]
    cauchy = np.vstack([f_B, m.S_BI @ f_I + m.S_BB @ f_B])
    uc = rc._null(cauchy, pt.F.tol).shape[1] if pt.F.dim else 0
    details = {
        "solutions_with_zero_cauchy_data": uc,
        "dirichlet_eigvecs_with_zero_conormal": dD,
        "neumann_eigvecs_with_zero_trace": dN,
        "ker_gamma_D": pt.gD.ker.dim,
        "ker_gamma_N": pt.gN.ker.dim,
        "kind": "finding",
    }
    return CheckReport.make("unique_continuation", ctx, uc + dD + dN, 0.0, details)


def check_mullem(pt: _Point, ctx) -> CheckReport:
    """mul D ≠ 0 iff λ ∈ σ_p(A_D); ker D ≠ 0 iff λ ∈ σ_p(A_N), dimensions included."""
    dD, dN = _uc_defects(pt)
    details = {
        "dim mul D": pt.D.mul.dim, "dim ker(A_D-λ)": pt.ker_AD.dim,
        "dim ker D": pt.D.ker.dim, "dim ker(A_N-λ)": pt.ker_AN.dim,
        "uc_defect_D": dD, "uc_defect_N": dN,
    }
    bad = abs(pt.D.mul.dim - (pt.ker_AD.dim - dD)) + abs(pt.D.ker.dim - (pt.ker_AN.dim - dN))
    bad += int((pt.D.mul.dim == 0) != (pt.ker_AD.dim == 0)) if dD == 0 else 0
    bad += int((pt.D.ker.dim == 0) != (pt.ker_AN.dim == 0)) if dN == 0 else 0
    return CheckReport.make("mullem", ctx, bad, 0.0, details)


def check_domdomprop(pt: _Point, ctx, tol) -> CheckReport:
    d = {
        "dom D = (S_BI ker(A_D-λ))^⊥": rc.projector_distance(pt.D.dom, rc.complement(pt.conormal_ker_AD)),
        "dom N = (trace ker(A_N-λ))^⊥": rc.projector_distance(pt.N.dom, rc.complement(pt.trace_ker_AN)),
        "dom γ_D = dom D": rc.projector_distance(pt.gD.dom, pt.D.dom),
        "dom γ_N = dom N": rc.projector_distance(pt.gN.dom, pt.N.dom),
        "mul γ_D = ker(A_D-λ)": rc.projector_distance(pt.gD.mul, pt.ker_AD),
        "mul γ_N = ker(A_N-λ)": rc.projector_distance(pt.gN.mul, pt.ker_AN),
    }
    return CheckReport.make("domdomprop", ctx, max(d.values()), tol, d)


def check_gammaadj(pt: _Point, ctx, tol) -> CheckReport:
    m, lam = pt.model, pt.lam
    dN = maps.gamma_n_adjoint_direct(m, lam, pt.tol)
    dD = maps.gamma_d_adjoint_direct(m, lam, pt.tol)
    d = {
        "γ_N*": rc.projector_distance(pt.gN_adj.graph, dN.graph),
        "γ_D*": rc.projector_distance(pt.gD_adj.graph, dD.graph),
        "mul γ_N* = trace ker(A_N-conj λ)": rc.projector_distance(dN.mul, pt.trace_ker_AN if np.isreal(lam) else rc.zero_subspace(m.n_boundary)),
    }
    return CheckReport.make("gammaadj", ctx, max(d.values()), tol, d)


def check_greenlem(p: _Point, q: _Point, ctx, tol) -> CheckReport:
    """``(Λf, g_B) - (f_B, Λg) = (conj μ - λ)(f_I, g_I)`` on solution bases."""
    m = p.model
    nI = m.n_interior

    def parts(pt):
        f = pt.F.basis
        return f[:nI], f[nI:], m.S_BI @ f[:nI] + m.S_BB @ f[nI:]

    fI, fB, Lf = parts(p)
    gI, gB, Lg = parts(q)
    # entry (i, j): inner products of f_i against g_j, (x, y) = y^H x
    M = gB.conj().T @ Lf - Lg.conj().T @ fB - (np.conj(q.lam) - p.lam) * (gI.conj().T @ fI)
    res = float(np.max(np.abs(M))) if M.size else 0.0
    return CheckReport.make("greenlem", ctx, res, tol * m.scale, {"basis_pairs": int(M.size)})


class _Pair:
    """Relations shared by the two-parameter checks at (λ, μ)."""

    def __init__(self, p: _Point, q: _Point, qbar: _Point):
        self.p, self.q, self.qbar = p, q, qbar
        self.R = p.model.realizations

    @cached_property
    def mid_N(self):
        return resolvent_factor(self.R.A_N, self.p.lam, self.q.lam, self.p.F.tol)

    @cached_property
    def mid_D(self):
        return resolvent_factor(self.R.A_D, self.p.lam, self.q.lam, self.p.F.tol)

    @cached_property
    def moved_N(self):
        return rc.compose(self.mid_N, self.q.gN)

    @cached_property
    def moved_D(self):
        return rc.compose(self.mid_D, self.q.gD)

    @cached_property
    def diff_N(self):
        return rc.op_difference(self.p.N, self.qbar.N)

    @cached_property
    def diff_D(self):
        return rc.op_difference(self.p.D, self.qbar.D)

    @property
    def conjugate_pair(self) -> bool:
        return complex(self.p.lam) == np.conj(complex(self.q.lam))


def check_resolvent_factor(p: _Point, mu, ctx, tol) -> CheckReport:
    """``I + (λ-μ)(A-λ)^{-1}`` as a relation sum equals the direct pair span."""
    m = p.model
    n = m.n_interior
    R = m.realizations
    d = {}
    for label, A, res in (("N", R.A_N, p.res_N), ("D", R.A_D, p.res_D)):
        direct = resolvent_factor(A, p.lam, mu, p.F.tol)
        summed = _shifted_identity(n, res, p.lam - mu, p.F.tol)
        d[label] = rc.projector_distance(direct.graph, summed.graph)
    return CheckReport.make("resolvent_factor", ctx, max(d.values()), tol, d)


def check_gammalambdamu(pair: _Pair, ctx, tol) -> CheckReport:
    """``γ(λ)`` restricted to ``dom γ(μ)`` equals ``(I + (λ-μ)(A-λ)^{-1}) γ(μ)``."""
    p, q = pair.p, pair.q
    full = rc.full_space(p.model.n_interior)
    d = {
        "N": rc.projector_distance(rc.restrict_to_product(p.gN, q.gN.dom, full).graph, pair.moved_N.graph),
        "D": rc.projector_distance(rc.restrict_to_product(p.gD, q.gD.dom, full).graph, pair.moved_D.graph),
    }
    return CheckReport.make("gammalambdamu", ctx, max(d.values()), tol, d)


def check_dnthm(pair: _Pair, ctx, tol) -> CheckReport | None:
    """``N(λ) - N(conj μ) = (λ - conj μ) γ_N(μ)* γ_N(λ)`` and the D counterpart.

    Not evaluated for ``λ = conj μ``, where both sides degenerate.
    """
    if pair.conjugate_pair:
        return None
    p, q = pair.p, pair.q
    mub = np.conj(q.lam)
    rhsN = rc.scale_shift(rc.compose(q.gN_adj, p.gN), p.lam - mub)
    rhsD = rc.scale_shift(rc.compose(q.gD_adj, p.gD), mub - p.lam)
    d = {
        "N": rc.projector_distance(pair.diff_N.graph, rhsN.graph),
        "D": rc.projector_distance(pair.diff_D.graph, rhsD.graph),
    }
    return CheckReport.make("dnthm", ctx, max(d.values()), tol, d)


def check_dncor(pair: _Pair, ctx, tol) -> CheckReport | None:
    """The same differences written through ``γ(μ)* (I + (λ-μ)(A-λ)^{-1}) γ(μ)``."""
    if pair.conjugate_pair:
        return None
    p, q = pair.p, pair.q
    mub = np.conj(q.lam)
    rhsN = rc.scale_shift(rc.compose(q.gN_adj, pair.moved_N), p.lam - mub)
    rhsD = rc.scale_shift(rc.compose(q.gD_adj, pair.moved_D), mub - p.lam)
    d = {
        "N": rc.projector_distance(pair.diff_N.graph, rhsN.graph),
        "D": rc.projector_distance(pair.diff_D.graph, rhsD.graph),
    }
    return CheckReport.make("dncor", ctx, max(d.values()), tol, d)


def check_resdiffthm(p: _Point, pbar: _Point, ctx, tol) -> CheckReport:
    """Krein-type formula for ``(A_N - λ)^{-1} - (A_D - λ)^{-1}`` as relations."""
    lhs = rc.op_difference(p.res_N, p.res_D)
    via_D = rc.compose(p.gN, rc.compose(p.D, pbar.gN_adj))
    via_N = rc.compose(p.gD, rc.compose(p.N, pbar.gD_adj))
    d = {
        "γ_N D γ_N*": rc.projector_distance(lhs.graph, via_D.graph),
        "γ_D N γ_D*": rc.projector_distance(lhs.graph, via_N.graph),
    }
    return CheckReport.make("resdiffthm", ctx, max(d.values()), tol, d)


def check_dnmapsa(pt: _Point, ctx, tol, zero_rtol: float = rc.KAPPA_REL_TOL) -> CheckReport:
    """Selfadjointness, multiplicities and negative-eigenvalue counts for real λ."""
    R = pt.model.realizations
    nB = pt.model.n_boundary
    saD = rc.is_selfadjoint(pt.D, tol)
    saN = rc.is_selfadjoint(pt.N, tol)
    specD = rc.eigen(pt.D, check=False)
    specN = rc.eigen(pt.N, check=False)
    shifted = np.linalg.eigvalsh(R.A_N) - pt.lam
    z = zero_rtol * max(1.0, float(np.max(np.abs(shifted))))
    k_AN = int(np.count_nonzero(shifted < -z))
    kD = rc.kappa(specD, "-")
    kN = rc.kappa(specN, "-")
    integers = {
        "dim mul N = dim ker(A_N-λ)": specN.mul_dim == pt.ker_AN.dim,
        "dim ker N = dim ker(A_D-λ)": pt.N.ker.dim == pt.ker_AD.dim,
        "κ-(N) <= κ-(A_N-λ)": kN <= k_AN,
        "κ-(D) = κ-(N)": kD == kN,
        "dim graph D = |B|": pt.D.dim == nB,
        "κ-+κ0+κ++mul = |B| (D)": sum(rc.kappa(specD, s) for s in "-0+") + specD.mul_dim == nB,
    }
    details = {
        "selfadjoint D": saD.residual, "selfadjoint N": saN.residual,
        "kappa_minus_D": kD, "kappa_minus_N": kN, "kappa_minus_AN": k_AN,
        "zero_gap_D": specD.zero_gap(),
        **{k: bool(v) for k, v in integers.items()},
    }
    failures = sum(not v for v in integers.values())
    return CheckReport.make("dnmapsa", ctx, max(saD.residual, saN.residual, float(failures)), tol, details)


def _projected_solutions(gamma: rc.LinearRelation, Phi: np.ndarray, ker: rc.Subspace) -> np.ndarray:
    """Columns ``f ⟂ ker`` with ``(phi, f)`` in ``gamma`` for each column ``phi``."""
    C, *_ = np.linalg.lstsq(gamma.g_block, Phi, rcond=None)
    F = gamma.h_block @ C
    return F - ker.project(F) if ker.dim else F


def _pole_gap(eigs: np.ndarray, lam: float) -> float:
    """Distance from λ to the nearest eigenvalue not in λ's own cluster."""
    radius = max(1.0, float(np.max(np.abs(eigs))))
    dist = np.abs(eigs - lam)
    far = dist[dist > CLUSTER_RTOL * radius]
    return float(np.min(far)) if far.size else math.inf


def check_derivative(pt: _Point, ctx, step: float | None = None, rtol: float = DERIV_RTOL) -> CheckReport:
    """d/dλ (N(λ)φ, φ) = ‖f‖² and d/dλ (D(λ)φ, φ) = -‖f‖² by central differences.

    ``φ`` runs over an orthonormal basis of the domain and ``f`` is the
    interior part of the corresponding solution, taken orthogonal to the
    kernel of the realization at λ.  With ``step=None`` the step is
    ``DERIV_STEP`` unless another pole lies closer than ``1000 * DERIV_STEP``,
    in which case it shrinks to ``gap / 1000`` so that the truncation error
    stays below ``rtol``.
    """
    m, lam = pt.model, float(np.real(pt.lam))
    details = {}
    worst = 0.0

    def form(apply, at, Phi):
        vals = apply(m, at, Phi)
        return np.einsum("ij,ij->j", Phi.conj(), vals).real

    for label, dom, gamma, ker, apply, sign in (
        ("N", pt.N.dom, pt.gN, pt.ker_AN, _ntd_apply_many, 1.0),
        ("D", pt.D.dom, pt.gD, pt.ker_AD, _dtn_apply_many, -1.0),
    ):
        Phi = dom.basis
        if Phi.shape[1] == 0:
            continue
        eigs = m.neumann_eigenvalues if label == "N" else m.dirichlet_eigenvalues
        delta = step if step is not None else min(DERIV_STEP, _pole_gap(eigs, lam) / 1000)
        fd = (form(apply, lam + delta, Phi) - form(apply, lam - delta, Phi)) / (2 * delta)
        exact = sign * np.linalg.norm(_projected_solutions(gamma, Phi, ker), axis=0) ** 2
        # relative to the size of the form's derivative on this basis
        rel = np.abs(fd - exact) / max(float(np.max(np.abs(exact))), 1e-300)
        details[label] = float(np.max(rel))
        details[f"step {label}"] = delta
        worst = max(worst, details[label])
    return CheckReport.make("derivative", ctx, worst, rtol, details)


def _ntd_apply_many(model, lam, Psi):
    nI = model.n_interior
    K = np.block([[model.S_II - lam * np.eye(nI), model.S_IB], [model.S_BI, model.S_BB]])
    rhs = np.vstack([np.zeros((nI, Psi.shape[1])), Psi])
    return np.linalg.solve(K, rhs)[nI:]


def _dtn_apply_many(model, lam, Phi):
    nI = model.n_interior
    f_I = np.linalg.solve(model.S_II - lam * np.eye(nI), -model.S_IB @ Phi)
    return model.S_BI @ f_I + model.S_BB @ Phi


def check_bundle(pt: _Point, ctx, tol) -> CheckReport:
    """Graph dimensions of the maps against the solution space, and N = D^{-1}.

    ``N`` is rebuilt from the pairs ``(Λf, f_B)`` and compared with the
    inverse of ``D``.
    """
    m = pt.model
    nI = m.n_interior
    f_I, f_B = pt.F.basis[:nI], pt.F.basis[nI:]
    lam_f = m.S_BI @ f_I + m.S_BB @ f_B
    uc = rc._null(np.vstack([f_B, lam_f]), pt.F.tol).shape[1] if pt.F.dim else 0
    N_pairs = rc.relation_from_pairs(lam_f, f_B, pt.F.tol)
    expected = pt.F.dim - uc
    details = {
        "sol_dim": pt.F.dim,
        "uc_defect": uc,
        "N = D^-1": rc.projector_distance(N_pairs.graph, pt.N.graph),
        "dim D - (sol_dim - uc_defect)": abs(pt.D.dim - expected),
        "dim γ_D - sol_dim": abs(pt.gD.dim - pt.F.dim),
        "dim γ_N - sol_dim": abs(pt.gN.dim - pt.F.dim),
    }
    res = max(details["N = D^-1"], float(details["dim D - (sol_dim - uc_defect)"]),
              float(details["dim γ_D - sol_dim"]), float(details["dim γ_N - sol_dim"]))
    return CheckReport.make("bundle", ctx, res, tol, details)


# ---------------------------------------------------------------------------
# suite
# ---------------------------------------------------------------------------


def spectral_points(eigs: np.ndarray, rtol: float = CLUSTER_RTOL) -> list[float]:
    """One representative (cluster mean) per numerically distinct eigenvalue."""
    eigs = np.sort(np.asarray(eigs, dtype=float))
    if not len(eigs):
        return []
    gap = rtol * max(1.0, float(np.max(np.abs(eigs))))
    clusters = [[eigs[0]]]
    for w in eigs[1:]:
        if w - clusters[-1][-1] <= gap:
            clusters[-1].append(w)
        else:
            clusters.append([w])
    return [float(np.mean(c)) for c in clusters]


def classify(model: DiscreteModel, lam, rtol: float = CLUSTER_RTOL) -> str:
    """Spectral configuration of λ: generic, dirichlet, neumann or both."""
    if not np.isreal(lam):
        return "nonreal"
    lam = float(np.real(lam))
    radius = max(1.0, float(np.max(np.abs(model.neumann_eigenvalues))), float(np.max(np.abs(model.dirichlet_eigenvalues))))
    inD = np.min(np.abs(model.dirichlet_eigenvalues - lam)) <= rtol * radius
    inN = np.min(np.abs(model.neumann_eigenvalues - lam)) <= rtol * radius
    return {(False, False): "generic", (True, False): "dirichlet", (False, True): "neumann"}.get((inD, inN), "both")


def _lam_key(z):
    z = complex(z)
    return (z.real, z.imag)


def run_identity_suite(
    model: DiscreteModel,
    lam_set: Iterable,
    mu_set: Iterable,
    tol: float = 1e-9,
    extend: bool = True,
    derivative: bool = True,
    diagnostics: bool = False,
    workers: int = 1,
    rel_tol: float = rc.DEFAULT_TOL,
    seed: int = 0,
) -> list[CheckReport]:
    """Run every boundary-map identity over ``lam_set`` (and ``mu_set`` pairs).

    Parameters
    ----------
    model : DiscreteModel
    lam_set, mu_set : iterables of real or complex numbers
        Pair identities run over every (λ, μ) combination.  Pairs with
        ``λ = conj μ`` are not evaluated for the two difference formulas.
    tol : float
        Threshold for projector residuals; scalar identities use
        ``tol * model.scale``.
    extend : bool
        Add one point per distinct eigenvalue of ``A_D`` and ``A_N``.
    derivative : bool
        Include the central-difference derivative check at real λ.
    diagnostics : bool
        Also compare the two constructions of ``I + (λ-μ)(A-λ)^{-1}``.
    workers : int
        Thread count for the per-λ work.
    rel_tol : float
        Base rank tolerance of the relations.
    seed : int
        Seed of the random vector pairs in the Green identity check.

    Returns
    -------
    list of CheckReport
        Sorted by check name; the last entry is a ``coverage`` report naming
        the spectral configurations that were exercised.
    """
    lam_set = list(lam_set)
    if not lam_set:
        raise ValueError("lam_set must be nonempty")
    lams = {}
    for z in lam_set:
        lams[_lam_key(z)] = maps._scalar(z)
    if extend:
        for z in spectral_points(model.dirichlet_eigenvalues) + spectral_points(model.neumann_eigenvalues):
            lams.setdefault(_lam_key(z), z)
    lams = [lams[k] for k in sorted(lams)]
    mus = [maps._scalar(z) for z in mu_set]

    cache = _Cache(model, rel_tol)
    reports = [check_green(model, tol, seed=seed)]

    def per_lambda(lam):
        ctx = {"model": model.name, "lam": _fmt_scalar(lam), "config": classify(model, lam)}
        p = cache(lam)
        pbar = cache(np.conj(lam)) if isinstance(lam, complex) else p
        out = [
            check_bundle(p, ctx, tol),
            check_mulker(p, ctx, tol),
            check_mullem(p, ctx),
            check_unique_continuation(p, ctx),
            check_domdomprop(p, ctx, tol),
            check_gammaadj(p, ctx, tol),
            check_resdiffthm(p, pbar, ctx, tol),
        ]
        if diagnostics and mus:
            out.append(check_resolvent_factor(p, mus[0], {**ctx, "mu": _fmt_scalar(mus[0])}, tol))
        if not isinstance(lam, complex):
            out.append(check_dnmapsa(p, ctx, tol))
            if derivative:
                out.append(check_derivative(p, ctx))
        for mu in mus:
            q = cache(mu)
            qbar = cache(np.conj(mu)) if isinstance(mu, complex) else q
            pctx = {**ctx, "mu": _fmt_scalar(mu)}
            pair = _Pair(p, q, qbar)
            out.append(check_greenlem(p, q, pctx, tol))
            out.append(check_gammalambdamu(pair, pctx, tol))
            for r in (check_dnthm(pair, pctx, tol), check_dncor(pair, pctx, tol)):
                if r is not None:
                    out.append(r)
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(per_lambda, lams))
    else:
        chunks = [per_lambda(lam) for lam in lams]
    for chunk in chunks:
        reports.extend(chunk)
    # deterministic merge: by check name, then generation order
    reports.sort(key=lambda r: r.name)

    configs = sorted({classify(model, lam) for lam in lams})
    reports.append(CheckReport.make(
        "coverage", {"model": model.name}, 0.0, 0.0,
        {"configurations": configs, "n_lambda": len(lams), "n_mu": len(mus), "n_reports": len(reports)},
    ))
    return reports


def summarize(reports: Sequence[CheckReport]) -> dict:
    failed = [r for r in reports if not r.passed]
    return {
        "total": len(reports),
        "passed": len(reports) - len(failed),
        "failed": len(failed),
        "max_residual_by_name": {
            name: max(r.residual for r in reports if r.name == name)
            for name in sorted({r.name for r in reports})
        },
    }


def corrupted(model: DiscreteModel, eps: float = 1e-3) -> DiscreteModel:
    """Copy of ``model`` whose S has one interior off-diagonal entry perturbed by ``eps``."""
    from .grid import with_matrix

    S = model.S.toarray()
    i = model.I[0]
    j = model.I[1] if model.n_interior > 1 else model.B[0]
    S[i, j] += eps
    return with_matrix(model, S)


# ---------------------------------------------------------------------------
# oracles and experiments
# ---------------------------------------------------------------------------


def analytic_grid_eigs(nx: int, ny: int, h: float, which: str = "dirichlet") -> np.ndarray:
    """Closed-form 5-point Dirichlet eigenvalues of an nx x ny cell rectangle.

    ``(4/h^2) (sin^2(kπ/(2 nx)) + sin^2(lπ/(2 ny)))`` for k < nx, l < ny;
    on the unit square (h = 1/nx) this is ``(4/h^2)(sin^2(kπh/2) + sin^2(lπh/2))``.
    """
    if which != "dirichlet":
        raise ValueError("only the Dirichlet closed form is available")
    if nx < 2 or ny < 2:
        raise ValueError("rectangle needs at least 2 cells per direction")
    k = np.arange(1, nx)
    l = np.arange(1, ny)
    sx = np.sin(k * np.pi / (2 * nx)) ** 2
    sy = np.sin(l * np.pi / (2 * ny)) ** 2
    return np.sort((4.0 / h**2) * (sx[:, None] + sy[None, :]).ravel())


@dataclass(frozen=True)
class FriedlanderCount:
    lam: float
    kappa_minus_D: int
    kappa_minus_N: int
    count_AN_below: int
    count_AD_below: int
    count_difference: int
    kappa_bound: int
    zero_gap_D: float
    consistent: bool

    def to_dict(self) -> dict:
        return asdict(self)


def friedlander_count(model: DiscreteModel, lam: float, zero_tol: float | None = None) -> FriedlanderCount:
    """κ-(D(λ)), κ-(N(λ)), the counting-function difference and κ-(A_N - λ)."""
    lam = float(lam)
    D = maps.dtn(model, lam, method="auto")
    specD = rc.eigen(D, check=False)
    specN = rc.eigen(rc.inverse(D), check=False)
    kD = rc.kappa(specD, "-", zero_tol)
    kN = rc.kappa(specN, "-", zero_tol)
    en, ed = model.neumann_eigenvalues, model.dirichlet_eigenvalues
    radius = max(1.0, float(np.max(np.abs(en))))
    z = rc.KAPPA_REL_TOL * radius
    n_below = int(np.count_nonzero(en <= lam + z))
    d_below = int(np.count_nonzero(ed <= lam + z))
    bound = int(np.count_nonzero(en - lam < -z))
    return FriedlanderCount(lam, kD, kN, n_below, d_below, n_below - d_below, bound, specD.zero_gap(), kD == kN)


@dataclass(frozen=True)
class TTPropResult:
    reports: list
    injective_fraction: float

    @property
    def failures(self) -> int:
        return sum(not r.passed for r in self.reports)


def ttprop_suite(n_trials: int = 200, max_dim: int = 8, seed: int = 0, tol: float = 1e-10) -> TTPropResult:
    """Random instances of ``T = B* A^{-1} B`` with A selfadjoint, B a matrix."""
    if max_dim > 12:
        raise ValueError("max_dim must not exceed 12")
    rng = np.random.default_rng(seed)
    reports = []
    injective = 0
    for trial in range(n_trials):
        n_h = int(rng.integers(1, max_dim + 1))
        n_g = int(rng.integers(1, max_dim + 1))
        mul_dim = int(rng.integers(0, n_h + 1))
        zeros = int(rng.integers(0, n_h - mul_dim + 1))
        A = rc.random_selfadjoint(n_h, mul_dim, rng, zero_eigs=zeros)
        Bm = rng.standard_normal((n_h, n_g))
        if rng.random() < 0.3 and n_g > 1:
            Bm[:, -1] = Bm[:, 0]
        B = rc.relation_from_matrix(Bm)
        T = rc.compose(rc.adjoint(B), rc.compose(rc.inverse(A), B))
        sa = rc.is_selfadjoint(T, tol)
        # dom T = {φ : Bφ ∈ ran A}, computed from the projector onto (ran A)^⊥ = ker A
        kerA = rc.complement(A.ran)
        dom_expected = rc.Subspace(n_g, rc._null(kerA.basis.conj().T @ Bm, rc.DEFAULT_TOL, scale=max(1.0, np.linalg.norm(Bm, 2))), rc.DEFAULT_TOL) if kerA.dim else rc.full_space(n_g)
        mul_expected = rc.span_columns(Bm.T @ A.ker.basis, rc.DEFAULT_TOL, max(1.0, np.linalg.norm(Bm, 2))) if A.ker.dim else rc.zero_subspace(n_g)
        d = {
            "selfadjoint": sa.residual,
            "dom T": rc.projector_distance(T.dom, dom_expected),
            "mul T": rc.projector_distance(T.mul, mul_expected),
        }
        if A.ker.dim == 0 or np.linalg.matrix_rank(Bm.T @ A.ker.basis) == A.ker.dim:
            injective += 1
        ctx = {"trial": trial, "dim_H": n_h, "dim_G": n_g, "mul_A": mul_dim, "ker_A": A.ker.dim}
        reports.append(CheckReport.make("ttprop", ctx, max(d.values()), tol, d))
    return TTPropResult(reports, injective / n_trials if n_trials else 1.0)


@dataclass(frozen=True)
class ConvergenceTable:
    rows: list
    slope: float
    slope_ok: bool


def _square(n: int):
    return build_rectangle(n, n, 1.0 / n)


def convergence_study(
    domain_family: str | Callable = "square",
    lam_targets: Sequence[float] = (),
    h_list: Sequence[float] = (1 / 8, 1 / 16, 1 / 32),
    k: int = 4,
    slope_range: tuple[float, float] = (1.8, 2.2),
) -> ConvergenceTable:
    """Lowest eigenvalues and κ-(D(λ)) across a decreasing list of spacings.

    The slope is the log-log fit of the smallest Dirichlet eigenvalue's
    error against 2π² (meaningful for the square family only).
    """
    if list(h_list) != sorted(h_list, reverse=True):
        raise ValueError("h_list must be decreasing")
    family = _square if domain_family == "square" else domain_family
    rows = []
    errs = []
    for h in h_list:
        n = int(round(1.0 / h))
        model = assemble(family(n), 0.0)
        ed, en = model.dirichlet_eigenvalues, model.neumann_eigenvalues
        row = {
            "h": 1.0 / n,
            "dirichlet": [float(x) for x in ed[:k]],
            "neumann": [float(x) for x in en[:k]],
            "kappa_minus_D": {repr(float(l)): friedlander_count(model, l).kappa_minus_D for l in lam_targets},
        }
        rows.append(row)
        errs.append(abs(ed[0] - 2 * math.pi**2))
    hs = np.array([r["h"] for r in rows])
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0]) if len(hs) > 1 else float("nan")
    ok = slope_range[0] <= slope <= slope_range[1] if domain_family == "square" else True
    return ConvergenceTable(rows, slope, ok)
