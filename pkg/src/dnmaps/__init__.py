"""Dirichlet-to-Neumann and Neumann-to-Dirichlet maps as linear relations.

Modules
-------
relcore
    Finite-dimensional subspaces and linear relations (sums, products,
    inverses, adjoints, spectra of selfadjoint relations).
grid
    Lattice domains and the discrete Schrödinger operator with its
    Dirichlet and Neumann realizations.
maps
    Solution spaces, the boundary maps D(λ), N(λ) and the γ-fields.
verify
    Named identity checks, oracles and small experiments.
cli
    Batch front end driven by a RunSpec file.
"""

from .grid import (
    DiscreteModel,
    GridDomain,
    assemble,
    build_chain,
    build_masked,
    build_rectangle,
)
from .maps import bundle, dtn, gamma_d, gamma_n, ntd
from .relcore import LinearRelation, Subspace, adjoint, compose, inverse
from .verify import CheckReport, friedlander_count, run_identity_suite

__all__ = [
    "CheckReport",
    "DiscreteModel",
    "GridDomain",
    "LinearRelation",
    "Subspace",
    "adjoint",
    "assemble",
    "build_chain",
    "build_masked",
    "build_rectangle",
    "bundle",
    "compose",
    "dtn",
    "friedlander_count",
    "gamma_d",
    "gamma_n",
    "inverse",
    "ntd",
    "run_identity_suite",
]

__version__ = "0.1.0"
