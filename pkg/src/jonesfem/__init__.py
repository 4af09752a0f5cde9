"""Finite-element computation of Jones eigenmodes in two dimensions.

A Jones mode is a traction-free elastic eigenmode whose normal trace
vanishes on the boundary. The package meshes the standard domains, builds
conforming Lagrange spaces with the normal-trace constraint, assembles the
elasticity pencils and solves for the smallest eigenpairs.
"""
from .assembly import MaterialParams, assemble_form, assemble_mixed, assemble_penalty, reduce_system
from .eigensolve import EigenPair, cluster_eigenvalues, solve_gevp, solve_jones, solve_saddle
from .fespace import build_constraint_operator, build_space, classify_boundary_nodes, interpolate
from .mesh import (DomainSpec, Mesh, build_mesh, generate_disk, generate_lshape, generate_rectangle,
                   generate_triangle_domain, refine_uniform)
from .oracle import rectangle_mode, rectangle_spectrum, rigid_motion_basis
from .postprocess import (ConvergenceTable, SpectrumReport, classify_mode, convergence_study,
                          div_rot_energies, error_and_rate, match_to_oracle)

__version__ = "0.1.0"

__all__ = [
    "MaterialParams", "assemble_form", "assemble_mixed", "assemble_penalty", "reduce_system",
    "EigenPair", "cluster_eigenvalues", "solve_gevp", "solve_jones", "solve_saddle",
    "build_constraint_operator", "build_space", "classify_boundary_nodes", "interpolate",
    "DomainSpec", "Mesh", "build_mesh", "generate_disk", "generate_lshape", "generate_rectangle",
    "generate_triangle_domain", "refine_uniform",
    "rectangle_mode", "rectangle_spectrum", "rigid_motion_basis",
    "ConvergenceTable", "SpectrumReport", "classify_mode", "convergence_study",
    "div_rot_energies", "error_and_rate", "match_to_oracle",
]
