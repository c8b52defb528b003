"""Variational solver for resonant semilinear Robin problems.

Assembles the gamma-form of -Laplace + xi(z)I with a Robin boundary
term, computes its spectrum against the mass matrix, splits the discrete
space along the eigenvalue clusters, reduces the energy onto the
complement of the negative block by inner maximization, and searches the
reduced functional for two nontrivial critical points, verifying each in
weak form.
"""

__version__ = "0.1.0"

from .config import ProblemConfig, parse_config, to_ini
from .energy import EnergyContext, grad_phi, hess_phi_action, phi
from .fem import (CoefficientField, Mesh, SymmetricForm, assemble_boundary,
                  assemble_mass, assemble_potential, assemble_stiffness,
                  build_interval_mesh, build_rectangle_mesh, compose_gamma,
                  compose_h1)
from .pipeline import run_audit, run_spectrum, run_verify, solve_problem
from .reactions import (AuditGrid, LinearReaction, ModelReaction, Reaction,
                        SpectralRefs, SquareReaction, audit_hypotheses,
                        nemytskii_energy, nemytskii_jacobian, nemytskii_load)
from .reduction import (ReductionContext, certify_reduction, coercivity_probe,
                        grad_phi_tilde, phi_tilde, tau)
from .solver import (SearchPlan, SolutionRecord, linking_sign_check,
                     minimize_reduced, second_critical_point, verify_solution)
from .spectrum import (EigenDecomposition, coercivity_shift, first_eigen_report,
                       lemma_gap_constant, rayleigh, solve_pencil)
from .subspaces import SubspaceSplit, split

__all__ = [
    "__version__",
    "AuditGrid", "CoefficientField", "EigenDecomposition", "EnergyContext",
    "LinearReaction", "Mesh", "ModelReaction", "ProblemConfig", "Reaction",
    "ReductionContext", "SearchPlan", "SolutionRecord", "SpectralRefs",
    "SquareReaction", "SubspaceSplit", "SymmetricForm",
    "assemble_boundary", "assemble_mass", "assemble_potential",
    "assemble_stiffness", "audit_hypotheses", "build_interval_mesh",
    "build_rectangle_mesh", "certify_reduction", "coercivity_probe",
    "coercivity_shift", "compose_gamma", "compose_h1", "first_eigen_report",
    "grad_phi", "grad_phi_tilde", "hess_phi_action", "lemma_gap_constant",
    "linking_sign_check", "minimize_reduced", "nemytskii_energy",
    "nemytskii_jacobian", "nemytskii_load", "parse_config", "phi", "phi_tilde",
    "rayleigh", "run_audit", "run_spectrum", "run_verify",
    "second_critical_point", "solve_pencil", "solve_problem", "split", "tau",
    "to_ini", "verify_solution",
]
