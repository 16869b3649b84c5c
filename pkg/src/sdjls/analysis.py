"""Stochastic-stability certification via coupled Lyapunov LMIs.

A mode-indexed family ``P_1..P_N`` of positive-definite matrices certifies
stochastic stability when, for every region ``kappa`` and mode ``i``, the
coupled Lyapunov expression

    A_i' P_i + P_i A_i + sum_j lambda_ij^kappa P_j

is negative definite. This module builds the corresponding feasibility
problem (strict inequalities encoded by a margin ``eps * I``), solves it, and
audits externally supplied candidate certificates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, SdjlsError
from .model import SdjlsModel, validate_model
from .numlin import eig_sym
from .sdpcore import (
    DEFAULT_MAX_ITERS,
    AffineLmiConstraint,
    FeasibilityOutcome,
    LinearTerm,
    SdpProblem,
    VariableBlock,
    leftright_map,
    scale_map,
    solve_feasibility,
)

__all__ = [
    "StabilityCertificate",
    "CertificateAudit",
    "AnalysisOutcome",
    "default_margin",
    "build_analysis_lmis",
    "certify_stability",
    "check_certificate",
    "lyapunov_residual",
]

# Audit thresholds are strict zeros with a little numerical slack, since
# audited P matrices are often printed to few decimals.
AUDIT_SLACK = 1e-9


def default_margin(model: SdjlsModel) -> float:
    """Default strictness margin: ``1e-6 * (1 + max_i ||A_i||)``."""
    norms = [float(np.linalg.norm(md.A, 2)) for md in model.mode_dynamics]
    return 1e-6 * (1.0 + max(norms))


def lyapunov_residual(
    model: SdjlsModel, P: list[np.ndarray], kappa: int, i: int
) -> np.ndarray:
    """Coupled Lyapunov expression for region ``kappa`` and mode ``i`` (1-based)."""
    A = model.mode_dynamics[i - 1].A
    L = model.rates[kappa - 1]
    R = A.T @ P[i - 1] + P[i - 1] @ A
    for j in range(model.num_modes):
        R = R + L[i - 1, j] * P[j]
    return 0.5 * (R + R.T)


@dataclass
class StabilityCertificate:
    """A feasible Lyapunov family with its full residual spectra.

    ``residual_eigs[(kappa, i)]`` holds the eigenvalues (ascending) of the
    coupled Lyapunov expression; a valid certificate has every maximum
    residual eigenvalue < 0 and ``min_P_eig`` > 0.
    """

    P: list[np.ndarray]
    epsilon: float
    residual_eigs: dict[tuple[int, int], np.ndarray]
    min_P_eig: float

    def to_report(self) -> dict:
        return {
            "verdict": "feasible",
            "epsilon": self.epsilon,
            "P": [Pi.tolist() for Pi in self.P],
            "residual_eigs": {
                f"{kappa},{i}": eigs.tolist()
                for (kappa, i), eigs in sorted(self.residual_eigs.items())
            },
            "min_P_eig": self.min_P_eig,
        }


@dataclass
class CertificateAudit:
    """Pass/fail report for an externally supplied Lyapunov family."""

    ok: bool
    p_min_eigs: list[float]
    residual_eigs: dict[tuple[int, int], np.ndarray]
    residual_max_eigs: dict[tuple[int, int], float]

    @property
    def min_P_eig(self) -> float:
        return min(self.p_min_eigs)

    @property
    def worst_residual_eig(self) -> float:
        return max(self.residual_max_eigs.values())


@dataclass
class AnalysisOutcome:
    """Verdict of :func:`certify_stability` plus solver diagnostics."""

    feasible: bool
    certificate: StabilityCertificate | None
    solver: FeasibilityOutcome

    @property
    def verdict(self) -> str:
        return "feasible" if self.feasible else "undetermined"


def build_analysis_lmis(model: SdjlsModel, eps: float) -> SdpProblem:
    """Assemble the stability feasibility problem for a validated model.

    Variables are ``P1..PN`` (n x n symmetric). Constraints: ``P_i - eps*I``
    PSD for each mode, and for every (region, mode) pair the negated coupled
    Lyapunov expression minus ``eps*I`` PSD. N + K*N constraints in total.
    """
    if eps <= 0:
        raise SdjlsError(f"margin eps must be positive, got {eps}")
    model = validate_model(model)
    n, N, K = model.state_dim, model.num_modes, model.num_regions

    variables = tuple(VariableBlock(name=f"P{i}", dim=n) for i in range(1, N + 1))
    constraints: list[AffineLmiConstraint] = []
    for i in range(1, N + 1):
        constraints.append(
            AffineLmiConstraint(
                name=f"pd_P{i}",
                dim=n,
                const=-eps * np.eye(n),
                terms=(LinearTerm(var=f"P{i}", map=scale_map(1.0, n)),),
            )
        )
    for kappa in range(1, K + 1):
        L = model.rates[kappa - 1]
        for i in range(1, N + 1):
            A = model.mode_dynamics[i - 1].A
            term_maps: dict[str, np.ndarray] = {
                f"P{i}": leftright_map(-A) + scale_map(-L[i - 1, i - 1], n)
            }
            for j in range(1, N + 1):
                if j == i:
                    continue
                term_maps[f"P{j}"] = scale_map(-L[i - 1, j - 1], n)
            constraints.append(
                AffineLmiConstraint(
                    name=f"decay_k{kappa}_i{i}",
                    dim=n,
                    const=-eps * np.eye(n),
                    terms=tuple(
                        LinearTerm(var=v, map=mp) for v, mp in sorted(term_maps.items())
                    ),
                )
            )
    problem = SdpProblem(
        variables=variables, constraints=tuple(constraints), epsilon=eps
    )
    problem.validate()
    return problem


def certify_stability(
    model: SdjlsModel,
    eps: float | None = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol_check: float = 1e-7,
    seed: int = 0,
) -> AnalysisOutcome:
    """Solve the stability LMIs and assemble a certificate when feasible.

    Input matrices B are ignored: stability of the autonomous dynamics is
    analyzed. On a feasible solve, residual spectra are recomputed from the
    returned P by direct symmetric eigensolves.
    """
    model = validate_model(model)
    if eps is None:
        eps = default_margin(model)
    problem = build_analysis_lmis(model, eps)
    outcome = solve_feasibility(problem, max_iters=max_iters, tol_check=tol_check, seed=seed)
    if not outcome.feasible:
        return AnalysisOutcome(feasible=False, certificate=None, solver=outcome)

    P = [outcome.assignment[f"P{i}"] for i in range(1, model.num_modes + 1)]
    residual_eigs = {}
    for kappa in range(1, model.num_regions + 1):
        for i in range(1, model.num_modes + 1):
            w, _ = eig_sym(lyapunov_residual(model, P, kappa, i))
            residual_eigs[(kappa, i)] = w
    min_P_eig = min(float(eig_sym(Pi)[0][0]) for Pi in P)
    cert = StabilityCertificate(
        P=P, epsilon=eps, residual_eigs=residual_eigs, min_P_eig=min_P_eig
    )
    return AnalysisOutcome(feasible=True, certificate=cert, solver=outcome)


def check_certificate(
    model: SdjlsModel, P: list[np.ndarray], eps: float | None = None
) -> CertificateAudit:
    """Audit a candidate Lyapunov family against the coupled inequalities.

    Pass criteria use strict zero thresholds (with ``AUDIT_SLACK`` numerical
    slack): every P_i minimum eigenvalue must exceed +slack and every residual
    maximum eigenvalue must be below -slack. The margin ``eps`` plays no role
    in the audit; it is only echoed through reports.
    """
    model = validate_model(model)
    n, N = model.state_dim, model.num_modes
    if len(P) != N:
        raise DimensionMismatchError(f"expected {N} matrices, got {len(P)}")
    P = [np.asarray(Pi, dtype=float) for Pi in P]
    for i, Pi in enumerate(P, start=1):
        if Pi.shape != (n, n):
            raise DimensionMismatchError(f"P_{i} has shape {Pi.shape}, expected {(n, n)}")

    p_min_eigs = [float(eig_sym(Pi)[0][0]) for Pi in P]
    residual_eigs: dict[tuple[int, int], np.ndarray] = {}
    residual_max: dict[tuple[int, int], float] = {}
    for kappa in range(1, model.num_regions + 1):
        for i in range(1, N + 1):
            w, _ = eig_sym(lyapunov_residual(model, P, kappa, i))
            residual_eigs[(kappa, i)] = w
            residual_max[(kappa, i)] = float(w[-1])
    ok = all(v > AUDIT_SLACK for v in p_min_eigs) and all(
        v < -AUDIT_SLACK for v in residual_max.values()
    )
    return CertificateAudit(
        ok=ok,
        p_min_eigs=p_min_eigs,
        residual_eigs=residual_eigs,
        residual_max_eigs=residual_max,
    )
