"""Mode-dependent state-feedback synthesis via block LMIs.

For each region ``kappa`` and mode ``i`` the synthesis condition is the block
matrix inequality

    [ J_i          M_kappa_i ]
    [ M_kappa_i'   -Xdiag_i  ]  < 0,        X_i > 0,

with ``J_i = X_i A_i' + Y_i' B_i' + A_i X_i + B_i Y_i + lambda_ii^kappa X_i``,
``M_kappa_i`` the row of blocks ``sqrt(lambda_ij^kappa) X_i`` over j != i, and
``Xdiag_i = diag(X_1 .. X_{i-1}, X_{i+1} .. X_N)``. Feasible (X, Y) yield
gains ``K_i`` solving ``K_i X_i = Y_i``; the closed loop ``A_i + B_i K_i`` is
then re-certified through the analysis LMIs as an end-to-end check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import (
    AnalysisOutcome,
    StabilityCertificate,
    certify_stability,
    default_margin,
)
from .errors import (
    DimensionMismatchError,
    InvalidProblemError,
    NoInputError,
    SdjlsError,
    SingularXError,
)
from .model import ModeDynamics, SdjlsModel, validate_model
from .numlin import eig_sym
from .sdpcore import (
    DEFAULT_MAX_ITERS,
    AffineLmiConstraint,
    FeasibilityOutcome,
    LinearTerm,
    SdpProblem,
    VariableBlock,
    coeff_map,
    leftright_map,
    place_map,
    scale_map,
    solve_feasibility,
)

__all__ = [
    "ControllerGains",
    "SynthesisOutcome",
    "build_synthesis_lmis",
    "synthesize",
    "gains_from",
    "closed_loop_model",
    "gains_to_report",
]

# X_i counts as numerically singular below this fraction of its norm.
SINGULAR_X_RTOL = 1e-12


@dataclass
class ControllerGains:
    """Feedback gains with their synthesis variables and closed-loop audit.

    ``K[i] @ X[i] == Y[i]`` by construction. ``verified`` is True when the
    closed loop was certified by the analysis LMIs; gains are still returned
    when that certification came back undetermined.
    """

    K: list[np.ndarray]
    X: list[np.ndarray]
    Y: list[np.ndarray]
    closed_loop_certificate: StabilityCertificate | None
    verified: bool


@dataclass
class SynthesisOutcome:
    feasible: bool
    gains: ControllerGains | None
    solver: FeasibilityOutcome
    closed_loop: AnalysisOutcome | None = None

    @property
    def verdict(self) -> str:
        return "feasible" if self.feasible else "undetermined"


def _y_var(i: int, p: int, q: int) -> str:
    return f"Y{i}_{p}{q}"


def build_synthesis_lmis(model: SdjlsModel, eps: float) -> SdpProblem:
    """Assemble the stabilization feasibility problem.

    Variables: ``X1..XN`` (n x n symmetric) and the entries of each ``Y_i``
    (m x n) as scalar blocks. Constraints: ``X_i - eps*I`` PSD per mode plus,
    for every (region, mode) pair, the negated synthesis block matrix minus
    ``eps*I`` PSD. Each block constraint has dimension n*N.
    """
    if eps <= 0:
        raise SdjlsError(f"margin eps must be positive, got {eps}")
    model = validate_model(model)
    if model.input_dim == 0:
        raise NoInputError("synthesis requires a model with control inputs (m >= 1)")
    n, m, N, K = model.state_dim, model.input_dim, model.num_modes, model.num_regions

    variables = [VariableBlock(name=f"X{i}", dim=n) for i in range(1, N + 1)]
    for i in range(1, N + 1):
        for p in range(m):
            for q in range(n):
                variables.append(VariableBlock(name=_y_var(i, p, q), dim=1))

    constraints: list[AffineLmiConstraint] = []
    for i in range(1, N + 1):
        constraints.append(
            AffineLmiConstraint(
                name=f"pd_X{i}",
                dim=n,
                const=-eps * np.eye(n),
                terms=(LinearTerm(var=f"X{i}", map=scale_map(1.0, n)),),
            )
        )

    grid = [n] * N
    big = n * N
    for kappa in range(1, K + 1):
        L = model.rates[kappa - 1]
        for i in range(1, N + 1):
            A = model.mode_dynamics[i - 1].A
            B = model.mode_dynamics[i - 1].B
            others = [j for j in range(1, N + 1) if j != i]
            slot = {j: 1 + pos for pos, j in enumerate(others)}

            # negated J_i contribution of X_i, placed in the (0,0) block
            x_map = place_map(n, grid, 0, 0) @ (
                leftright_map(-A.T) + scale_map(-L[i - 1, i - 1], n)
            )
            # negated sqrt-rate couplings along the first block row
            for j in others:
                rate = L[i - 1, j - 1]
                if rate < 0:
                    raise InvalidProblemError(
                        f"negative rate under square root: lambda[{i},{j}]^{kappa}={rate}"
                    )
                if rate > 0:
                    x_map = x_map + place_map(
                        n, grid, 0, slot[j], coeff=-float(np.sqrt(rate))
                    )
            terms = {f"X{i}": x_map}
            for j in others:
                terms[f"X{j}"] = place_map(n, grid, slot[j], slot[j])
            # negated B_i Y_i + Y_i' B_i', entrywise over Y_i scalars
            for p in range(m):
                for q in range(n):
                    G = np.zeros((big, big))
                    G[:n, q] -= B[:, p]
                    G[q, :n] -= B[:, p]
                    terms[_y_var(i, p, q)] = coeff_map(G)

            constraints.append(
                AffineLmiConstraint(
                    name=f"stab_k{kappa}_i{i}",
                    dim=big,
                    const=-eps * np.eye(big),
                    terms=tuple(
                        LinearTerm(var=v, map=mp) for v, mp in sorted(terms.items())
                    ),
                )
            )

    problem = SdpProblem(
        variables=tuple(variables), constraints=tuple(constraints), epsilon=eps
    )
    problem.validate()
    return problem


def gains_from(X: list[np.ndarray], Y: list[np.ndarray]) -> list[np.ndarray]:
    """Gains ``K_i`` solving ``K_i X_i = Y_i``.

    Uses a linear solve against each (positive definite) X_i rather than an
    explicit inverse; X_i from LMI solvers can sit close to singular.
    """
    if len(X) != len(Y):
        raise DimensionMismatchError(f"{len(X)} X blocks vs {len(Y)} Y blocks")
    K = []
    for idx, (Xi, Yi) in enumerate(zip(X, Y), start=1):
        Xi = np.asarray(Xi, dtype=float)
        Yi = np.atleast_2d(np.asarray(Yi, dtype=float))
        if Xi.shape[0] != Xi.shape[1] or Yi.shape[1] != Xi.shape[0]:
            raise DimensionMismatchError(
                f"X_{idx} shape {Xi.shape} incompatible with Y_{idx} shape {Yi.shape}"
            )
        w, _ = eig_sym(Xi)
        norm = float(np.max(np.abs(w)))
        if w[0] < SINGULAR_X_RTOL * max(norm, 1e-300):
            raise SingularXError(
                f"X_{idx} is numerically singular (min eig {w[0]:.3e}, norm {norm:.3e})"
            )
        K.append(np.linalg.solve(Xi, Yi.T).T)
    return K


def closed_loop_model(model: SdjlsModel, K: list[np.ndarray]) -> SdjlsModel:
    """Autonomous model with each mode replaced by ``A_i + B_i K_i``."""
    model = validate_model(model)
    if model.input_dim == 0:
        raise NoInputError("model has no inputs to close a loop over")
    closed = SdjlsModel(
        state_dim=model.state_dim,
        input_dim=0,
        num_modes=model.num_modes,
        mode_dynamics=tuple(
            ModeDynamics(A=md.A + md.B @ np.atleast_2d(Ki))
            for md, Ki in zip(model.mode_dynamics, K)
        ),
        partition=model.partition,
        rates=model.rates,
        x0=model.x0,
        mode0=model.mode0,
    )
    return validate_model(closed)


def synthesize(
    model: SdjlsModel,
    eps: float | None = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol_check: float = 1e-7,
    seed: int = 0,
) -> SynthesisOutcome:
    """Solve the synthesis LMIs, extract gains, and re-certify the closed loop.

    Returns an undetermined outcome when the solver exhausts its budget. On a
    feasible solve the gains are always returned; ``gains.verified`` records
    whether the closed-loop certification succeeded.
    """
    model = validate_model(model)
    if eps is None:
        eps = default_margin(model)
    problem = build_synthesis_lmis(model, eps)
    outcome = solve_feasibility(problem, max_iters=max_iters, tol_check=tol_check, seed=seed)
    if not outcome.feasible:
        return SynthesisOutcome(feasible=False, gains=None, solver=outcome)

    n, m, N = model.state_dim, model.input_dim, model.num_modes
    X = [outcome.assignment[f"X{i}"] for i in range(1, N + 1)]
    Y = []
    for i in range(1, N + 1):
        Yi = np.zeros((m, n))
        for p in range(m):
            for q in range(n):
                Yi[p, q] = float(outcome.assignment[_y_var(i, p, q)][0, 0])
        Y.append(Yi)
    K = gains_from(X, Y)

    closed = closed_loop_model(model, K)
    cl = certify_stability(closed, eps=None, max_iters=max_iters, tol_check=tol_check, seed=seed)
    gains = ControllerGains(
        K=K,
        X=X,
        Y=Y,
        closed_loop_certificate=cl.certificate,
        verified=cl.feasible,
    )
    return SynthesisOutcome(feasible=True, gains=gains, solver=outcome, closed_loop=cl)


def gains_to_report(gains: ControllerGains) -> dict:
    """JSON-ready document for a gains file."""
    return {
        "K": [Ki.tolist() for Ki in gains.K],
        "X": [Xi.tolist() for Xi in gains.X],
        "Y": [Yi.tolist() for Yi in gains.Y],
        "closed_loop": (
            gains.closed_loop_certificate.to_report()
            if gains.closed_loop_certificate is not None
            else None
        ),
        "verified": gains.verified,
    }
