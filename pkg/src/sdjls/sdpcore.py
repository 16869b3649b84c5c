"""Semidefinite feasibility engine for block-structured LMI systems.

Problems are lists of named symmetric variable blocks plus affine constraints
"constant + sum of linear images of the blocks must be PSD". Strictness
margins are folded into the constants by the callers.

The solver is a lifted alternating-projection scheme: one slack symmetric
block per constraint is kept equal to the assembled affine expression, and
the iteration alternates (a) projection of all slacks onto the PSD cone with
(b) least-squares projection of the stacked variable vector onto the affine
coupling subspace. Verdicts are Feasible (verified by direct eigenvalue
checks) or Undetermined; alternating projections yield no infeasibility
certificate, so "infeasible" is never claimed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import InvalidProblemError, MissingBlockError, NonFiniteError
from .numlin import SymMatrix, eig_sym, lstsq

__all__ = [
    "svec",
    "smat",
    "congruence_map",
    "leftright_map",
    "scale_map",
    "place_map",
    "coeff_map",
    "LinearTerm",
    "AffineLmiConstraint",
    "VariableBlock",
    "SdpProblem",
    "FeasibilityOutcome",
    "AssignmentReport",
    "solve_feasibility",
    "check_assignment",
]

_SQRT2 = np.sqrt(2.0)


def svec_dim(d: int) -> int:
    return d * (d + 1) // 2


def svec(S: np.ndarray) -> np.ndarray:
    """Isometric vectorization of a symmetric matrix.

    Off-diagonal entries are scaled by sqrt(2) so that the Euclidean norm of
    the vector equals the Frobenius norm of the matrix; projections computed
    in svec coordinates are therefore Frobenius projections.
    """
    S = np.asarray(S, dtype=float)
    d = S.shape[0]
    iu, ju = np.triu_indices(d)
    v = S[iu, ju].copy()
    v[iu != ju] *= _SQRT2
    return v


def smat(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    S = np.zeros((d, d))
    iu, ju = np.triu_indices(d)
    off = iu != ju
    vals = np.asarray(v, dtype=float).copy()
    vals[off] /= _SQRT2
    S[iu, ju] = vals
    S[ju, iu] = vals
    return S


def _sym_basis(d: int) -> list[np.ndarray]:
    """Matrices mapped by svec to the standard unit vectors."""
    basis = []
    for i, j in zip(*np.triu_indices(d)):
        E = np.zeros((d, d))
        if i == j:
            E[i, i] = 1.0
        else:
            E[i, j] = E[j, i] = 1.0 / _SQRT2
        basis.append(E)
    return basis


def _compile_map(fn: Callable[[np.ndarray], np.ndarray], d_in: int, d_out: int) -> np.ndarray:
    """Dense svec-coordinate matrix of a linear map sym(d_in) -> sym(d_out)."""
    cols = [svec(fn(E)) for E in _sym_basis(d_in)]
    M = np.column_stack(cols) if cols else np.zeros((svec_dim(d_out), 0))
    if M.shape != (svec_dim(d_out), svec_dim(d_in)):
        raise InvalidProblemError("operator output dimension mismatch")
    return M


def congruence_map(F: np.ndarray) -> np.ndarray:
    """Map for ``P -> F' P F`` (F is d_in x d_out)."""
    F = np.asarray(F, dtype=float)
    return _compile_map(lambda P: F.T @ P @ F, F.shape[0], F.shape[1])


def leftright_map(M: np.ndarray) -> np.ndarray:
    """Map for ``P -> M' P + P M`` (square)."""
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    return _compile_map(lambda P: M.T @ P + P @ M, d, d)


def scale_map(c: float, d: int) -> np.ndarray:
    """Map for ``P -> c * P``."""
    return c * np.eye(svec_dim(d))


def place_map(
    d_var: int, block_dims: Iterable[int], row_block: int, col_block: int, coeff: float = 1.0
) -> np.ndarray:
    """Map placing ``coeff * P`` at a block position of a larger matrix.

    The target is partitioned by ``block_dims``; off-diagonal placements put
    the transpose at the mirrored position so the result stays symmetric.
    """
    dims = list(block_dims)
    offsets = np.concatenate(([0], np.cumsum(dims)))
    D = int(offsets[-1])
    r0, c0 = int(offsets[row_block]), int(offsets[col_block])
    if dims[row_block] != d_var or dims[col_block] != d_var:
        raise InvalidProblemError("placed block size does not match grid slot")

    def fn(P: np.ndarray) -> np.ndarray:
        out = np.zeros((D, D))
        out[r0 : r0 + d_var, c0 : c0 + d_var] += coeff * P
        if row_block != col_block:
            out[c0 : c0 + d_var, r0 : r0 + d_var] += coeff * P.T
        return out

    return _compile_map(fn, d_var, D)


def coeff_map(G: np.ndarray) -> np.ndarray:
    """Map for a scalar (1x1) block: ``s -> s * G`` with G symmetric."""
    G = np.asarray(G, dtype=float)
    return svec(G).reshape(-1, 1)


@dataclass(frozen=True)
class LinearTerm:
    """One variable's contribution to a constraint, as an svec-space matrix."""

    var: str
    map: np.ndarray  # (svec_dim(constraint), svec_dim(variable))


@dataclass(frozen=True)
class VariableBlock:
    name: str
    dim: int


@dataclass(frozen=True)
class AffineLmiConstraint:
    """``const + sum_v map_v(P_v)`` must be positive semidefinite."""

    name: str
    dim: int
    const: np.ndarray
    terms: tuple[LinearTerm, ...]

    def assemble(self, assignment: dict[str, np.ndarray]) -> np.ndarray:
        acc = svec(self.const)
        for term in self.terms:
            if term.var not in assignment:
                raise MissingBlockError(f"assignment missing block '{term.var}'")
            acc = acc + term.map @ svec(np.asarray(assignment[term.var], dtype=float))
        return smat(acc, self.dim)


@dataclass(frozen=True)
class SdpProblem:
    """A block-structured LMI feasibility instance."""

    variables: tuple[VariableBlock, ...]
    constraints: tuple[AffineLmiConstraint, ...]
    epsilon: float

    def validate(self) -> None:
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise InvalidProblemError("duplicate variable block names")
        dims = {v.name: v.dim for v in self.variables}
        for con in self.constraints:
            if con.const.shape != (con.dim, con.dim):
                raise InvalidProblemError(
                    f"constraint '{con.name}' constant has shape {con.const.shape}"
                )
            for term in con.terms:
                if term.var not in dims:
                    raise InvalidProblemError(
                        f"constraint '{con.name}' references undeclared block '{term.var}'"
                    )
                expect = (svec_dim(con.dim), svec_dim(dims[term.var]))
                if term.map.shape != expect:
                    raise InvalidProblemError(
                        f"constraint '{con.name}' term on '{term.var}' has map shape "
                        f"{term.map.shape}, expected {expect}"
                    )

    def canonical_bytes(self) -> bytes:
        """Order-insensitive byte serialization, for exact comparisons."""
        chunks = []
        for v in sorted(self.variables, key=lambda v: v.name):
            chunks.append(f"var {v.name} {v.dim}".encode())
        for con in sorted(self.constraints, key=lambda c: c.name):
            chunks.append(f"con {con.name} {con.dim}".encode())
            chunks.append(np.ascontiguousarray(con.const).tobytes())
            for term in sorted(con.terms, key=lambda t: t.var):
                chunks.append(term.var.encode())
                chunks.append(np.ascontiguousarray(term.map).tobytes())
        return b"\x00".join(chunks)


@dataclass
class FeasibilityOutcome:
    """Result of :func:`solve_feasibility`.

    ``residual`` is the final infeasibility residual: the maximum over
    constraints of the most-negative eigenvalue magnitude, clipped at 0.
    """

    verdict: str  # "feasible" | "undetermined"
    assignment: dict[str, np.ndarray] | None
    iterations: int
    residual: float
    per_constraint: dict[str, float] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.verdict == "feasible"


@dataclass
class AssignmentReport:
    """Per-constraint minimum eigenvalues of an assembled assignment."""

    ok: bool
    tol_check: float
    min_eigs: dict[str, float]

    @property
    def residual(self) -> float:
        worst = min(self.min_eigs.values()) if self.min_eigs else 0.0
        return max(0.0, -worst)


def _svec_expand(d: int) -> np.ndarray:
    """(d*d, svec_dim(d)) matrix with orthonormal columns mapping svec to vec."""
    E = np.zeros((d * d, svec_dim(d)))
    for k, (i, j) in enumerate(zip(*np.triu_indices(d))):
        if i == j:
            E[i * d + j, k] = 1.0
        else:
            E[i * d + j, k] = E[j * d + i, k] = 1.0 / _SQRT2
    return E


class _Stacked:
    """Vectorized form of a problem: s = L p + b over svec coordinates.

    Constraints of equal dimension are grouped so that the per-iteration
    eigensolves and cone projections run as single batched operations.
    """

    def __init__(self, problem: SdpProblem):
        self.var_slices: dict[str, slice] = {}
        off = 0
        for v in problem.variables:
            k = svec_dim(v.dim)
            self.var_slices[v.name] = slice(off, off + k)
            off += k
        self.p_dim = off

        self.con_slices: list[slice] = []
        off = 0
        for con in problem.constraints:
            k = svec_dim(con.dim)
            self.con_slices.append(slice(off, off + k))
            off += k
        self.s_dim = off

        self.L = np.zeros((self.s_dim, self.p_dim))
        self.b = np.zeros(self.s_dim)
        for con, rows in zip(problem.constraints, self.con_slices):
            self.b[rows] = svec(con.const)
            for term in con.terms:
                self.L[rows, self.var_slices[term.var]] += term.map

        self.dims = [con.dim for con in problem.constraints]
        self.groups: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        by_dim: dict[int, list[int]] = {}
        for idx, d in enumerate(self.dims):
            by_dim.setdefault(d, []).append(idx)
        for d, idxs in by_dim.items():
            cols = np.stack(
                [np.arange(self.con_slices[i].start, self.con_slices[i].stop) for i in idxs]
            )
            self.groups.append((np.asarray(idxs), cols, _svec_expand(d)))

    def initial_point(self, problem: SdpProblem) -> np.ndarray:
        p = np.zeros(self.p_dim)
        for v in problem.variables:
            p[self.var_slices[v.name]] = svec(np.eye(v.dim))
        return p

    def extract(self, problem: SdpProblem, p: np.ndarray) -> dict[str, np.ndarray]:
        return {
            v.name: smat(p[self.var_slices[v.name]], v.dim) for v in problem.variables
        }

    def eig_blocks(self, s: np.ndarray):
        """Batched eigendecomposition of all slack blocks.

        Returns (min_eigs per constraint, per-group (indices, cols, E, w, V)).
        """
        min_eigs = np.empty(len(self.dims))
        decomps = []
        for idxs, cols, E in self.groups:
            d = int(np.sqrt(E.shape[0]))
            batch = (s[cols] @ E.T).reshape(len(idxs), d, d)
            w, V = np.linalg.eigh(batch)
            min_eigs[idxs] = w[:, 0]
            decomps.append((idxs, cols, E, w, V))
        return min_eigs, decomps

    def project_psd(self, s: np.ndarray, decomps) -> np.ndarray:
        out = s.copy()
        for _idxs, cols, E, w, V in decomps:
            w_plus = np.clip(w, 0.0, None)
            proj = np.einsum("bij,bj,bkj->bik", V, w_plus, V)
            out[cols] = proj.reshape(proj.shape[0], -1) @ E
        return out


DEFAULT_MAX_ITERS = 200_000


def solve_feasibility(
    problem: SdpProblem,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol_check: float = 1e-7,
    seed: int = 0,
) -> FeasibilityOutcome:
    """Search for an assignment satisfying every PSD constraint.

    Parameters
    ----------
    problem : SdpProblem
        Validated block LMI system (margins already folded in).
    max_iters : int
        Alternating-projection iteration budget.
    tol_check : float
        Feasibility is declared when every assembled constraint matrix has
        minimum eigenvalue >= -tol_check.
    seed : int
        Only used to perturb the iterate once if the default start stalls;
        the solve is deterministic given (problem, options).

    Returns
    -------
    FeasibilityOutcome
        Feasible outcomes carry an assignment that has been re-verified by
        direct eigenvalue checks; otherwise Undetermined with diagnostics.
    """
    if max_iters < 1:
        raise InvalidProblemError("max_iters must be >= 1")
    if tol_check <= 0:
        raise InvalidProblemError("tol_check must be positive")
    problem.validate()
    stacked = _Stacked(problem)

    if not (np.all(np.isfinite(stacked.L)) and np.all(np.isfinite(stacked.b))):
        raise NonFiniteError("problem data contains NaN or Inf")

    # Least-squares projector onto the coupling subspace {(p, s): s = L p + b}:
    # p* minimizes ||p - p_cur||^2 + ||L p + b - s_cur||^2, i.e. a least-squares
    # solve against the stacked system [I; L]. The system is fixed, so its
    # pseudoinverse is computed once up front and split into the parts acting
    # on p and on s.
    M = np.vstack([np.eye(stacked.p_dim), stacked.L])
    pinv_M = lstsq(M, np.eye(stacked.p_dim + stacked.s_dim)).solution
    proj_p = np.ascontiguousarray(pinv_M[:, : stacked.p_dim])
    proj_s = np.ascontiguousarray(pinv_M[:, stacked.p_dim :])

    p = stacked.initial_point(problem)
    s = stacked.L @ p + stacked.b

    names = [con.name for con in problem.constraints]
    best_residual = np.inf
    last_improvement = 0
    perturbed = False
    stall_window = 500

    for it in range(max_iters + 1):
        min_eigs, decomps = stacked.eig_blocks(s)
        residual = max(0.0, -float(min_eigs.min())) if len(min_eigs) else 0.0

        if residual <= tol_check:
            assignment = stacked.extract(problem, p)
            report = check_assignment(problem, assignment, tol_check=tol_check)
            if report.ok:  # trust-but-verify before reporting Feasible
                return FeasibilityOutcome(
                    verdict="feasible",
                    assignment=assignment,
                    iterations=it,
                    residual=report.residual,
                    per_constraint=report.min_eigs,
                )

        if it == max_iters:
            min_eigs_final = dict(zip(names, (float(v) for v in min_eigs)))
            return FeasibilityOutcome(
                verdict="undetermined",
                assignment=None,
                iterations=it,
                residual=residual,
                per_constraint=min_eigs_final,
            )

        if residual < best_residual - 1e-14:
            best_residual = residual
            last_improvement = it
        elif it - last_improvement > stall_window and not perturbed:
            rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
            scale = 0.05 * (1.0 + float(np.max(np.abs(p))))
            p = p + scale * rng.standard_normal(p.size)
            s = stacked.L @ p + stacked.b
            perturbed = True
            last_improvement = it
            continue

        s_proj = stacked.project_psd(s, decomps)
        p = proj_p @ p + proj_s @ (s_proj - stacked.b)
        s = stacked.L @ p + stacked.b

    raise AssertionError("unreachable")


def check_assignment(
    problem: SdpProblem,
    assignment: dict[str, np.ndarray],
    tol_check: float = 1e-7,
) -> AssignmentReport:
    """Direct eigenvalue audit of an assignment against every constraint.

    Passes iff every assembled constraint matrix has minimum eigenvalue
    >= -tol_check. Accepts plain arrays or :class:`SymMatrix` values.
    """
    values = {
        name: (val.full if isinstance(val, SymMatrix) else np.asarray(val, dtype=float))
        for name, val in assignment.items()
    }
    for v in problem.variables:
        if v.name not in values:
            raise MissingBlockError(f"assignment missing block '{v.name}'")
    min_eigs: dict[str, float] = {}
    for con in problem.constraints:
        w, _ = eig_sym(con.assemble(values))
        min_eigs[con.name] = float(w[0])
    ok = all(v >= -tol_check for v in min_eigs.values())
    return AssignmentReport(ok=ok, tol_check=tol_check, min_eigs=min_eigs)
