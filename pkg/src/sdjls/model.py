"""Model declaration and validation for state-dependent jump linear systems.

A model couples N linear modes ``xdot = A_i x (+ B_i u)`` with a jump process
over the modes whose transition-rate matrix switches with the region of state
space currently occupied. Regions are nested quadratic-form shells: region
``kappa`` is ``{x : r_{kappa-1} <= x' Q x < r_kappa}`` with ``r_0 = 0`` and
``r_K = inf``. Each shell is closed at its lower threshold and open at its
upper one, so the outermost region contains its boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ModelValidationError, Violation

__all__ = [
    "ModeDynamics",
    "RegionPartition",
    "SdjlsModel",
    "GENERATOR_ROW_SUM_RTOL",
    "validate_model",
    "region_of",
    "load_model",
    "save_model",
    "model_from_dict",
    "model_to_dict",
]

# Generators are usually human-authored decimals; exact row sums of zero are
# too strict.
GENERATOR_ROW_SUM_RTOL = 1e-9


@dataclass(frozen=True)
class ModeDynamics:
    """Dynamics of one mode: drift matrix A and optional input matrix B."""

    A: np.ndarray
    B: np.ndarray | None = None


@dataclass(frozen=True)
class RegionPartition:
    """Nested quadratic-form shells partitioning state space.

    Parameters
    ----------
    thresholds : sequence of float
        Strictly increasing positive levels ``r_1 < ... < r_{K-1}`` of the
        quadratic form. K-1 thresholds define K regions.
    Q : (n, n) array, optional
        Symmetric positive-definite shape matrix; identity when omitted.
    """

    thresholds: tuple[float, ...]
    Q: np.ndarray | None = None

    @property
    def num_regions(self) -> int:
        return len(self.thresholds) + 1

    def quadratic_form(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if self.Q is None:
            return float(x @ x)
        return float(x @ self.Q @ x)

    def region_of(self, x: np.ndarray) -> int:
        """1-based index of the unique region containing ``x``."""
        q = self.quadratic_form(x)
        # lower thresholds are closed, upper ones open
        kappa = 1
        for r in self.thresholds:
            if q >= r:
                kappa += 1
            else:
                break
        return kappa

    def bounds_of(self, kappa: int) -> tuple[float, float]:
        """(lower, upper) quadratic-form bounds of region ``kappa``."""
        if not 1 <= kappa <= self.num_regions:
            raise ValueError(f"region index {kappa} out of range 1..{self.num_regions}")
        lo = 0.0 if kappa == 1 else self.thresholds[kappa - 2]
        hi = np.inf if kappa == self.num_regions else self.thresholds[kappa - 1]
        return lo, hi


def region_of(x: np.ndarray, partition: RegionPartition) -> int:
    """1-based region index of ``x`` under ``partition``. Total on R^n."""
    return partition.region_of(x)


@dataclass(frozen=True)
class SdjlsModel:
    """A validated state-dependent jump linear system.

    Immutable after validation; safe to share across threads. Construct via
    :func:`validate_model`, :func:`model_from_dict` or :func:`load_model`
    rather than directly, so that every invariant is checked.
    """

    state_dim: int
    input_dim: int
    num_modes: int
    mode_dynamics: tuple[ModeDynamics, ...]
    partition: RegionPartition
    rates: tuple[np.ndarray, ...]
    x0: np.ndarray
    mode0: int
    _validated: bool = field(default=False, repr=False, compare=False)

    @property
    def num_regions(self) -> int:
        return self.partition.num_regions

    @property
    def autonomous(self) -> bool:
        return self.input_dim == 0

    def mode_matrices(self) -> list[np.ndarray]:
        return [md.A for md in self.mode_dynamics]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_generator(L: np.ndarray, kappa: int, N: int, out: list[Violation]) -> None:
    if L.shape != (N, N):
        out.append(
            Violation(
                "DimensionMismatch",
                f"rate matrix for region {kappa} has shape {L.shape}, expected {(N, N)}",
                {"field": f"rates[{kappa}]", "expected": (N, N), "got": L.shape},
            )
        )
        return
    scale = max(1.0, float(np.max(np.abs(L)))) if L.size else 1.0
    for i in range(N):
        for j in range(N):
            if i != j and L[i, j] < 0:
                out.append(
                    Violation(
                        "NegativeOffDiagonal",
                        f"rate lambda[{i + 1},{j + 1}] of region {kappa} is "
                        f"{L[i, j]}, must be >= 0",
                        {"region": kappa, "i": i + 1, "j": j + 1, "value": float(L[i, j])},
                    )
                )
        residual = float(L[i].sum())
        if abs(residual) > GENERATOR_ROW_SUM_RTOL * scale:
            out.append(
                Violation(
                    "GeneratorRowSum",
                    f"row {i + 1} of region-{kappa} rate matrix sums to {residual:.3g}, "
                    "must be 0",
                    {"region": kappa, "row": i + 1, "residual": residual},
                )
            )


def _check_partition(partition: RegionPartition, n: int, out: list[Violation]) -> None:
    thr = partition.thresholds
    if any(t <= 0 for t in thr) or any(b <= a for a, b in zip(thr, thr[1:])):
        out.append(
            Violation(
                "ThresholdOrder",
                f"thresholds {list(thr)} must be positive and strictly increasing",
                {"thresholds": list(thr)},
            )
        )
    if partition.Q is not None:
        Q = partition.Q
        if Q.shape != (n, n):
            out.append(
                Violation(
                    "DimensionMismatch",
                    f"partition Q has shape {Q.shape}, expected {(n, n)}",
                    {"field": "partition.Q", "expected": (n, n), "got": Q.shape},
                )
            )
            return
        sym_err = float(np.max(np.abs(Q - Q.T))) if Q.size else 0.0
        if sym_err > 1e-9 * max(1.0, float(np.max(np.abs(Q)))):
            out.append(
                Violation(
                    "QNotPositiveDefinite",
                    "partition Q is not symmetric",
                    {"asymmetry": sym_err},
                )
            )
        elif np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() <= 0:
            out.append(
                Violation(
                    "QNotPositiveDefinite",
                    "partition Q has a nonpositive eigenvalue",
                    {"min_eig": float(np.linalg.eigvalsh(0.5 * (Q + Q.T)).min())},
                )
            )


def validate_model(raw) -> SdjlsModel:
    """Validate a model description and return an immutable SdjlsModel.

    Accepts a dict following the model-file schema (see :func:`model_from_dict`),
    or an existing SdjlsModel, which is re-checked and returned unchanged
    (validation is idempotent).

    Raises
    ------
    ModelValidationError
        Carrying the structured list of all violations found.
    """
    if isinstance(raw, dict):
        return model_from_dict(raw)
    if not isinstance(raw, SdjlsModel):
        raise TypeError(f"cannot validate object of type {type(raw).__name__}")

    model = raw
    violations: list[Violation] = []
    n, m, N = model.state_dim, model.input_dim, model.num_modes

    if len(model.mode_dynamics) != N:
        violations.append(
            Violation(
                "DimensionMismatch",
                f"{len(model.mode_dynamics)} mode dynamics for num_modes={N}",
                {"field": "mode_dynamics", "expected": N, "got": len(model.mode_dynamics)},
            )
        )
    for i, md in enumerate(model.mode_dynamics, start=1):
        if md.A.shape != (n, n):
            violations.append(
                Violation(
                    "DimensionMismatch",
                    f"A_{i} has shape {md.A.shape}, expected {(n, n)}",
                    {"field": f"modes[{i}].A", "expected": (n, n), "got": md.A.shape},
                )
            )
        if m == 0:
            if md.B is not None:
                violations.append(
                    Violation(
                        "DimensionMismatch",
                        f"B_{i} present but input_dim is 0",
                        {"field": f"modes[{i}].B", "expected": None, "got": md.B.shape},
                    )
                )
        elif md.B is None or md.B.shape != (n, m):
            got = None if md.B is None else md.B.shape
            violations.append(
                Violation(
                    "DimensionMismatch",
                    f"B_{i} has shape {got}, expected {(n, m)}",
                    {"field": f"modes[{i}].B", "expected": (n, m), "got": got},
                )
            )

    _check_partition(model.partition, n, violations)
    K = model.partition.num_regions
    if len(model.rates) != K:
        violations.append(
            Violation(
                "DimensionMismatch",
                f"{len(model.rates)} rate matrices for {K} regions",
                {"field": "rates", "expected": K, "got": len(model.rates)},
            )
        )
    for kappa, L in enumerate(model.rates, start=1):
        _check_generator(L, kappa, N, violations)

    if model.x0.shape != (n,):
        violations.append(
            Violation(
                "DimensionMismatch",
                f"x0 has shape {model.x0.shape}, expected {(n,)}",
                {"field": "x0", "expected": (n,), "got": model.x0.shape},
            )
        )
    if not 1 <= model.mode0 <= N:
        violations.append(
            Violation(
                "DimensionMismatch",
                f"mode0={model.mode0} outside 1..{N}",
                {"field": "mode0", "expected": f"1..{N}", "got": model.mode0},
            )
        )

    if violations:
        raise ModelValidationError(violations)
    if model._validated:
        return model
    object.__setattr__(model, "_validated", True)
    return model


def model_from_dict(doc: dict[str, Any]) -> SdjlsModel:
    """Build and validate a model from its JSON-document form.

    Schema: ``state_dim``, ``input_dim``, ``modes`` (list of ``{A, B?}`` as
    nested row-major arrays), ``partition`` (``{Q?, thresholds}``; Q omitted
    means identity), ``rates`` (list of K nested arrays), ``x0``, ``mode0``.
    """
    try:
        n = int(doc["state_dim"])
        m = int(doc["input_dim"])
        modes = [
            ModeDynamics(
                A=_freeze(entry["A"]),
                B=_freeze(entry["B"]) if entry.get("B") is not None else None,
            )
            for entry in doc["modes"]
        ]
        part_doc = doc.get("partition", {})
        partition = RegionPartition(
            thresholds=tuple(float(t) for t in part_doc.get("thresholds", [])),
            Q=_freeze(part_doc["Q"]) if part_doc.get("Q") is not None else None,
        )
        rates = tuple(_freeze(L) for L in doc["rates"])
        x0 = _freeze(doc["x0"])
        mode0 = int(doc["mode0"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelValidationError(
            [Violation("DimensionMismatch", f"malformed model document: {exc}")]
        ) from exc

    model = SdjlsModel(
        state_dim=n,
        input_dim=m,
        num_modes=len(modes),
        mode_dynamics=tuple(modes),
        partition=partition,
        rates=rates,
        x0=x0,
        mode0=mode0,
    )
    return validate_model(model)


def model_to_dict(model: SdjlsModel) -> dict[str, Any]:
    """Inverse of :func:`model_from_dict` (identity Q stays omitted)."""
    doc: dict[str, Any] = {
        "state_dim": model.state_dim,
        "input_dim": model.input_dim,
        "modes": [
            {"A": md.A.tolist(), **({"B": md.B.tolist()} if md.B is not None else {})}
            for md in model.mode_dynamics
        ],
        "partition": {"thresholds": list(model.partition.thresholds)},
        "rates": [L.tolist() for L in model.rates],
        "x0": model.x0.tolist(),
        "mode0": model.mode0,
    }
    if model.partition.Q is not None:
        doc["partition"]["Q"] = model.partition.Q.tolist()
    return doc


def load_model(path: str | Path) -> SdjlsModel:
    """Read and validate a model JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_model(model: SdjlsModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def make_model(
    mode_matrices: Sequence[np.ndarray],
    rates: Sequence[np.ndarray],
    thresholds: Sequence[float],
    x0: np.ndarray,
    mode0: int = 1,
    input_matrices: Sequence[np.ndarray] | None = None,
    Q: np.ndarray | None = None,
) -> SdjlsModel:
    """Convenience constructor from plain arrays; validates before returning."""
    A0 = np.asarray(mode_matrices[0], dtype=float)
    n = A0.shape[0]
    if input_matrices is None:
        m = 0
        modes = [ModeDynamics(A=_freeze(A)) for A in mode_matrices]
    else:
        m = np.asarray(input_matrices[0]).shape[1]
        modes = [
            ModeDynamics(A=_freeze(A), B=_freeze(B))
            for A, B in zip(mode_matrices, input_matrices)
        ]
    model = SdjlsModel(
        state_dim=n,
        input_dim=m,
        num_modes=len(modes),
        mode_dynamics=tuple(modes),
        partition=RegionPartition(
            thresholds=tuple(float(t) for t in thresholds),
            Q=_freeze(Q) if Q is not None else None,
        ),
        rates=tuple(_freeze(L) for L in rates),
        x0=_freeze(x0),
        mode0=mode0,
    )
    return validate_model(model)
