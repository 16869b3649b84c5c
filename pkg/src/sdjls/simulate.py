"""Exact sample-path simulation and Monte Carlo estimators.

Paths are simulated event by event. Within a segment the state follows the
matrix-exponential flow of the active mode; the segment ends at the earlier
of (a) an exponentially distributed mode jump drawn from the current region's
rates and (b) the first exit of the state from its region, located by a grid
scan of the quadratic form refined with bisection. At a region crossing the
jump clock is resampled under the new region's rates, which is equivalent to
integrating the true piecewise-constant hazard by memorylessness; the
independent thinning sampler in :func:`simulate_path_thinning` exists to
cross-validate exactly that construction.

Two known limitations, both user-tunable: crossings that enter and leave a
region within one ``h_scan`` step are missed, and grazing contacts without a
sign change are not detected (measure zero under the model's randomness).
Trajectories whose norm passes 1e150 are truncated and flagged as divergent,
never silently dropped.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import AbsorbingModeError, OverflowDivergence, SdjlsError
from .model import RegionPartition, SdjlsModel, validate_model
from .numlin import expm_apply

__all__ = [
    "RngStream",
    "Event",
    "Segment",
    "Trajectory",
    "EnergyEstimate",
    "DecayEstimate",
    "first_exit_time",
    "sample_sojourn",
    "next_mode",
    "simulate_path",
    "simulate_path_thinning",
    "estimate_energy",
    "estimate_lyapunov_decay",
    "write_trajectory_csv",
    "write_events_csv",
]

OVERFLOW_CAP = 1e150
DEFAULT_H_SCAN = 1e-3
DEFAULT_TOL_BISECT = 1e-10

_MAX_EVENTS_PER_PATH = 10_000_000  # guard against degenerate boundary chatter


class RngStream:
    """Counter-based random stream: identical (seed, stream) => identical draws.

    Streams with distinct indices are statistically independent, so per-path
    streams can be pre-assigned and consumed in any execution order.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed % 2**64, self.stream % 2**64], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self) -> float:
        """One draw from [0, 1)."""
        return float(self._gen.random())


@dataclass(frozen=True)
class Event:
    """A mode jump or a region crossing (the latter are the stopping times)."""

    time: float
    kind: str  # "mode_jump" | "region_cross"
    src: int
    dst: int
    x: np.ndarray


@dataclass
class Segment:
    """Maximal interval with constant mode and region."""

    t_start: float
    t_end: float
    mode: int
    region: int
    x_start: np.ndarray
    sample_times: np.ndarray
    sample_states: np.ndarray


@dataclass
class Trajectory:
    segments: list[Segment]
    events: list[Event]
    t_final: float
    x_final: np.ndarray
    diverged: bool
    seed: int
    stream: int

    @property
    def state_dim(self) -> int:
        return self.x_final.shape[0]


class _Flow:
    """Evaluator for x -> exp(A t) x, vectorized over t.

    Uses the eigendecomposition when A is reliably diagonalizable and falls
    back to scaling-and-squaring otherwise (e.g. defective A).
    """

    def __init__(self, A: np.ndarray):
        self.A = np.asarray(A, dtype=float)
        self._eig = None
        n = self.A.shape[0]
        try:
            w, V = np.linalg.eig(self.A)
            Vinv = np.linalg.inv(V)
            recon = (V * w) @ Vinv
            scale = 1.0 + float(np.linalg.norm(self.A))
            if (
                np.all(np.isfinite(recon))
                and float(np.linalg.norm(recon - self.A)) <= 1e-10 * scale
                and np.linalg.cond(V) < 1e10
            ):
                self._eig = (w, V, Vinv)
        except np.linalg.LinAlgError:
            pass

    def apply(self, t: float, x: np.ndarray) -> np.ndarray:
        if self._eig is None:
            return expm_apply(self.A, t, x)
        w, V, Vinv = self._eig
        return np.real(V @ (np.exp(w * t) * (Vinv @ x)))

    def orbit(self, ts: np.ndarray, x: np.ndarray) -> np.ndarray:
        """States at each time in ``ts`` (shape (len(ts), n))."""
        ts = np.asarray(ts, dtype=float)
        if self._eig is None:
            return np.stack([self.apply(float(t), x) for t in ts]) if ts.size else (
                np.zeros((0, x.shape[0]))
            )
        w, V, Vinv = self._eig
        c = Vinv @ x
        E = np.exp(np.multiply.outer(ts, w))
        return np.real((E * c) @ V.T)


def sample_sojourn(row: np.ndarray, i: int, rng: RngStream) -> float:
    """Exponential sojourn of mode ``i`` (0-based) under one generator row.

    Inverse-CDF transform of a single uniform draw; rate is the negated
    diagonal entry. A zero rate means an absorbing mode: returns +inf.
    """
    rate = -float(row[i])
    if rate <= 0.0:
        return np.inf
    return -np.log1p(-rng.uniform()) / rate


def next_mode(row: np.ndarray, i: int, rng: RngStream) -> int:
    """Embedded-chain draw of the next mode (1-based) from generator row ``i``.

    P(j) = lambda_ij / (-lambda_ii) over j != i.
    """
    total = -float(row[i])
    if total <= 0.0:
        raise AbsorbingModeError(f"mode {i + 1} has zero exit rate")
    u = rng.uniform() * total
    acc = 0.0
    last_positive = None
    for j in range(len(row)):
        if j == i:
            continue
        rate = float(row[j])
        if rate <= 0.0:
            continue
        acc += rate
        last_positive = j
        if u < acc:
            return j + 1
    # u landed on the accumulated total due to roundoff
    if last_positive is None:
        raise AbsorbingModeError(f"mode {i + 1} has zero exit rate")
    return last_positive + 1


def first_exit_time(
    A: np.ndarray,
    x0: np.ndarray,
    partition: RegionPartition,
    kappa: int,
    t_max: float,
    h_scan: float = DEFAULT_H_SCAN,
    tol_bisect: float = DEFAULT_TOL_BISECT,
    _flow: _Flow | None = None,
) -> float | None:
    """First time in (0, t_max] at which ``exp(A t) x0`` leaves region ``kappa``.

    Scans the quadratic form on the grid ``k * h_scan`` (plus ``t_max``) and
    refines the first boundary crossing by bisection to ``tol_bisect`` time
    units, returning the right end of the final bracket so the returned state
    has genuinely left the region. Returns None when no crossing occurs.

    Raises
    ------
    OverflowDivergence
        If the trajectory norm passes the overflow cap before any exit;
        divergence is never reported as an exit.
    """
    if h_scan <= 0 or tol_bisect <= 0:
        raise SdjlsError("h_scan and tol_bisect must be positive")
    x0 = np.asarray(x0, dtype=float)
    if partition.region_of(x0) != kappa:
        raise SdjlsError(f"x0 lies in region {partition.region_of(x0)}, not {kappa}")
    if not np.isfinite(t_max) and t_max > 0:
        raise SdjlsError("t_max must be finite")
    if t_max <= 0:
        return None
    flow = _flow if _flow is not None else _Flow(A)
    lo, hi = partition.bounds_of(kappa)
    Q = partition.Q

    ts = np.arange(h_scan, t_max, h_scan)
    ts = np.append(ts, t_max)
    X = flow.orbit(ts, x0)
    norm_sq = np.einsum("ti,ti->t", X, X)
    if Q is None:
        qs = norm_sq
    else:
        qs = np.einsum("ti,ij,tj->t", X, Q, X)

    bad = ~np.isfinite(qs) | (norm_sq > OVERFLOW_CAP * OVERFLOW_CAP)
    outside = ((qs < lo) | (qs >= hi)) & ~bad
    i_out = int(np.argmax(outside)) if outside.any() else None
    i_bad = int(np.argmax(bad)) if bad.any() else None

    def q_at(t: float) -> float:
        xt = flow.apply(t, x0)
        return float(xt @ Q @ xt) if Q is not None else float(xt @ xt)

    if i_out is not None and (i_bad is None or i_out < i_bad):
        t_left = 0.0 if i_out == 0 else float(ts[i_out - 1])
        t_right = float(ts[i_out])
        while t_right - t_left > tol_bisect:
            mid = 0.5 * (t_left + t_right)
            if lo <= q_at(mid) < hi:
                t_left = mid
            else:
                t_right = mid
        # the caller re-evaluates the state at the returned time; make sure
        # that evaluation also lands outside (grid and bisection evaluations
        # can differ in the last ulp near the threshold)
        bump = max(tol_bisect, 1e-12 * max(t_right, 1.0))
        while lo <= q_at(t_right) < hi:
            if t_right >= t_max:
                return None
            t_right = min(t_right + bump, t_max)
            bump *= 2.0
        return t_right
    if i_bad is not None:
        raise OverflowDivergence(time=float(ts[i_bad]), norm=float(np.sqrt(norm_sq[i_bad])))
    return None


def _effective_matrices(model: SdjlsModel, gains) -> list[np.ndarray]:
    if gains is None:
        return [md.A for md in model.mode_dynamics]
    K = gains.K if hasattr(gains, "K") else list(gains)
    if model.input_dim == 0:
        raise SdjlsError("gains supplied for an autonomous model")
    if len(K) != model.num_modes:
        raise SdjlsError(f"expected {model.num_modes} gain matrices, got {len(K)}")
    return [
        md.A + md.B @ np.atleast_2d(np.asarray(Ki, dtype=float))
        for md, Ki in zip(model.mode_dynamics, K)
    ]


class _PathState:
    """Bookkeeping for one path: open segment anchor, raw segments, events."""

    def __init__(self, x0: np.ndarray, mode0: int, region0: int):
        self.t = 0.0
        self.x = np.asarray(x0, dtype=float)
        self.mode = mode0
        self.region = region0
        self.seg_t0 = 0.0
        self.seg_x0 = self.x
        self.raw_segments: list[tuple[float, float, int, int, np.ndarray]] = []
        self.events: list[Event] = []
        self.diverged = False
        self.open_segment = True

    def _close_segment(self, t_end: float) -> None:
        self.raw_segments.append(
            (self.seg_t0, t_end, self.mode, self.region, self.seg_x0)
        )

    def advance(self, t_new: float, x_new: np.ndarray) -> None:
        self.t, self.x = t_new, x_new

    def cross(self, t_new: float, x_new: np.ndarray, new_region: int) -> None:
        self._close_segment(t_new)
        self.events.append(
            Event(time=t_new, kind="region_cross", src=self.region, dst=new_region, x=x_new)
        )
        self.t, self.x, self.region = t_new, x_new, new_region
        self.seg_t0, self.seg_x0 = t_new, x_new

    def jump(self, t_new: float, x_new: np.ndarray, new_mode: int) -> None:
        self._close_segment(t_new)
        self.events.append(
            Event(time=t_new, kind="mode_jump", src=self.mode, dst=new_mode, x=x_new)
        )
        self.t, self.x, self.mode = t_new, x_new, new_mode
        self.seg_t0, self.seg_x0 = t_new, x_new

    def finish(self, t_end: float, x_end: np.ndarray) -> None:
        self._close_segment(t_end)
        self.t, self.x = t_end, x_end
        self.open_segment = False

    def diverge(self, t_end: float, x_end: np.ndarray) -> None:
        self.diverged = True
        self.finish(t_end, x_end)


def _walk_to(
    state: _PathState,
    target: float,
    flow: _Flow,
    partition: RegionPartition,
    h_scan: float,
    tol_bisect: float,
) -> bool:
    """Advance through region crossings up to ``target``; True on divergence."""
    guard = 0
    while True:
        window = target - state.t
        if window <= 0:
            return False
        try:
            tau = first_exit_time(
                flow.A, state.x, partition, state.region, window, h_scan, tol_bisect, _flow=flow
            )
        except OverflowDivergence as exc:
            t_div = state.t + exc.info.time
            state.diverge(t_div, flow.apply(exc.info.time, state.x))
            return True
        if tau is None:
            state.advance(target, flow.apply(window, state.x))
            return False
        x_c = flow.apply(tau, state.x)
        state.cross(state.t + tau, x_c, partition.region_of(x_c))
        guard += 1
        if guard > _MAX_EVENTS_PER_PATH:
            raise SdjlsError("region-crossing count exceeded safety cap")


def _run_path(
    model: SdjlsModel,
    flows: list[_Flow],
    t_final: float,
    rng: RngStream,
    h_scan: float,
    tol_bisect: float,
) -> _PathState:
    state = _PathState(model.x0, model.mode0, model.partition.region_of(model.x0))
    part = model.partition
    guard = 0
    while state.t < t_final:
        guard += 1
        if guard > _MAX_EVENTS_PER_PATH:
            raise SdjlsError("event count exceeded safety cap")
        flow = flows[state.mode - 1]
        row = model.rates[state.region - 1][state.mode - 1]
        T = sample_sojourn(row, state.mode - 1, rng)
        remaining = t_final - state.t
        window = min(T, remaining)
        try:
            tau = first_exit_time(
                flow.A, state.x, part, state.region, window, h_scan, tol_bisect, _flow=flow
            )
        except OverflowDivergence as exc:
            state.diverge(state.t + exc.info.time, flow.apply(exc.info.time, state.x))
            break
        if tau is not None:
            x_c = flow.apply(tau, state.x)
            state.cross(state.t + tau, x_c, part.region_of(x_c))
        elif T < remaining:
            x_j = flow.apply(T, state.x)
            j = next_mode(row, state.mode - 1, rng)
            state.jump(state.t + T, x_j, j)
        else:
            state.finish(t_final, flow.apply(remaining, state.x))
            break
    if state.open_segment:  # an event landed exactly on t_final
        state.finish(state.t, state.x)
    return state


def _run_path_thinning(
    model: SdjlsModel,
    flows: list[_Flow],
    t_final: float,
    rng: RngStream,
    h_scan: float,
    tol_bisect: float,
) -> _PathState:
    state = _PathState(model.x0, model.mode0, model.partition.region_of(model.x0))
    part = model.partition
    lam_bar = max(float(-L[i, i]) for L in model.rates for i in range(model.num_modes))
    guard = 0
    while state.t < t_final:
        guard += 1
        if guard > _MAX_EVENTS_PER_PATH:
            raise SdjlsError("proposal count exceeded safety cap")
        if lam_bar > 0:
            t_prop = state.t - np.log1p(-rng.uniform()) / lam_bar
        else:
            t_prop = np.inf
        target = min(t_prop, t_final)
        if _walk_to(state, target, flows[state.mode - 1], part, h_scan, tol_bisect):
            break
        if t_prop >= t_final:
            state.finish(t_final, state.x)
            break
        # accept the proposal with the region-dependent rate ratio
        row = model.rates[state.region - 1][state.mode - 1]
        rate = -float(row[state.mode - 1])
        if rng.uniform() * lam_bar < rate:
            j = next_mode(row, state.mode - 1, rng)
            state.jump(state.t, state.x, j)
    if state.open_segment:
        state.finish(state.t, state.x)
    return state


def _build_trajectory(
    state: _PathState,
    flows: list[_Flow],
    sample_dt: float,
    seed: int,
    stream: int,
) -> Trajectory:
    segments: list[Segment] = []
    n_seg = len(state.raw_segments)
    for idx, (t0, t1, mode, region, x0) in enumerate(state.raw_segments):
        last = idx == n_seg - 1
        if sample_dt > 0:
            k_lo = int(np.ceil(t0 / sample_dt - 1e-9))
            k_hi = int(np.floor(t1 / sample_dt + (1e-9 if last else -1e-9)))
        else:
            k_lo, k_hi = 0, -1
        if k_hi >= k_lo:
            ks = np.arange(k_lo, k_hi + 1)
            ts = ks * sample_dt
            states = flows[mode - 1].orbit(ts - t0, x0)
        else:
            ts = np.zeros(0)
            states = np.zeros((0, x0.shape[0]))
        segments.append(
            Segment(
                t_start=t0,
                t_end=t1,
                mode=mode,
                region=region,
                x_start=x0,
                sample_times=ts,
                sample_states=states,
            )
        )
    return Trajectory(
        segments=segments,
        events=state.events,
        t_final=state.t,
        x_final=state.x,
        diverged=state.diverged,
        seed=seed,
        stream=stream,
    )


def simulate_path(
    model: SdjlsModel,
    gains=None,
    *,
    t_final: float,
    seed: int,
    stream: int = 0,
    sample_dt: float | None = None,
    h_scan: float = DEFAULT_H_SCAN,
    tol_bisect: float = DEFAULT_TOL_BISECT,
) -> Trajectory:
    """Simulate one sample path by the first-exit construction.

    Parameters
    ----------
    model : SdjlsModel
        Validated model.
    gains : optional
        ControllerGains or a list of per-mode gain matrices; when given the
        flow of mode i uses ``A_i + B_i K_i``.
    t_final : float
        Horizon; must be positive.
    seed, stream : int
        Identify the random stream; identical (seed, stream) reproduce the
        trajectory exactly.
    sample_dt : float, optional
        Output sampling step (default ``t_final / 1000``). Pass 0 to skip
        grid sampling and keep only segments and events.
    """
    model = validate_model(model)
    if t_final <= 0:
        raise SdjlsError(f"t_final must be positive, got {t_final}")
    flows = [_Flow(A) for A in _effective_matrices(model, gains)]
    rng = RngStream(seed, stream)
    state = _run_path(model, flows, t_final, rng, h_scan, tol_bisect)
    dt = t_final / 1000.0 if sample_dt is None else float(sample_dt)
    return _build_trajectory(state, flows, dt, seed, stream)


def simulate_path_thinning(
    model: SdjlsModel,
    gains=None,
    *,
    t_final: float,
    seed: int,
    stream: int = 0,
    sample_dt: float | None = None,
    h_scan: float = DEFAULT_H_SCAN,
    tol_bisect: float = DEFAULT_TOL_BISECT,
) -> Trajectory:
    """Simulate one sample path by thinning against a dominating rate.

    Independent oracle for :func:`simulate_path`: proposals arrive at the
    constant rate ``max_{region,mode}(-lambda_ii)`` and are accepted with the
    ratio of the current region's exit rate to that bound, so the jump clock
    is never resampled at region crossings. Distributionally identical to the
    first-exit sampler; draw-for-draw it consumes the stream differently.
    """
    model = validate_model(model)
    if t_final <= 0:
        raise SdjlsError(f"t_final must be positive, got {t_final}")
    flows = [_Flow(A) for A in _effective_matrices(model, gains)]
    rng = RngStream(seed, stream)
    state = _run_path_thinning(model, flows, t_final, rng, h_scan, tol_bisect)
    dt = t_final / 1000.0 if sample_dt is None else float(sample_dt)
    return _build_trajectory(state, flows, dt, seed, stream)


def _kahan_add(total: float, comp: float, value: float) -> tuple[float, float]:
    y = value - comp
    t = total + y
    comp = (t - total) - y
    return t, comp


def _adaptive_simpson(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, rtol: float) -> float:
    """Adaptive Simpson quadrature with level-synchronous vectorized refinement."""
    if b <= a:
        return 0.0
    pts = np.array([a, 0.5 * (a + b), b])
    fa, fm, fb = (float(v) for v in f(pts))
    S = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    tol0 = rtol * max(abs(S), 1e-30)
    min_step = max(1e-14 * (b - a), 1e-300)
    work = [(a, 0.5 * (a + b), b, fa, fm, fb, S, tol0)]
    total, comp = 0.0, 0.0
    while work:
        mids = np.empty(2 * len(work))
        for idx, (wa, wm, wb, *_rest) in enumerate(work):
            mids[2 * idx] = 0.5 * (wa + wm)
            mids[2 * idx + 1] = 0.5 * (wm + wb)
        fmids = f(mids)
        next_work = []
        for idx, (wa, wm, wb, wfa, wfm, wfb, wS, wtol) in enumerate(work):
            flm = float(fmids[2 * idx])
            frm = float(fmids[2 * idx + 1])
            Sl = (wm - wa) * (wfa + 4.0 * flm + wfm) / 6.0
            Sr = (wb - wm) * (wfm + 4.0 * frm + wfb) / 6.0
            diff = Sl + Sr - wS
            if abs(diff) <= 15.0 * wtol or (wm - wa) <= min_step:
                total, comp = _kahan_add(total, comp, Sl + Sr + diff / 15.0)
            else:
                next_work.append((wa, 0.5 * (wa + wm), wm, wfa, flm, wfm, Sl, 0.5 * wtol))
                next_work.append((wm, 0.5 * (wm + wb), wb, wfm, frm, wfb, Sr, 0.5 * wtol))
        work = next_work
    return total


@dataclass
class EnergyEstimate:
    """Monte Carlo estimate of the integral of ||x(t)||^2 over [0, t_final]."""

    mean: float
    std_error: float
    n_paths: int
    divergent: int


def _path_energy(
    model: SdjlsModel,
    flows: list[_Flow],
    t_final: float,
    rng: RngStream,
    rtol: float,
    h_scan: float,
    tol_bisect: float,
) -> tuple[float, bool]:
    state = _run_path(model, flows, t_final, rng, h_scan, tol_bisect)
    if state.diverged:
        return np.nan, True
    total, comp = 0.0, 0.0
    for t0, t1, mode, _region, x0 in state.raw_segments:
        flow = flows[mode - 1]

        def integrand(ts: np.ndarray, _flow=flow, _x0=x0) -> np.ndarray:
            X = _flow.orbit(ts, _x0)
            return np.einsum("ti,ti->t", X, X)

        total, comp = _kahan_add(total, comp, _adaptive_simpson(integrand, 0.0, t1 - t0, rtol))
    return total, False


def estimate_energy(
    model: SdjlsModel,
    gains=None,
    *,
    t_final: float,
    n_paths: int,
    seed: int,
    threads: int = 1,
    rtol: float = 1e-8,
    h_scan: float = DEFAULT_H_SCAN,
    tol_bisect: float = DEFAULT_TOL_BISECT,
) -> EnergyEstimate:
    """Estimate E[int_0^t_final ||x(t)||^2 dt] over independent paths.

    Each path integral is computed segment-wise by adaptive Simpson
    quadrature at relative tolerance ``rtol``. Paths that pass the overflow
    cap are counted in ``divergent`` and excluded from the mean and standard
    error (their truncated integrals would be meaningless); the count itself
    is the divergence signal for unstable systems.

    Per-path streams are pre-assigned from (seed, path index) and reduced in
    path order with compensated summation, so the result is independent of
    execution order and of ``threads``.
    """
    model = validate_model(model)
    if n_paths < 1:
        raise SdjlsError(f"n_paths must be >= 1, got {n_paths}")
    if t_final <= 0:
        raise SdjlsError(f"t_final must be positive, got {t_final}")
    flows = [_Flow(A) for A in _effective_matrices(model, gains)]

    def one(k: int) -> tuple[float, bool]:
        rng = RngStream(seed, stream=k)
        return _path_energy(model, flows, t_final, rng, rtol, h_scan, tol_bisect)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n_paths)))
    else:
        results = [one(k) for k in range(n_paths)]

    values = [v for v, div in results if not div]
    divergent = sum(1 for _v, div in results if div)
    if not values:
        return EnergyEstimate(mean=np.nan, std_error=np.nan, n_paths=n_paths, divergent=divergent)

    total, comp = 0.0, 0.0
    for v in values:
        total, comp = _kahan_add(total, comp, v)
    mean = total / len(values)
    if len(values) > 1:
        # scaled two-pass variance; near-overflow path energies stay finite
        dev = np.asarray(values) - mean
        scale = float(np.max(np.abs(dev)))
        if scale == 0.0:
            std_error = 0.0
        else:
            sq, sqc = 0.0, 0.0
            for d in dev / scale:
                sq, sqc = _kahan_add(sq, sqc, d * d)
            std_error = float(
                scale * np.sqrt(sq / (len(values) - 1) / len(values))
            )
    else:
        std_error = 0.0
    return EnergyEstimate(
        mean=mean, std_error=std_error, n_paths=n_paths, divergent=divergent
    )


@dataclass
class DecayEstimate:
    """Monte Carlo mean of V(x(t)) = x' P_mode x on a time grid."""

    times: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    v0: float
    n_paths: int
    divergent: int


def estimate_lyapunov_decay(
    model: SdjlsModel,
    certificate,
    t_grid: Sequence[float],
    n_paths: int,
    seed: int,
    gains=None,
    h_scan: float = DEFAULT_H_SCAN,
    tol_bisect: float = DEFAULT_TOL_BISECT,
) -> DecayEstimate:
    """Monte Carlo mean of the certified Lyapunov function along paths.

    ``certificate`` may be a StabilityCertificate or a plain list of P
    matrices (one per mode). Used to check the decay bound
    E[V(x(t))] <= V(x(0)) statistically.
    """
    model = validate_model(model)
    P = certificate.P if hasattr(certificate, "P") else [np.asarray(Pi) for Pi in certificate]
    if len(P) != model.num_modes:
        raise SdjlsError(f"expected {model.num_modes} Lyapunov blocks, got {len(P)}")
    times = np.asarray(sorted(float(t) for t in t_grid))
    if times.size == 0 or times[0] < 0:
        raise SdjlsError("t_grid must be nonempty and nonnegative")
    t_max = float(times[-1]) if times[-1] > 0 else 1e-9
    flows = [_Flow(A) for A in _effective_matrices(model, gains)]

    rows = []
    divergent = 0
    for k in range(n_paths):
        rng = RngStream(seed, stream=k)
        state = _run_path(model, flows, t_max, rng, h_scan, tol_bisect)
        if state.diverged and state.t < t_max:
            divergent += 1
            continue
        vals = np.empty(times.size)
        seg_idx = 0
        segs = state.raw_segments
        for out_i, tg in enumerate(times):
            while seg_idx < len(segs) - 1 and tg >= segs[seg_idx][1]:
                seg_idx += 1
            t0, _t1, mode, _region, x0 = segs[seg_idx]
            xg = flows[mode - 1].apply(tg - t0, x0)
            vals[out_i] = float(xg @ P[mode - 1] @ xg)
        rows.append(vals)

    if not rows:
        nanarr = np.full(times.size, np.nan)
        v0 = float(model.x0 @ P[model.mode0 - 1] @ model.x0)
        return DecayEstimate(times, nanarr, nanarr, v0, n_paths, divergent)
    V = np.vstack(rows)
    mean = V.mean(axis=0)
    if V.shape[0] > 1:
        std_error = V.std(axis=0, ddof=1) / np.sqrt(V.shape[0])
    else:
        std_error = np.zeros(times.size)
    v0 = float(model.x0 @ P[model.mode0 - 1] @ model.x0)
    return DecayEstimate(
        times=times,
        mean=mean,
        std_error=std_error,
        v0=v0,
        n_paths=n_paths,
        divergent=divergent,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    """Write ``t,x1,...,xn,mode,region`` rows: one per sample and per event.

    Event rows carry the labels of the segment that starts at the event.
    """
    n = traj.state_dim
    start_labels = {seg.t_start: (seg.mode, seg.region) for seg in traj.segments}
    rows: list[tuple[float, int, np.ndarray, int, int]] = []
    for seg in traj.segments:
        for t, x in zip(seg.sample_times, seg.sample_states):
            rows.append((float(t), 1, x, seg.mode, seg.region))
    for ev in traj.events:
        # every event starts a segment at exactly its own time
        mode, region = start_labels.get(ev.time, (0, 0))
        rows.append((float(ev.time), 0, ev.x, mode, region))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t," + ",".join(f"x{i + 1}" for i in range(n)) + ",mode,region\n")
        for t, _order, x, mode, region in rows:
            coords = ",".join(_fmt(v) for v in x)
            fh.write(f"{_fmt(t)},{coords},{mode},{region}\n")


def write_events_csv(traj: Trajectory, path: str | Path) -> None:
    """Write the event log as ``t,kind,from,to``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,kind,from,to\n")
        for ev in traj.events:
            fh.write(f"{_fmt(ev.time)},{ev.kind},{ev.src},{ev.dst}\n")
