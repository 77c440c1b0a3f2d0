"""Euler-Maruyama scheme for state-dependent regime switching with constant noise.

Within a grid cell ``[k d, (k+1) d)`` the continuous part moves with the drift
frozen at ``(Y(k d), L(k d))`` and the additive noise ``sigma dW``; every drive
point falling in the cell updates the regime with the interval table built at
``Y(k d)``.  All paths of a batch are advanced together.

Strong errors are measured against a fine-grid path driven by the same
Brownian increments and the same Poisson drive (common random numbers).
The continuous state is stored as ``x0 + D(t) + sigma W(t)`` where ``D`` is
the accumulated drift, so the noise cancels exactly in pathwise differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .model import AssumptionError, RSDPModel
from .parallel import chunks, run_chunks
from .rng import stream
from .skorokhod import PoissonDrive, SwitchPath, jump_batch, mismatch_batch, sample_drive, stack_drives


class DivergenceError(RuntimeError):
    def __init__(self, time: float, paths: Sequence[int]):
        self.time, self.paths = time, list(paths)
        super().__init__(f"non-finite state at t={time:g} on paths {self.paths[:10]}")


@dataclass(frozen=True)
class TimeGrid:
    delta: float
    T: float

    def __post_init__(self):
        if not 0 < self.delta:
            raise ValueError("step size must be positive")

    @property
    def steps(self) -> int:
        return steps_for(self.T, self.delta)

    def times(self) -> NDArray[np.float64]:
        return np.arange(self.steps + 1) * self.delta

    def floor(self, t):
        return np.floor(np.asarray(t) / self.delta) * self.delta


def steps_for(T: float, delta: float) -> int:
    k = T / delta
    K = int(round(k))
    if not math.isclose(k, K, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"step {delta} does not divide horizon {T}")
    return K


def ratio(delta: float, base: float) -> int:
    m = delta / base
    mi = int(round(m))
    if mi < 1 or not math.isclose(m, mi, rel_tol=0, abs_tol=1e-9):
        raise ValueError(f"step {delta} is not an integer multiple of {base}")
    return mi


@dataclass(frozen=True)
class BrownianPath:
    dt: float
    increments: NDArray[np.float64]

    @property
    def n(self) -> int:
        return self.increments.shape[1]

    def aggregate(self, delta: float) -> NDArray[np.float64]:
        m = ratio(delta, self.dt)
        K, n = self.increments.shape
        return self.increments.reshape(K // m, m, n).sum(axis=1)

    def cumulative(self) -> NDArray[np.float64]:
        W = np.zeros((len(self.increments) + 1, self.n))
        np.cumsum(self.increments, axis=0, out=W[1:])
        return W


def sample_brownian(T: float, dt: float, n: int, seed: int | np.random.Generator = 0, path: int = 0) -> BrownianPath:
    K = steps_for(T, dt)
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, "brownian", path)
    return BrownianPath(dt, rng.standard_normal((K, n)) * math.sqrt(dt))


@dataclass
class SamplePath:
    times: NDArray[np.float64]
    X: NDArray[np.float64]
    switch: SwitchPath
    delta: float
    meta: dict = field(default_factory=dict)


@dataclass
class EMBatch:
    """Batch output: drift accumulation ``D`` on the grid, per-cell drift ``B``,
    regimes after each drive point, and the observed states."""

    D: NDArray[np.float64] | None
    B: NDArray[np.float64] | None
    event_regimes: NDArray[np.int64]
    X_obs: NDArray[np.float64]
    final_regime: NDArray[np.int64]
    obs_regime: NDArray[np.int64]


def em_batch(model: RSDPModel, delta: float, dt_min: float, SW: NDArray, drive_times: NDArray,
             drive_marks: NDArray, x0: ArrayLike, i0: ArrayLike, *, obs_steps: Sequence[int] | None = None,
             keep_drift: bool = True, frozen: bool = False) -> EMBatch:
    """Advance a batch of EM paths.

    ``SW`` holds ``sigma W`` on the finest grid (shape ``(P, K+1, n)``); the
    step ``delta`` must be an integer multiple of ``dt_min``.  With
    ``frozen=True`` the regime never switches.
    """
    P, Kf1, n = SW.shape
    m = ratio(delta, dt_min)
    Kc = (Kf1 - 1) // m
    x0 = np.broadcast_to(np.asarray(x0, dtype=np.float64), (P, n))
    reg = np.broadcast_to(np.asarray(i0, dtype=np.int64), (P,)).copy()
    rows = np.arange(P)
    finite = np.isfinite(drive_times)
    cell = np.full(drive_times.shape, np.iinfo(np.int64).max, dtype=np.int64)
    cell[finite] = np.floor(drive_times[finite] / delta).astype(np.int64)
    ev_reg = np.zeros(drive_times.shape, dtype=np.int64)
    ptr = np.zeros(P, dtype=np.int64)
    D = np.zeros((P, n))
    D_all = np.zeros((P, Kc + 1, n)) if keep_drift else None
    B_all = np.zeros((P, Kc, n)) if keep_drift else None
    obs = list(range(Kc + 1)) if obs_steps is None else list(obs_steps)
    obs_set = {k: idx for idx, k in enumerate(obs)}
    X_obs = np.zeros((P, len(obs), n))
    obs_reg = np.zeros((P, len(obs)), dtype=np.int64)
    switching = not frozen and model.N > 1
    for k in range(Kc + 1):
        Yk = x0 + D + SW[:, k * m]
        if k in obs_set:
            X_obs[:, obs_set[k]] = Yk
            obs_reg[:, obs_set[k]] = reg
        if k == Kc:
            break
        if not np.all(np.isfinite(Yk)):
            raise DivergenceError(k * delta, np.flatnonzero(~np.isfinite(Yk).all(axis=1)).tolist())
        b = model.drift(Yk, reg)
        if switching:
            while True:
                act = np.flatnonzero(cell[rows, ptr] == k)
                if act.size == 0:
                    break
                pa = ptr[act]
                off = model.rates.off_diagonal(Yk[act])
                reg[act] = reg[act] + jump_batch(off, reg[act], drive_marks[act, pa])
                ev_reg[act, pa] = reg[act]
                ptr[act] = pa + 1
        D = D + b * delta
        if keep_drift:
            B_all[:, k] = b
            D_all[:, k + 1] = D
    # drive points at or beyond the horizon leave the regime unchanged
    late = np.arange(drive_times.shape[1])[None, :] >= ptr[:, None]
    ev_reg = np.where(late, reg[:, None], ev_reg)
    return EMBatch(D_all, B_all, ev_reg, X_obs, reg, obs_reg)


def _check_em_model(model: RSDPModel) -> NDArray[np.float64]:
    if not model.constant_sigma:
        raise AssumptionError("H1 required: the EM scheme needs one constant diffusion matrix")
    return model.sigma_matrix()


def em_path(model: RSDPModel, delta: float, drive: PoissonDrive, brownian: BrownianPath,
            x0: ArrayLike, i0: int) -> SamplePath:
    """Single EM path on the given drive and Brownian path."""
    S = _check_em_model(model)
    W = brownian.cumulative()
    SW = (W @ S.T)[None]
    times, marks = stack_drives([drive])
    out = em_batch(model, delta, brownian.dt, SW, times, marks, np.asarray(x0, float)[None], [i0])
    K = out.X_obs.shape[1] - 1
    switch = SwitchPath(int(i0), drive.times.copy(), out.event_regimes[0, :len(drive)], drive.T)
    return SamplePath(np.arange(K + 1) * delta, out.X_obs[0], switch, delta,
                      {"dt_min": brownian.dt, "seed": drive.seed})


def reference_path(model: RSDPModel, delta_ref: float, drive: PoissonDrive, brownian: BrownianPath,
                   x0: ArrayLike, i0: int) -> SamplePath:
    """Finest-grid path used as the stand-in for the exact solution."""
    if not math.isclose(delta_ref, brownian.dt, rel_tol=1e-12):
        raise ValueError("reference step must equal the Brownian path's finest step")
    path = em_path(model, delta_ref, drive, brownian, x0, i0)
    path.meta["reference"] = True
    return path


# ----------------------------------------------------------------------
# Batch inputs
# ----------------------------------------------------------------------


def batch_inputs(model: RSDPModel, T: float, dt_min: float, path_ids: Sequence[int], seed: int,
                 drive_tag: str = "drive", brownian_tag: str = "brownian"):
    """Per-path Brownian paths (as ``sigma W`` on the fine grid) and padded drives."""
    S = _check_em_model(model)
    K = steps_for(T, dt_min)
    n = model.n
    SW = np.zeros((len(path_ids), K + 1, n))
    drives = []
    for r, p in enumerate(path_ids):
        inc = stream(seed, brownian_tag, p).standard_normal((K, n)) * math.sqrt(dt_min)
        np.cumsum(inc @ S.T, axis=0, out=SW[r, 1:])
        drives.append(sample_drive(T, model.M, stream(seed, drive_tag, p)) if model.M > 0
                      else PoissonDrive(T, 0.0, np.empty(0), np.empty(0)))
    times, marks = stack_drives(drives)
    return SW, times, marks


# ----------------------------------------------------------------------
# Strong error
# ----------------------------------------------------------------------


@dataclass
class ErrorReport:
    deltas: list[float]
    error_mean: list[float]
    error_se: list[float]
    mismatch_mean: list[float]
    mismatch_se: list[float]
    abs_integral_mean: list[float]
    paths: int
    slope: float | None
    slope_residual: float | None
    T: float
    delta_ref: float

    def ci(self, k: int, z: float = 1.96) -> tuple[float, float]:
        return self.error_mean[k] - z * self.error_se[k], self.error_mean[k] + z * self.error_se[k]

    def rows(self) -> list[dict]:
        out = []
        for k, d in enumerate(self.deltas):
            lo, hi = self.ci(k)
            out.append({"delta": d, "error_mean": self.error_mean[k], "error_ci_lo": lo,
                        "error_ci_hi": hi, "mismatch": self.mismatch_mean[k], "paths": self.paths})
        return out

    def to_dict(self) -> dict:
        return {"deltas": self.deltas, "error_mean": self.error_mean, "error_se": self.error_se,
                "mismatch_mean": self.mismatch_mean, "mismatch_se": self.mismatch_se,
                "abs_integral_mean": self.abs_integral_mean, "paths": self.paths,
                "slope": self.slope, "slope_residual": self.slope_residual,
                "T": self.T, "delta_ref": self.delta_ref}


def _fine_drift(Dc: NDArray, Bc: NDArray, m: int, dt_min: float) -> NDArray:
    """Accumulated drift of a coarse path at every fine grid point."""
    P, Kc, n = Bc.shape
    j = np.arange(m) * dt_min
    fine = Dc[:, :-1, None, :] + Bc[:, :, None, :] * j[None, None, :, None]
    return np.concatenate([fine.reshape(P, Kc * m, n), Dc[:, -1:, :]], axis=1)


def _strong_chunk(model, deltas, delta_ref, T, path_ids, seed, x0, i0):
    SW, times, marks = batch_inputs(model, T, delta_ref, path_ids, seed)
    ref = em_batch(model, delta_ref, delta_ref, SW, times, marks, x0, i0, obs_steps=[])
    Dref = ref.D
    K = Dref.shape[1] - 1
    sup_err, mis, integ = [], [], []
    for d in deltas:
        m = ratio(d, delta_ref)
        if m == 1:
            out = ref
            Dc = Dref
        else:
            out = em_batch(model, d, delta_ref, SW, times, marks, x0, i0, obs_steps=[])
            Dc = _fine_drift(out.D, out.B, m, delta_ref)
        err = np.linalg.norm(Dref - Dc, axis=-1)
        sup_err.append(err.max(axis=1))
        integ.append(err[:, :-1].sum(axis=1) * delta_ref)
        mis.append(mismatch_batch(i0, i0, times, ref.event_regimes, out.event_regimes, T))
    assert K == steps_for(T, delta_ref)
    return np.array(sup_err), np.array(mis), np.array(integ)


def _mean_se(a: NDArray) -> tuple[float, float]:
    a = np.asarray(a, dtype=np.float64)
    if a.size < 2:
        return float(a.mean()), 0.0
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def loglog_slope(deltas: Sequence[float], values: Sequence[float]) -> tuple[float | None, float | None]:
    v = np.asarray(values, dtype=np.float64)
    if len(v) < 3 or np.any(v <= 0):
        return None, None
    x, y = np.log(np.asarray(deltas, dtype=np.float64)), np.log(v)
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    return float(coef[0]), float(math.sqrt(res[0] / len(v))) if len(res) else 0.0


def strong_error(model: RSDPModel, deltas: Sequence[float], delta_ref: float, T: float, paths: int,
                 seed: int, x0: ArrayLike = None, i0: int = 1, workers: int = 1) -> ErrorReport:
    """``E sup_t |X(t) - Y(t)|`` for each step, with shared Brownian path and drive.

    The supremum is taken over the reference grid, which contains every
    coarse grid.  The mismatch time ``int_0^T 1{L != L'} ds`` and
    ``int_0^T |X - Y| ds`` are reported alongside.
    """
    deltas = sorted((float(d) for d in deltas), reverse=True)
    for d in deltas:
        ratio(d, delta_ref)
        steps_for(T, d)
    x0 = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(model.n)
    jobs = [(model, deltas, delta_ref, T, list(c), seed, x0, i0) for c in chunks(paths)]
    parts = run_chunks(_strong_chunk, jobs, workers)
    sup = np.concatenate([p[0] for p in parts], axis=1)
    mis = np.concatenate([p[1] for p in parts], axis=1)
    integ = np.concatenate([p[2] for p in parts], axis=1)
    em, es = zip(*(_mean_se(r) for r in sup))
    mm, ms = zip(*(_mean_se(r) for r in mis))
    slope, resid = loglog_slope(deltas, em)
    return ErrorReport(list(deltas), list(em), list(es), list(mm), list(ms),
                       [float(r.mean()) for r in integ], paths, slope, resid, T, delta_ref)


def mismatch_integral(model: RSDPModel, delta: float, delta_ref: float, T: float, paths: int,
                      seed: int, x0: ArrayLike = None, i0: int = 1, workers: int = 1) -> dict:
    """Mean time on ``[0, T]`` at which the coarse and reference regimes disagree."""
    rep = strong_error(model, [delta], delta_ref, T, paths, seed, x0, i0, workers)
    return {"estimate": rep.mismatch_mean[0], "std_error": rep.mismatch_se[0],
            "abs_integral": rep.abs_integral_mean[0]}


# ----------------------------------------------------------------------
# Increment bound
# ----------------------------------------------------------------------


def increment_check(model: RSDPModel, delta: float, T: float, paths: int, seed: int,
                    x0: ArrayLike = None, i0: int = 1, C1: float | None = None,
                    substeps: int = 8) -> dict:
    """Check ``E|Y(s) - Y(s_delta)| <= 2 C1 sqrt(delta)`` at sampled in-cell times ``s``.

    ``s`` runs over the points ``s_delta + j delta / substeps`` of every cell.
    """
    C1 = model.constants.C1 if C1 is None else C1
    if C1 is None:
        raise AssumptionError("A2 constant C1 required")
    dt = delta / substeps
    x0 = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(model.n)
    ids = list(range(paths))
    SW, times, marks = batch_inputs(model, T, dt, ids, seed)
    out = em_batch(model, delta, dt, SW, times, marks, x0, i0, obs_steps=[])
    Dfine = _fine_drift(out.D, out.B, substeps, dt)
    Y = Dfine + SW
    Kc = out.B.shape[1]
    Yf = Y[:, :-1].reshape(paths, Kc, substeps, model.n)
    inc = np.linalg.norm(Yf - Yf[:, :, :1], axis=-1)
    mean = inc.mean(axis=(0, 1))
    se = inc.mean(axis=1).std(axis=0, ddof=1) / math.sqrt(paths)
    bound = 2 * C1 * math.sqrt(delta)
    offsets = (np.arange(substeps) * dt).tolist()
    ok = bool(np.all(mean <= bound + 3 * se))
    return {"passed": ok, "bound": bound, "offsets": offsets, "mean": mean.tolist(), "se": se.tolist()}


# ----------------------------------------------------------------------
# Generic simulation helpers (used by other modules)
# ----------------------------------------------------------------------


def _observe_chunk(model, delta, T, obs_steps, path_ids, seed, x0, i0, tag, keep_events):
    SW, times, marks = batch_inputs(model, T, delta, path_ids, seed,
                                    drive_tag=f"{tag}:drive", brownian_tag=f"{tag}:brownian")
    out = em_batch(model, delta, delta, SW, times, marks, x0, i0, obs_steps=obs_steps, keep_drift=False)
    ev = (times, out.event_regimes) if keep_events else None
    return out.X_obs, out.obs_regime, ev


def simulate_observations(model: RSDPModel, delta: float, T: float, obs_times: Sequence[float],
                          paths: int, seed: int, x0: ArrayLike, i0: int, tag: str = "sim",
                          workers: int = 1, keep_events: bool = False):
    """States ``(X, L)`` at the requested times for ``paths`` independent EM paths."""
    obs_steps = [int(round(t / delta)) for t in obs_times]
    x0 = np.asarray(x0, dtype=np.float64).reshape(model.n)
    jobs = [(model, delta, T, obs_steps, list(c), seed, x0, i0, tag, keep_events) for c in chunks(paths)]
    parts = run_chunks(_observe_chunk, jobs, workers)
    X = np.concatenate([p[0] for p in parts])
    L = np.concatenate([p[1] for p in parts])
    if not keep_events:
        return X, L
    K = max(p[2][0].shape[1] for p in parts)
    times = np.full((paths, K), np.inf)
    regs = np.zeros((paths, K), dtype=np.int64)
    r = 0
    for p in parts:
        t, e = p[2]
        times[r:r + len(t), :t.shape[1]] = t
        regs[r:r + len(t), :t.shape[1]] = e
        regs[r:r + len(t), t.shape[1]:] = e[:, -1:]
        r += len(t)
    return X, L, (times, regs)
