"""Reflection coupling of two copies and meeting-time statistics.

The pair is driven by one n-dimensional Brownian motion: ``X`` receives
``sigma(X, L) dW`` and ``Y`` receives ``sigma(Y, L') (I - 2 u u*) dW`` with
``u = (X - Y)/|X - Y|``.  The regimes run on two independent Poisson drives.
The continuous part is stepped with Euler on a regular grid; a drive point
inside a cell is read against the interval table at the linearly
interpolated state of the pair.  The pair is declared met once ``|X - Y|``
falls below ``eps`` or the difference crosses the hyperplane orthogonal to
its previous direction (observed at a grid point, or inside the step by a
Brownian-bridge test on the projection), with the regimes equal at that
moment, and is glued from then on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import quad

from .dominate import REVERSED, STANDARD, build_dominating, decay_rate, eta_bar
from .model import AssumptionError, RSDPModel
from .parallel import chunks, run_chunks
from .rng import stream
from .skorokhod import jump_batch, sample_drive, stack_drives

EPS_COUPLE = 1e-6
BLOCK = 512


# ----------------------------------------------------------------------
# Reflection
# ----------------------------------------------------------------------


def reflection_matrix(u: ArrayLike) -> NDArray[np.float64]:
    u = np.asarray(u, dtype=np.float64)
    return np.eye(len(u)) - 2.0 * np.outer(u, u)


def reflected_increment(x: ArrayLike, y: ArrayLike, sx: ArrayLike, sy: ArrayLike,
                        dW: ArrayLike) -> tuple[NDArray, NDArray]:
    """Noise increments ``(sx dW, sy (I - 2uu*) dW)``; synchronous when ``x == y``."""
    x, y, dW = (np.asarray(a, dtype=np.float64) for a in (x, y, dW))
    sx, sy = np.atleast_2d(sx).astype(np.float64), np.atleast_2d(sy).astype(np.float64)
    z = x - y
    r = float(np.linalg.norm(z))
    if r == 0.0:
        return sx @ dW, sy @ dW
    u = z / r
    return sx @ dW, sy @ (dW - 2.0 * u * (u @ dW))


def joint_diffusion(x, y, sx, sy) -> NDArray[np.float64]:
    """Stacked ``G = (sx; sy (I - 2uu*))`` so that ``G G*`` is the coupled diffusion matrix."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    z = x - y
    r = float(np.linalg.norm(z))
    R = np.eye(len(x)) if r == 0 else reflection_matrix(z / r)
    return np.vstack([np.atleast_2d(sx), np.atleast_2d(sy) @ R])


def coupled_covariance(x, y, sx, sy) -> NDArray[np.float64]:
    """``a(x,i,y,j)`` assembled blockwise with ``c = sx (I - 2uu*) sy*``."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    sx, sy = np.atleast_2d(sx), np.atleast_2d(sy)
    z = x - y
    r = float(np.linalg.norm(z))
    R = np.eye(len(x)) if r == 0 else reflection_matrix(z / r)
    c = sx @ R @ sy.T
    return np.block([[sx @ sx.T, c], [c.T, sy @ sy.T]])


# ----------------------------------------------------------------------
# Coupled simulation
# ----------------------------------------------------------------------


@dataclass
class MeetingTimes:
    """Per-path times; ``inf`` marks censoring at ``Tmax``."""

    T: NDArray[np.float64]
    tau: NDArray[np.float64]
    Tmax: float
    eps: float
    curve_times: NDArray[np.float64] | None = None
    sq_dist: NDArray[np.float64] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def paths(self) -> int:
        return len(self.T)

    @property
    def coupled_fraction(self) -> float:
        return float(np.mean(np.isfinite(self.T)))

    @property
    def censored_fraction(self) -> float:
        return 1.0 - self.coupled_fraction

    def mean_T(self) -> tuple[float, float]:
        t = self.T[np.isfinite(self.T)]
        if len(t) == 0:
            return math.inf, math.nan
        return float(t.mean()), float(t.std(ddof=1) / math.sqrt(len(t))) if len(t) > 1 else 0.0

    def mean_tau(self) -> tuple[float, float]:
        t = self.tau[np.isfinite(self.tau)]
        if len(t) == 0:
            return math.inf, math.nan
        return float(t.mean()), float(t.std(ddof=1) / math.sqrt(len(t))) if len(t) > 1 else 0.0

    def to_dict(self) -> dict:
        mT, sT = self.mean_T()
        mt, st = self.mean_tau()
        return {"paths": self.paths, "Tmax": self.Tmax, "eps": self.eps,
                "coupled_fraction": self.coupled_fraction, "mean_T": mT, "se_T": sT,
                "mean_tau": mt, "se_tau": st, "tau_censored": float(np.mean(~np.isfinite(self.tau)))}


def _couple_chunk(model, x, i, y, j, delta, Tmax, path_ids, seed, eps, designated, frozen,
                  record_steps, tag, glue):
    P, n = len(path_ids), model.n
    K = int(round(Tmax / delta))
    X = np.broadcast_to(np.asarray(x, dtype=np.float64), (P, n)).copy()
    Y = np.broadcast_to(np.asarray(y, dtype=np.float64), (P, n)).copy()
    La = np.full(P, int(i), dtype=np.int64)
    Lb = np.full(P, int(j), dtype=np.int64)
    gens = [stream(seed, f"{tag}:brownian", p) for p in path_ids]
    switching = not frozen and model.N > 1
    if switching:
        ta, ma = stack_drives([sample_drive(Tmax, model.M, stream(seed, f"{tag}:drive1", p)) for p in path_ids])
        tb, mb = stack_drives([sample_drive(Tmax, model.M, stream(seed, f"{tag}:drive2", p)) for p in path_ids])
        ca = _cells(ta, delta)
        cb = _cells(tb, delta)
        pa = np.zeros(P, dtype=np.int64)
        pb = np.zeros(P, dtype=np.int64)
    rows = np.arange(P)
    met = np.all(X == Y, axis=1) & (La == Lb)
    glued = met & glue
    Tm = np.where(met, 0.0, np.inf)
    tau = np.where((La == designated) & (Lb == designated), 0.0, np.inf)
    rec = {k: idx for idx, k in enumerate(record_steps)}
    sq = np.zeros((P, len(record_steps)))
    sqrt_dt = math.sqrt(delta)
    dW = None
    for k in range(K + 1):
        if k in rec:
            sq[:, rec[k]] = np.where(glued, 0.0, np.sum((X - Y) ** 2, axis=1))
        if k == K:
            break
        if (np.all(met) or not glue) and np.all(np.isfinite(tau)) and (not rec or k >= max(rec)):
            break
        b0 = k % BLOCK
        if b0 == 0:
            m = min(BLOCK, K - k)
            draws = [(g.standard_normal((m, n)), g.random(m)) for g in gens]
            dW = np.stack([d[0] for d in draws], axis=0) * sqrt_dt
            unif = np.stack([d[1] for d in draws], axis=0)
        w = dW[:, b0]
        Z = X - Y
        r = np.linalg.norm(Z, axis=1)
        safe = np.where(r > 0, r, 1.0)
        u = Z / safe[:, None]
        refl = np.where((r > 0)[:, None], w - 2.0 * u * np.sum(u * w, axis=1)[:, None], w)
        sx = model.sigma(X, La)
        sy = model.sigma(Y, Lb)
        Xn = X + model.drift(X, La) * delta + np.einsum("pij,pj->pi", sx, w)
        Yn = Y + model.drift(Y, Lb) * delta + np.einsum("pij,pj->pi", sy, refl)
        # variance rate of the difference along u, for the bridge crossing test
        gx = np.einsum("pji,pj->pi", sx, u)
        gy = np.einsum("pji,pj->pi", sy, u)
        gy = gy - 2.0 * u * np.sum(u * gy, axis=1)[:, None]
        vz = np.sum((gx - gy) ** 2, axis=1)
        Yn = np.where(glued[:, None], Xn, Yn)
        if not (np.all(np.isfinite(Xn)) and np.all(np.isfinite(Yn))):
            bad = ~(np.isfinite(Xn).all(axis=1) & np.isfinite(Yn).all(axis=1))
            from .integrate import DivergenceError
            raise DivergenceError(k * delta, [path_ids[q] for q in np.flatnonzero(bad)])
        t0 = k * delta
        if switching:
            for which in (0, 1):
                cells, times, marks, ptr = (ca, ta, ma, pa) if which == 0 else (cb, tb, mb, pb)
                while True:
                    act = np.flatnonzero(cells[rows, ptr] == k)
                    if which == 1:
                        act = act[~glued[act]]
                    if act.size == 0:
                        break
                    q = ptr[act]
                    s = times[act, q]
                    f = ((s - t0) / delta)[:, None]
                    if which == 0:
                        st = X[act] + f * (Xn[act] - X[act])
                        La[act] += jump_batch(model.rates.off_diagonal(st), La[act], marks[act, q])
                        Lb[act] = np.where(glued[act], La[act], Lb[act])
                    else:
                        st = Y[act] + f * (Yn[act] - Y[act])
                        Lb[act] += jump_batch(model.rates.off_diagonal(st), Lb[act], marks[act, q])
                    hit = (La[act] == designated) & (Lb[act] == designated) & ~np.isfinite(tau[act])
                    tau[act[hit]] = s[hit]
                    ptr[act] = q + 1
                # drive-2 points of glued paths are skipped
                if which == 1:
                    gl = np.flatnonzero(glued)
                    while gl.size:
                        hit = cb[gl, pb[gl]] == k
                        gl = gl[hit]
                        pb[gl] += 1
        # meeting test
        Zn = Xn - Yn
        rn = np.linalg.norm(Zn, axis=1)
        proj = np.sum(Zn * u, axis=1)
        crossed = (r > 0) & (proj <= 0)
        # a Brownian bridge between two positive projections hits zero with
        # probability exp(-2 r proj / (v delta))
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            p_hit = np.exp(-2.0 * r * np.maximum(proj, 0.0) / (vz * delta))
        bridged = (r > 0) & ~crossed & (vz > 0) & (unif[:, b0] < p_hit)
        close = (rn <= eps) | crossed | bridged
        meet = close & ~met & (La == Lb)
        if np.any(meet):
            frac = np.where(proj < 0, r / np.where(r - proj > 0, r - proj, 1.0), 1.0)
            frac = np.where(bridged, 0.5, frac)
            Tm[meet] = t0 + delta * np.clip(frac[meet], 0.0, 1.0)
            met = met | meet
            glued = met & glue
            Yn = np.where(glued[:, None], Xn, Yn)
            Lb = np.where(glued, La, Lb)
        X, Y = Xn, Yn
    return Tm, tau, sq


def _cells(times: NDArray, delta: float) -> NDArray[np.int64]:
    finite = np.isfinite(times)
    cell = np.full(times.shape, np.iinfo(np.int64).max, dtype=np.int64)
    cell[finite] = np.floor(times[finite] / delta).astype(np.int64)
    return cell


def simulate_coupling(model: RSDPModel, start_x: tuple, start_y: tuple, delta: float, Tmax: float,
                      paths: int = 1, seed: int = 0, *, eps: float = EPS_COUPLE, designated: int = 1,
                      frozen: bool = False, record_times: Sequence[float] = (), workers: int = 1,
                      tag: str = "couple", glue: bool = True) -> MeetingTimes:
    """Simulate ``paths`` reflection-coupled pairs from ``(x, i)`` and ``(y, j)``.

    With ``frozen=True`` the regimes never switch (fixed environment).
    ``record_times`` selects times at which ``|X - Y|^2`` is stored, with
    glued pairs contributing zero.  With ``glue=False`` the pair keeps
    running after the first meeting, so the two regimes stay driven by their
    own independent drives for the whole horizon.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    (x, i), (y, j) = start_x, start_y
    x = np.asarray(x, dtype=np.float64).reshape(model.n)
    y = np.asarray(y, dtype=np.float64).reshape(model.n)
    rec = [int(round(t / delta)) for t in record_times]
    jobs = [(model, x, i, y, j, delta, Tmax, list(c), seed, eps, designated, frozen, rec, tag, glue)
            for c in chunks(paths)]
    parts = run_chunks(_couple_chunk, jobs, workers)
    Tm = np.concatenate([p[0] for p in parts])
    tau = np.concatenate([p[1] for p in parts])
    sq = np.concatenate([p[2] for p in parts])
    out = MeetingTimes(Tm, tau, Tmax, eps, np.asarray(record_times, dtype=np.float64), sq if rec else None)
    out.meta = {"delta": delta, "seed": seed, "start_x": [x.tolist(), i], "start_y": [y.tolist(), j],
                "designated": designated, "frozen": frozen}
    return out


# ----------------------------------------------------------------------
# Tail of tau
# ----------------------------------------------------------------------


@dataclass
class TauTail:
    t: NDArray[np.float64]
    survival: NDArray[np.float64]
    theta_hat: float
    theta_fit: float | None
    slack: float
    passed: bool
    mean_tau: float
    se_tau: float

    def to_dict(self) -> dict:
        return {"theta_hat": self.theta_hat, "theta_fit": self.theta_fit, "slack": self.slack,
                "passed": self.passed, "mean_tau": self.mean_tau, "se_tau": self.se_tau}


def survival_curve(samples: ArrayLike, t: ArrayLike) -> NDArray[np.float64]:
    """Empirical ``P(tau >= t)``; ``inf`` entries are censored beyond every ``t``."""
    s = np.sort(np.asarray(samples, dtype=np.float64))
    t = np.asarray(t, dtype=np.float64)
    return 1.0 - np.searchsorted(s, t, side="left") / len(s)


def dominating_rate(t: ArrayLike, survival: ArrayLike, slack: float = 0.1) -> float:
    """Largest ``theta`` with ``survival(t) <= (1 + slack) exp(-theta t)`` on the grid."""
    t = np.asarray(t, dtype=np.float64)
    S = np.asarray(survival, dtype=np.float64)
    keep = (t > 0) & (S > 0)
    if not np.any(keep):
        return math.inf
    return float(np.min((math.log1p(slack) - np.log(S[keep])) / t[keep]))


def tau_tail(model: RSDPModel, inits: tuple[tuple, tuple], Tmax: float, paths: int, seed: int,
             delta: float = 1e-2, designated: int = 1, slack: float = 0.1, t_grid: ArrayLike | None = None,
             min_count: int = 20, workers: int = 1) -> TauTail:
    """Empirical survival of ``tau`` and its exponential envelope.

    ``theta_hat`` is the largest rate for which ``(1 + slack) exp(-theta t)``
    dominates the survival curve over the resolved window (where at least
    ``min_count`` paths survive); the verdict is ``theta_hat > 0``.  The
    unconstrained least-squares slope of the log curve over the same window
    is reported as ``theta_fit``.
    """
    res = simulate_coupling(model, inits[0], inits[1], delta, Tmax, paths, seed,
                            designated=designated, workers=workers, tag="tau", glue=False)
    t = np.linspace(0.0, Tmax, 501) if t_grid is None else np.asarray(t_grid, dtype=np.float64)
    S = survival_curve(res.tau, t)
    window = S * paths >= min_count
    theta = dominating_rate(t[window], S[window], slack)
    fit = None
    w = window & (S > 0) & (t > 0)
    if w.sum() >= 3 and np.any(S[w] < 1):
        fit, _ = decay_rate(t[w], S[w])
    m, se = res.mean_tau()
    return TauTail(t, S, theta, fit, slack, bool(theta > 0), m, se)


def product_chain_tau(Q: ArrayLike, i0: int, j0: int, paths: int, seed: int,
                      designated: int = 1, Tmax: float = math.inf) -> NDArray[np.float64]:
    """First time two independent chains with generator ``Q`` sit at ``designated``
    together, by Gillespie simulation of the product chain."""
    Q = np.asarray(Q, dtype=np.float64)
    N = len(Q)
    rng = stream(seed, "product-chain", 0)
    rates = -np.diag(Q)
    out = np.empty(paths)
    for p in range(paths):
        a, b, t = i0, j0, 0.0
        while not (a == designated and b == designated) and t < Tmax:
            ra, rb = rates[a - 1], rates[b - 1]
            t += rng.exponential(1.0 / (ra + rb))
            if rng.uniform() * (ra + rb) < ra:
                probs = np.where(np.arange(N) == a - 1, 0.0, Q[a - 1]) / ra
                a = int(rng.choice(N, p=probs)) + 1
            else:
                probs = np.where(np.arange(N) == b - 1, 0.0, Q[b - 1]) / rb
                b = int(rng.choice(N, p=probs)) + 1
        out[p] = t if t < Tmax else math.inf
    return out


# ----------------------------------------------------------------------
# Contraction and moments
# ----------------------------------------------------------------------


def alpha_matrix(model: RSDPModel):
    """``Q^alpha`` with orientation chosen from the ordering of the alphas."""
    alpha = model.constants.alpha
    if alpha is None:
        raise AssumptionError("A1 constants alpha required")
    if model.N == 2:
        orient = STANDARD if alpha[0] <= alpha[1] else REVERSED
    else:
        d = np.diff(alpha)
        orient = STANDARD if np.all(d >= 0) else REVERSED
    dom = build_dominating(model, orient)
    return dom, eta_bar(dom, alpha)


@dataclass
class ContractionResult:
    t: NDArray[np.float64]
    curve: NDArray[np.float64]
    se: NDArray[np.float64]
    rate: float | None
    eta_alpha: float
    tolerance: float
    passed: bool | None
    status: str
    fit_window: tuple[float, float] | None

    def to_dict(self) -> dict:
        return {"rate": self.rate, "eta_alpha": self.eta_alpha, "tolerance": self.tolerance,
                "passed": self.passed, "status": self.status, "fit_window": self.fit_window,
                "curve0": float(self.curve[0])}


def contraction_rate(model: RSDPModel, start_x: tuple, start_y: tuple, T: float, paths: int, seed: int,
                     delta: float = 1e-3, t_points: int = 41, tolerance: float = 0.2,
                     floor: float = 1e-3, workers: int = 1) -> ContractionResult:
    """Decay rate of ``E|X - Y|^2`` under the reflection coupling.

    The rate is the least-squares slope of the log curve over the times at
    which the curve is above ``floor`` times its initial value.  The verdict
    compares it with the spectral value ``eta_alpha``.
    """
    try:
        _, eta = alpha_matrix(model)
    except AssumptionError:
        eta = math.nan
    t = np.linspace(0.0, T, t_points)
    res = simulate_coupling(model, start_x, start_y, delta, T, paths, seed, record_times=t,
                            workers=workers, tag="contraction")
    curve = res.sq_dist.mean(axis=0)
    se = res.sq_dist.std(axis=0, ddof=1) / math.sqrt(paths) if paths > 1 else np.zeros_like(curve)
    if curve[0] == 0:
        return ContractionResult(t, curve, se, None, eta, tolerance, None, "identical starts", None)
    ok = (curve > floor * curve[0]) & (curve > 3 * se)
    ok[0] = True
    last = int(np.argmin(ok)) if not ok.all() else len(ok)
    rate = None
    window = None
    if last >= 3:
        rate, _ = decay_rate(t[:last], curve[:last])
        window = (float(t[0]), float(t[last - 1]))
    if not (eta > 0):
        return ContractionResult(t, curve, se, rate, eta, tolerance, None,
                                 "paper bound vacuous (eta_alpha <= 0)", window)
    passed = rate is not None and rate >= (1 - tolerance) * eta
    return ContractionResult(t, curve, se, rate, eta, tolerance, bool(passed), "checked", window)


def moment_bound(model: RSDPModel, x0_list: Sequence[ArrayLike], i0: int, T: float, paths: int,
                 seed: int, delta: float = 1e-2, t_points: int = 51, max_spread: float = 5.0,
                 workers: int = 1) -> dict:
    """``sup_t E|X(t)|^2 / (1 + |x0|^2)`` for each start, and whether one constant bounds them.

    The verdict is that the largest of these ratios is at most ``max_spread``
    times the smallest.  When the alpha spectral value is not positive the
    bound is reported as not applicable.
    """
    from .integrate import simulate_observations
    times = np.linspace(0.0, T, t_points)
    ratios, curves = [], []
    for k, x0 in enumerate(x0_list):
        x0 = np.asarray(x0, dtype=np.float64).reshape(model.n)
        X, _ = simulate_observations(model, delta, T, times, paths, seed, x0, i0, tag=f"moment{k}",
                                     workers=workers)
        m2 = np.mean(np.sum(X ** 2, axis=-1), axis=0)
        curves.append(m2)
        ratios.append(float(m2.max() / (1.0 + x0 @ x0)))
    try:
        _, eta = alpha_matrix(model)
    except AssumptionError:
        eta = math.nan
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    applicable = eta > 0
    return {"ratios": ratios, "spread": spread, "eta_alpha": eta,
            "applicable": bool(applicable),
            "passed": bool(spread <= max_spread) if applicable else None,
            "times": times.tolist(), "curves": [c.tolist() for c in curves]}


# ----------------------------------------------------------------------
# Fixed-environment coupling time bound
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CouplingBoundParams:
    C2: float
    C3: float
    beta: float
    p: float

    def __post_init__(self):
        if not self.p > 2:
            raise AssumptionError(f"coupling time bound needs p > 2, got p={self.p}")
        if not (self.C2 > 0 and self.C3 > 0):
            raise AssumptionError("coupling time bound needs C2 > 0 and C3 > 0")

    @classmethod
    def from_model(cls, model: RSDPModel) -> "CouplingBoundParams":
        c = model.constants
        if None in (c.C2, c.C3, c.beta, c.p):
            raise AssumptionError("A3/A4 required: C2, C3, beta, p must be declared")
        return cls(c.C2, c.C3, c.beta, c.p)

    @property
    def alpha(self) -> float:
        return 4.0 * self.C2 ** 2

    def gamma(self, r):
        return (self.beta * np.square(r) - self.C3 * np.power(r, self.p)) / self.alpha

    def log_C(self, r):
        """``log C(r) = int_1^r gamma(u)/u du`` in closed form."""
        r = np.asarray(r, dtype=np.float64)
        return (0.5 * self.beta * (r * r - 1.0) - self.C3 * (np.power(r, self.p) - 1.0) / self.p) / self.alpha


def _inner(params: CouplingBoundParams, s: float) -> float:
    """``C(s)^{-1} int_s^inf C(u)/alpha du``; segments grow until a segment adds
    less than 1e-16 of the running integral."""
    ls = float(params.log_C(s))
    f = lambda u: math.exp(float(params.log_C(u)) - ls) / params.alpha
    peak = (params.beta / params.C3) ** (1.0 / (params.p - 2)) if params.beta > 0 else 0.0
    a, h, total = s, max(1.0, peak - s, 0.0), 0.0
    for _ in range(200):
        part = quad(f, a, a + h, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        total += part
        if part <= 1e-16 * total and a + h > peak:
            break
        a, h = a + h, 2.0 * h
    return total


def coupling_time_bound(params: CouplingBoundParams, r: float) -> float:
    """``-2 F(r)`` by nested adaptive quadrature."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if r == 0:
        return 0.0
    val = quad(lambda s: _inner(params, s), 0.0, r, epsabs=1e-10, epsrel=1e-10, limit=200)[0]
    return 2.0 * val


def coupling_time_limit(params: CouplingBoundParams) -> float:
    """``-2 F(inf)``, the bound uniform in the starting distance."""
    val = quad(lambda s: _inner(params, s), 0.0, np.inf, epsabs=1e-10, epsrel=1e-10, limit=200)[0]
    return 2.0 * val


def coupling_time_bound_gauss(params: CouplingBoundParams, r: float, order: int = 64,
                              panels: int = 64, cutoff: float | None = None) -> float:
    """Second scheme for ``-2 F(r)``: composite fixed-order Gauss-Legendre on a
    truncated square, integrating over ``0 <= s <= r``, ``s <= u <= U``."""
    if r == 0:
        return 0.0
    if cutoff is None:
        U = max(r, 1.0)
        while params.log_C(U) - max(params.log_C(0.0), params.log_C(r)) > math.log(1e-18):
            U *= 1.25
        cutoff = U
    xg, wg = leggauss(order)

    def nodes(a, b):
        edges = np.linspace(a, b, panels + 1)
        mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
        return (mid[:, None] + half[:, None] * xg[None]).ravel(), (half[:, None] * wg[None]).ravel()

    s, ws = nodes(0.0, r)
    total = 0.0
    for sk, wk in zip(s, ws):
        u, wu = nodes(sk, cutoff)
        total += wk * np.sum(wu * np.exp(params.log_C(u) - params.log_C(sk))) / params.alpha
    return 2.0 * total


def fixed_env_meeting(model: RSDPModel, env: int, pair: tuple, delta: float, Tmax: float, paths: int,
                      seed: int, tolerance: float = 0.05, eps: float = EPS_COUPLE,
                      workers: int = 1) -> dict:
    """Meeting time of the reflected pair with both regimes frozen at ``env``.

    The verdict compares the mean with ``-2F(|x - y|)`` times ``1 + tolerance``;
    more than half the paths censored makes the run inconclusive.
    """
    x, y = (np.asarray(v, dtype=np.float64).reshape(model.n) for v in pair)
    r = float(np.linalg.norm(x - y))
    params = CouplingBoundParams.from_model(model)
    bound = coupling_time_bound(params, r)
    res = simulate_coupling(model, (x, env), (y, env), delta, Tmax, paths, seed, eps=eps,
                            frozen=True, workers=workers, tag="fixed-env")
    mean, se = res.mean_T()
    censored = res.censored_fraction
    if censored > 0.5:
        status, passed = "inconclusive; raise Tmax", None
    else:
        status, passed = "checked", bool(mean <= bound * (1 + tolerance))
    return {"r": r, "mean_T1": mean, "se_T1": se, "bound": bound, "tolerance": tolerance,
            "censored_fraction": censored, "status": status, "passed": passed}
