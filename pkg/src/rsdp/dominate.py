"""State-independent dominating chain and exponential functionals.

For a birth-death rate structure the chain with rates
``qbar_{i,i+1} = sup_x q_{i,i+1}(x)`` and ``qbar_{i+1,i} = inf_x q_{i+1,i}(x)``
run on the same Poisson drive stays above the switching component
(``standard`` orientation).  Swapping sup and inf gives a chain that stays
below it (``reversed``), which is what a nonincreasing weight vector needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import expm

from .model import (GridSpec, ModelError, RSDPModel, Verdict, _pair_sum_constant, check_birth_death,
                    rate_bounds)
from .skorokhod import PoissonDrive, SwitchPath, jump_batch

STANDARD, REVERSED = "standard", "reversed"


class StructureError(ModelError):
    """The rate structure is not birth-death."""


class OrientationError(ModelError):
    """Weights are not monotone in the direction the chain requires."""


@dataclass
class DominatingMatrix:
    Q: NDArray[np.float64]
    orientation: str = STANDARD
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.Q.shape[0]

    @property
    def off(self) -> NDArray[np.float64]:
        return np.where(np.eye(self.N, dtype=bool), 0.0, self.Q)

    @property
    def conditions_hold(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def irreducible(self) -> bool:
        up = np.diag(self.Q, 1)
        down = np.diag(self.Q, -1)
        return bool(np.all(up > 0) and np.all(down > 0))

    def to_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "orientation": self.orientation,
                "irreducible": self.irreducible, "verdicts": [v.to_dict() for v in self.verdicts]}


def _generator(off: NDArray[np.float64]) -> NDArray[np.float64]:
    return off - np.diag(off.sum(axis=1))


def orientation_for(lam: ArrayLike) -> str:
    lam = np.asarray(lam, dtype=np.float64)
    d = np.diff(lam)
    if np.all(d >= 0):
        return STANDARD
    if np.all(d <= 0):
        return REVERSED
    raise OrientationError(f"weights {lam.tolist()} are not monotone")


def build_dominating(model: RSDPModel, orientation: str = STANDARD) -> DominatingMatrix:
    """Dominating generator with verdicts for the pair-sum conditions.

    Failed conditions are reported through verdicts, not exceptions.
    """
    if orientation not in (STANDARD, REVERSED):
        raise ValueError(f"unknown orientation {orientation!r}")
    bd = check_birth_death(model)
    if not bd["is_birth_death"]:
        raise StructureError("dominating chain needs a birth-death rate structure")
    rb = rate_bounds(model)
    N = model.N
    off = np.zeros((N, N))
    for i in range(N - 1):
        if orientation == STANDARD:
            off[i, i + 1], off[i + 1, i] = rb.sup[i, i + 1], rb.inf[i + 1, i]
        else:
            off[i, i + 1], off[i + 1, i] = rb.inf[i, i + 1], rb.sup[i + 1, i]
    verdicts = []
    if N == 2:
        verdicts.append(_con_q(model, off, orientation))
    elif N > 2:
        verdicts.append(Verdict("m1", bd["method"], bool(bd["m1_holds"]),
                                {"detail": bd.get("detail", [])}, bd.get("witness")))
    return DominatingMatrix(_generator(off), orientation, verdicts)


def pair_sum_range(rates, n: int) -> tuple[float, list | None, float, list | None, str]:
    """Infimum and supremum of ``q12(x) + q21(x)`` with the points attaining them.

    Closed form when the sum is provably constant; otherwise a scan over
    nested boxes of half-width 1, 10 and 100.
    """
    const = _pair_sum_constant(rates, 0)
    if const is not None:
        return const, None, const, None, "analytic"
    lo, hi, xlo, xhi = np.inf, -np.inf, None, None
    for scale in (1.0, 10.0, 100.0):
        pts = GridSpec(-scale, scale, 201 if n == 1 else 21).nodes(n)
        q = rates.off_diagonal(pts)
        s = q[:, 0, 1] + q[:, 1, 0]
        k, K = int(np.argmin(s)), int(np.argmax(s))
        if s[k] < lo:
            lo, xlo = float(s[k]), pts[k].tolist()
        if s[K] > hi:
            hi, xhi = float(s[K]), pts[K].tolist()
    return lo, xlo, hi, xhi, "grid-sampled"


def _con_q(model: RSDPModel, off: NDArray, orientation: str) -> Verdict:
    """Nesting condition for two regimes.

    Standard: ``qbar12 + qbar21 <= q12(x) + q21(x)`` for all x.  Reversed:
    ``q12(x) + q21(x) <= qbar12 + qbar21``.  Both rates of the chain must be
    positive.
    """
    bar = float(off[0, 1] + off[1, 0])
    lo, xlo, hi, xhi, how = pair_sum_range(model.rates, model.n)
    slack = 1e-12 * max(1.0, abs(bar))
    if orientation == STANDARD:
        ok_sum, witness = bar <= lo + slack, xlo
        detail = {"bar_sum": bar, "inf_sum": lo}
    else:
        ok_sum, witness = hi <= bar + slack, xhi
        detail = {"bar_sum": bar, "sup_sum": hi}
    ok_pos = off[1, 0] > 0 and off[0, 1] > 0
    detail["chain_rates_positive"] = bool(ok_pos)
    return Verdict("con-q", how, bool(ok_sum and ok_pos), detail, None if ok_sum else witness)


# ----------------------------------------------------------------------
# Spectral bound
# ----------------------------------------------------------------------


def eta_bar(Q: ArrayLike | DominatingMatrix, lam: ArrayLike, orientation: str | None = None) -> float:
    """``-max Re spec(Q + diag(lam))``.

    When an orientation is given (or taken from a ``DominatingMatrix``) the
    weights must be monotone in that direction.
    """
    if isinstance(Q, DominatingMatrix):
        orientation = Q.orientation if orientation is None else orientation
        Q = Q.Q
    Q = np.asarray(Q, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64).reshape(Q.shape[0])
    if Q.shape[0] > 64:
        raise ValueError("eta_bar supports N <= 64")
    if orientation is not None and len(lam) > 1:
        d = np.diff(lam)
        ok = np.all(d >= 0) if orientation == STANDARD else np.all(d <= 0)
        if not ok:
            raise OrientationError(f"weights {lam.tolist()} are not monotone for the {orientation} orientation")
    A = Q + np.diag(lam)
    eta = -float(np.max(np.linalg.eigvals(A).real)) + 0.0
    if not math.isfinite(eta):
        raise ValueError("non-finite spectral abscissa")
    return eta


def eta_bar_2x2(Q: ArrayLike, lam: ArrayLike) -> float:
    """Closed form of ``eta_bar`` for N = 2 via trace and determinant."""
    A = np.asarray(Q, dtype=np.float64) + np.diag(np.asarray(lam, dtype=np.float64))
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    disc = tr * tr - 4 * det
    top = 0.5 * (tr + math.sqrt(disc)) if disc >= 0 else 0.5 * tr
    return -top


def feynman_kac(Q: ArrayLike, lam: ArrayLike, t: float, i0: int) -> float:
    """``E_i0 exp(int_0^t lam(chain) ds) = (expm(t (Q + diag lam)) 1)_i0``."""
    Q = np.asarray(Q, dtype=np.float64)
    E = expm(t * (Q + np.diag(np.asarray(lam, dtype=np.float64))))
    return float(E[i0 - 1].sum())


def decay_rate(ts: ArrayLike, values: ArrayLike) -> tuple[float, float]:
    """Least-squares fit of ``log values = c - r t``; returns ``(r, exp(c))``."""
    slope, c = np.polyfit(np.asarray(ts, dtype=np.float64), np.log(np.asarray(values, dtype=np.float64)), 1)
    return float(-slope), float(math.exp(c))


# ----------------------------------------------------------------------
# Simulation
# ----------------------------------------------------------------------


def simulate_dominating(Q: ArrayLike | DominatingMatrix, drive: PoissonDrive, i0: int) -> SwitchPath:
    """Run the chain with generator ``Q`` through ``drive`` using a fixed interval table."""
    times, regs = dominating_batch(Q, drive.times[None], drive.marks[None], i0)
    return SwitchPath(int(i0), drive.times.copy(), regs[0, :len(drive)], drive.T)


def dominating_batch(Q: ArrayLike | DominatingMatrix, times: NDArray, marks: NDArray,
                     i0: int | ArrayLike) -> tuple[NDArray, NDArray]:
    """Vectorised version over padded drives; returns ``(times, event_regimes)``."""
    Qm = Q.Q if isinstance(Q, DominatingMatrix) else np.asarray(Q, dtype=np.float64)
    off = np.where(np.eye(len(Qm), dtype=bool), 0.0, Qm)
    P, K = times.shape
    reg = np.broadcast_to(np.asarray(i0, dtype=np.int64), (P,)).copy()
    out = np.empty((P, K), dtype=np.int64)
    offs = np.broadcast_to(off, (P,) + off.shape)
    for k in range(K):
        live = np.isfinite(times[:, k])
        step = jump_batch(offs, reg, marks[:, k])
        reg = np.where(live, reg + step, reg)
        out[:, k] = reg
    return times, out


def occupation_batch(times: NDArray, i0: ArrayLike, regs: NDArray, lam: ArrayLike, t: float) -> NDArray:
    """``int_0^t lam(L(s)) ds`` for padded switch records, exactly."""
    lam = np.asarray(lam, dtype=np.float64)
    P = times.shape[0]
    i0 = np.broadcast_to(np.asarray(i0, dtype=np.int64), (P,))
    tt = np.minimum(times, t)
    edges = np.concatenate([np.zeros((P, 1)), tt, np.full((P, 1), t)], axis=1)
    seq = np.concatenate([i0[:, None], regs], axis=1)
    return np.sum(lam[seq - 1] * np.diff(edges, axis=1), axis=1)


def log_mean_exp(a: NDArray) -> tuple[float, float]:
    """Mean and standard error of ``exp(a)`` computed without overflow.

    Returned as ``(log mean, log se)``.
    """
    a = np.asarray(a, dtype=np.float64)
    top = float(a.max())
    w = np.exp(a - top)
    mean = w.mean()
    se = w.std(ddof=1) / math.sqrt(len(w)) if len(w) > 1 else 0.0
    return top + math.log(mean), (top + math.log(se)) if se > 0 else -math.inf


def exp_functional(lam: ArrayLike, t: float, *, Q: ArrayLike | DominatingMatrix | None = None,
                   model: RSDPModel | None = None, paths: int = 1000, seed: int = 0,
                   i0: int = 1, x0: ArrayLike | None = None, delta: float = 0.01) -> dict:
    """Monte Carlo ``E exp(int_0^t lam(L(s)) ds)`` for a chain ``Q`` or a model's switching.

    Occupation integrals are exact from the jump record; averaging is done on
    a log scale.  For a model the switching is simulated through the EM
    scheme with step ``delta``.
    """
    if t <= 0 or paths < 1:
        raise ValueError("need t > 0 and paths >= 1")
    lam = np.asarray(lam, dtype=np.float64)
    if np.all(lam == 0):
        return {"estimate": 1.0, "std_error": 0.0, "log_estimate": 0.0}
    if (Q is None) == (model is None):
        raise ValueError("pass exactly one of Q or model")
    if Q is not None:
        Qm = Q.Q if isinstance(Q, DominatingMatrix) else np.asarray(Q, dtype=np.float64)
        # the fixed table tiles [0, sum of off-diagonal rates)
        M = float(np.where(np.eye(len(Qm), dtype=bool), 0.0, Qm).sum())
        times, regs = chain_batch(Qm, t, M, range(paths), seed, i0)
    else:
        times, _, regs = model_switch_batch(model, t, delta, range(paths), seed, i0, x0)
    occ = occupation_batch(times, i0, regs, lam, t)
    return _summary(occ)


def _summary(occ: NDArray) -> dict:
    if np.all(occ == occ[0]):
        v = math.exp(float(occ[0]))
        return {"estimate": v, "std_error": 0.0, "log_estimate": float(occ[0])}
    lm, ls = log_mean_exp(occ)
    return {"estimate": math.exp(lm), "std_error": math.exp(ls), "log_estimate": lm}


def drive_batch(T: float, M: float, path_ids: Sequence[int], seed: int, tag: str = "drive"):
    from .rng import stream
    from .skorokhod import sample_drive, stack_drives
    drives = [sample_drive(T, M, stream(seed, tag, p)) if M > 0 else PoissonDrive(T, 0.0, np.empty(0), np.empty(0))
              for p in path_ids]
    return stack_drives(drives)


def chain_batch(Q: ArrayLike, T: float, M: float, path_ids: Sequence[int], seed: int, i0: int):
    times, marks = drive_batch(T, M, path_ids, seed)
    return dominating_batch(Q, times, marks, i0)


def model_switch_batch(model: RSDPModel, T: float, delta: float, path_ids: Sequence[int],
                       seed: int, i0: int, x0: ArrayLike | None = None):
    from .integrate import batch_inputs, em_batch
    x0 = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=np.float64).reshape(model.n)
    SW, times, marks = batch_inputs(model, T, delta, list(path_ids), seed)
    out = em_batch(model, delta, delta, SW, times, marks, x0, i0, obs_steps=[], keep_drift=False)
    return times, marks, out.event_regimes


@dataclass
class DominationResult:
    paths: int
    violations: int
    first_violation: dict | None
    identical_paths: int
    lam: list[float] | None = None
    exp_model: NDArray | None = None
    exp_chain: NDArray | None = None

    def to_dict(self) -> dict:
        return {"paths": self.paths, "violations": self.violations,
                "first_violation": self.first_violation, "identical_paths": self.identical_paths}


def check_domination(model: RSDPModel, T: float, paths: int, seed: int, i0: int = 1,
                     x0: ArrayLike | None = None, delta: float = 0.01,
                     dom: DominatingMatrix | None = None, lam: ArrayLike | None = None,
                     t_eval: Sequence[float] = ()) -> DominationResult:
    """Run the model's switching and the dominating chain on shared drives and
    compare them after every drive point (exact integer comparison).

    With ``lam`` given, per-path occupation integrals at the times ``t_eval``
    are returned for both chains.
    """
    dom = build_dominating(model) if dom is None else dom
    if dom.Q.shape[0] > 1 and model.M + 1e-12 < float(np.max(dom.off.sum(axis=1))):
        raise ValueError("drive intensity below the dominating chain's total rate")
    from .parallel import chunks
    viol, ident, first = 0, 0, None
    em, ec = [], []
    for c in chunks(paths):
        times, marks, regs = model_switch_batch(model, T, delta, c, seed, i0, x0)
        _, bar = dominating_batch(dom.Q, times, marks, i0)
        live = np.isfinite(times)
        bad = (regs > bar) if dom.orientation == STANDARD else (regs < bar)
        bad &= live
        viol += int(bad.sum())
        ident += int(np.sum(np.all((regs == bar) | ~live, axis=1)))
        if first is None and bad.any():
            p, k = np.argwhere(bad)[0]
            first = {"path": int(c[p]), "time": float(times[p, k]),
                     "model_regime": int(regs[p, k]), "chain_regime": int(bar[p, k])}
        if lam is not None:
            em.append(np.stack([occupation_batch(times, i0, regs, lam, t) for t in t_eval], axis=1))
            ec.append(np.stack([occupation_batch(times, i0, bar, lam, t) for t in t_eval], axis=1))
    res = DominationResult(paths, viol, first, ident)
    if lam is not None:
        res.lam = list(np.asarray(lam, dtype=float))
        res.exp_model, res.exp_chain = np.concatenate(em), np.concatenate(ec)
    return res

