"""Regime-switching diffusion models and their standing assumptions.

A model couples an SDE ``dX = b(X, L) dt + sigma(X, L) dW`` in R^n with a jump
process ``L`` on ``{1, ..., N}`` whose transition rates ``q_ij(x)`` depend on
the continuous state.  Regimes are labelled ``1..N`` in every public function;
arrays indexed by regime are 0-based internally.

Two tiers of coefficients are supported:

* declarative families (:class:`ConstantRates`, :class:`TanhRates`,
  :class:`PolyDrift`, :class:`ConstantSigma`) whose bounds, Lipschitz
  constants and dissipativity constants are known in closed form;
* programmatic providers (:class:`CallableRates`, :class:`CallableDrift`,
  :class:`CallableSigma`) whose constants are estimated on a grid.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

TOL = 1e-9
DEFAULT_SAFETY = 1.1


class ModelError(ValueError):
    """Invalid model definition."""


class QMatrixError(ModelError):
    """A rate matrix has a negative off-diagonal entry."""


class EvaluationError(ModelError):
    """A coefficient or rate evaluated to a non-finite value."""


class AssumptionError(ModelError):
    """A required assumption or constant is missing or violated."""


@dataclass(frozen=True)
class RegimeSet:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ModelError(f"regime count must be a positive integer, got {self.N!r}")

    @property
    def labels(self) -> range:
        return range(1, self.N + 1)


@dataclass(frozen=True)
class GridSpec:
    """Regular sampling grid on the box ``[lo, hi]^n``."""

    lo: float = -10.0
    hi: float = 10.0
    points: int = 41

    def nodes(self, n: int) -> NDArray[np.float64]:
        if n > 3 and self == GridSpec():
            raise ModelError("default grid supports n <= 3; pass an explicit GridSpec")
        axis = np.linspace(self.lo, self.hi, self.points)
        mesh = np.meshgrid(*([axis] * n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.points - 1)


# ----------------------------------------------------------------------
# Rate functions
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RateBounds:
    sup: NDArray[np.float64]
    inf: NDArray[np.float64]
    H: float
    M: float
    method: str


def _as_generator(off: NDArray[np.float64]) -> NDArray[np.float64]:
    N = off.shape[-1]
    eye = np.eye(N, dtype=bool)
    off = np.where(eye, 0.0, off)
    return off - np.eye(N) * off.sum(axis=-1, keepdims=True)


class RateFunction:
    """State-dependent transition rates ``q_ij(x)``.

    Subclasses implement :meth:`off_diagonal`; everything else is derived.
    """

    family = "abstract"
    N: int
    n: int

    def off_diagonal(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        raise NotImplementedError

    def matrix(self, x: ArrayLike) -> NDArray[np.float64]:
        """Conservative Q-matrix at ``x`` (shape ``(..., n)`` -> ``(..., N, N)``)."""
        x = np.asarray(x, dtype=np.float64)
        return _as_generator(self.off_diagonal(x))

    # Subclasses with closed forms override these three.
    def _exact_bounds(self) -> tuple[NDArray, NDArray] | None:
        return None

    def _exact_lipschitz(self) -> float | None:
        return None

    def bounds(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Per-pair ``(sup_x q_ij, inf_x q_ij)``; zero on the diagonal."""
        exact = self._exact_bounds()
        if exact is not None:
            return exact
        return self._grid_bounds()

    @property
    def analytic(self) -> bool:
        return self._exact_bounds() is not None

    @property
    def lipschitz(self) -> float:
        """Constant ``c_q`` with ``|q_ij(x) - q_ij(y)| <= c_q |x - y|`` for all pairs."""
        exact = self._exact_lipschitz()
        if exact is not None:
            return exact
        return self._grid_lipschitz()

    @property
    def H(self) -> float:
        """``max_i sup_x q_i(x)``, bounded above by the row sums of per-pair sups."""
        if self.N == 1:
            return 0.0
        exact = self._exact_bounds()
        if exact is not None:
            return float(exact[0].sum(axis=1).max())
        return float(self._row_sup_grid().max() * self.safety)

    @property
    def M(self) -> float:
        return self.N * (self.N - 1) * self.H

    @property
    def is_birth_death(self) -> bool:
        sup, _ = self.bounds()
        i, j = np.indices(sup.shape)
        return bool(np.all(sup[np.abs(i - j) >= 2] == 0.0))

    # grid estimation (programmatic providers) ------------------------
    grid: GridSpec = GridSpec()
    safety: float = DEFAULT_SAFETY

    def _grid_values(self) -> NDArray[np.float64]:
        pts = self.grid.nodes(self.n)
        vals = self.off_diagonal(pts)
        if not np.all(np.isfinite(vals)):
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise EvaluationError(f"non-finite rate q_{bad[1] + 1}{bad[2] + 1} at x={pts[bad[0]].tolist()}")
        return vals

    def _grid_bounds(self):
        vals = self._grid_values()
        eye = np.eye(self.N, dtype=bool)
        sup = np.where(eye, 0.0, vals.max(axis=0) * self.safety)
        inf = np.where(eye, 0.0, vals.min(axis=0) / self.safety)
        return sup, inf

    def _row_sup_grid(self) -> NDArray[np.float64]:
        vals = self._grid_values()
        eye = np.eye(self.N, dtype=bool)
        return np.where(eye, 0.0, vals).sum(axis=-1).max(axis=0)

    def _grid_lipschitz(self) -> float:
        return grid_lipschitz(self.off_diagonal, self.n, self.grid) * self.safety


def grid_lipschitz(f: Callable[[NDArray], NDArray], n: int, grid: GridSpec) -> float:
    """Largest finite-difference slope of ``f`` between axis-neighbouring grid nodes."""
    pts = grid.nodes(n)
    shape = (grid.points,) * n
    vals = f(pts)
    vals = vals.reshape(shape + vals.shape[1:])
    h = grid.step
    best = 0.0
    for ax in range(n):
        d = np.abs(np.diff(vals, axis=ax)) / h
        best = max(best, float(d.max()) if d.size else 0.0)
    return best


class ConstantRates(RateFunction):
    family = "constant"

    def __init__(self, Q: ArrayLike, n: int = 1):
        Q = np.array(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ModelError("rate matrix must be square")
        self.N = Q.shape[0]
        self.n = int(n)
        off = np.where(np.eye(self.N, dtype=bool), 0.0, Q)
        if np.any(off < 0):
            i, j = np.argwhere(off < 0)[0]
            raise QMatrixError(f"negative rate q_{i + 1}{j + 1} = {off[i, j]}")
        if not np.all(np.isfinite(off)):
            raise EvaluationError("non-finite constant rate")
        self._off = off

    def off_diagonal(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.broadcast_to(self._off, x.shape[:-1] + self._off.shape).copy()

    def _exact_bounds(self):
        return self._off.copy(), self._off.copy()

    def _exact_lipschitz(self):
        return 0.0

    def to_dict(self) -> dict:
        return {"family": "constant", "Q": self._off.tolist()}


class TanhRates(RateFunction):
    """``q_ij(x) = clip(a_ij + b_ij * tanh(<v_ij, x>), 0, u_ij)``."""

    family = "tanh"

    def __init__(self, a: ArrayLike, b: ArrayLike, v: ArrayLike, u: ArrayLike | None = None):
        a = np.array(a, dtype=np.float64)
        b = np.array(b, dtype=np.float64)
        v = np.array(v, dtype=np.float64)
        N = a.shape[0]
        if a.shape != (N, N) or b.shape != (N, N) or v.ndim != 3 or v.shape[:2] != (N, N):
            raise ModelError("tanh rates need a, b of shape (N, N) and v of shape (N, N, n)")
        u = np.full((N, N), np.inf) if u is None else np.array(u, dtype=np.float64)
        eye = np.eye(N, dtype=bool)
        for name, arr in (("a", a), ("u", u)):
            bad = (arr < 0) & ~eye
            if np.any(bad):
                i, j = np.argwhere(bad)[0]
                raise QMatrixError(f"negative rate parameter {name}_{i + 1}{j + 1} = {arr[i, j]}")
        self.N, self.n = N, v.shape[2]
        self.a = np.where(eye, 0.0, a)
        self.b = np.where(eye, 0.0, b)
        self.v = np.where(eye[..., None], 0.0, v)
        self.u = u

    def off_diagonal(self, x):
        x = np.asarray(x, dtype=np.float64)
        s = np.einsum("ijk,...k->...ij", self.v, x)
        q = np.clip(self.a + self.b * np.tanh(s), 0.0, self.u)
        return np.where(np.eye(self.N, dtype=bool), 0.0, q)

    def _active(self) -> NDArray[np.bool_]:
        return (self.b != 0) & (np.linalg.norm(self.v, axis=-1) > 0)

    def _exact_bounds(self):
        spread = np.where(self._active(), np.abs(self.b), 0.0)
        sup = np.clip(self.a + spread, 0.0, self.u)
        inf = np.clip(self.a - spread, 0.0, self.u)
        eye = np.eye(self.N, dtype=bool)
        return np.where(eye, 0.0, sup), np.where(eye, 0.0, inf)

    def _exact_lipschitz(self):
        act = self._active()
        if not act.any():
            return 0.0
        b = np.where(act, self.b, 1.0)
        # tanh values t for which the rate is unclamped: 0 <= a + b t <= u
        with np.errstate(over="ignore", invalid="ignore"):
            t1, t2 = -self.a / b, (self.u - self.a) / b
        lo = np.maximum(np.minimum(t1, t2), -1.0)
        hi = np.minimum(np.maximum(t1, t2), 1.0)
        ok = act & (lo <= hi)
        peak = np.where((lo <= 0.0) & (hi >= 0.0), 1.0, 1.0 - np.minimum(lo * lo, hi * hi))
        slope = np.abs(self.b) * np.linalg.norm(self.v, axis=-1) * peak
        return float(np.max(np.where(ok, slope, 0.0)))

    def to_dict(self) -> dict:
        d = {"family": "tanh", "a": self.a.tolist(), "b": self.b.tolist(), "v": self.v.tolist()}
        if np.any(np.isfinite(self.u)):
            d["u"] = [[float(x) if np.isfinite(x) else None for x in row] for row in self.u]
        return d


class CallableRates(RateFunction):
    """Programmatic rates: ``func(x)`` maps ``(..., n)`` to off-diagonal ``(..., N, N)``.

    Bounds, ``c_q`` and ``H`` are grid estimates widened by ``safety``.
    """

    family = "programmatic"

    def __init__(self, func: Callable[[NDArray], NDArray], N: int, n: int,
                 grid: GridSpec | None = None, safety: float = DEFAULT_SAFETY):
        self.func, self.N, self.n = func, int(N), int(n)
        self.grid = grid or GridSpec()
        self.safety = float(safety)

    def off_diagonal(self, x):
        x = np.asarray(x, dtype=np.float64)
        q = np.asarray(self.func(x), dtype=np.float64)
        q = np.broadcast_to(q, x.shape[:-1] + (self.N, self.N))
        return np.where(np.eye(self.N, dtype=bool), 0.0, q)


# ----------------------------------------------------------------------
# Coefficients
# ----------------------------------------------------------------------


class PolyDrift:
    """``b(x, i) = A_i x + c_i - k_i |x|^{m_i} x``.

    The damping term ``-k|x|^m x`` is what makes strong dissipativity with
    exponent ``p = m + 2`` available.
    """

    family = "poly"

    def __init__(self, A: ArrayLike, c: ArrayLike | None = None,
                 k: ArrayLike | None = None, m: ArrayLike | None = None):
        A = np.array(A, dtype=np.float64)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ModelError("drift A must have shape (N, n, n)")
        N, n = A.shape[0], A.shape[1]
        self.A = A
        self.c = np.zeros((N, n)) if c is None else np.array(c, dtype=np.float64).reshape(N, n)
        self.k = np.zeros(N) if k is None else np.array(k, dtype=np.float64).reshape(N)
        self.m = np.full(N, 2.0) if m is None else np.array(m, dtype=np.float64).reshape(N)
        if np.any(self.k < 0) or np.any(self.m < 0):
            raise ModelError("drift damping k and exponent m must be nonnegative")
        self.N, self.n = N, n

    def __call__(self, x: NDArray, i: NDArray) -> NDArray:
        idx = np.asarray(i) - 1
        A, c, k, m = self.A[idx], self.c[idx], self.k[idx], self.m[idx]
        out = np.einsum("...jk,...k->...j", A, x) + c
        if np.any(self.k):
            r = np.linalg.norm(x, axis=-1)
            out = out - (k * r ** m)[..., None] * x
        return out

    # closed-form constants -------------------------------------------
    def sym_eig_max(self, i: int) -> float:
        S = 0.5 * (self.A[i - 1] + self.A[i - 1].T)
        return float(np.linalg.eigvalsh(S).max())

    def damping_constant(self, i: int) -> float:
        """``k 2^{-m}``: lower bound of ``<x-y, |x|^m x - |y|^m y> / (k|x-y|^{m+2})`` times k."""
        return float(self.k[i - 1] * 2.0 ** (-self.m[i - 1]))

    def is_bounded(self) -> bool:
        return not (np.any(self.A) or np.any(self.k))

    def to_dict(self) -> dict:
        return {"family": "poly", "A": self.A.tolist(), "c": self.c.tolist(),
                "k": self.k.tolist(), "m": self.m.tolist()}


class CallableDrift:
    """Programmatic drift; ``func(x, i)`` must accept batched ``x`` (..., n) and ``i`` (...)."""

    family = "programmatic"

    def __init__(self, func: Callable, N: int, n: int):
        self.func, self.N, self.n = func, int(N), int(n)

    def __call__(self, x, i):
        return np.asarray(self.func(x, np.asarray(i)), dtype=np.float64)


class ConstantSigma:
    """Diffusion matrix independent of ``x``; one matrix per regime or one for all."""

    family = "constant"

    def __init__(self, S: ArrayLike, N: int):
        S = np.array(S, dtype=np.float64)
        if S.ndim == 0:
            S = S.reshape(1, 1)
        if S.ndim == 2:
            S = np.broadcast_to(S, (N,) + S.shape).copy()
        if S.ndim != 3 or S.shape[0] != N or S.shape[1] != S.shape[2]:
            raise ModelError("sigma must have shape (n, n) or (N, n, n)")
        self.S, self.N, self.n = S, N, S.shape[1]

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.S == self.S[0]))

    def __call__(self, x, i):
        x = np.asarray(x)
        return np.broadcast_to(self.S[np.asarray(i) - 1], x.shape[:-1] + self.S.shape[1:])

    def to_dict(self) -> dict:
        if self.is_constant:
            return {"family": "constant", "S": self.S[0].tolist()}
        return {"family": "constant", "S": self.S.tolist()}


class CallableSigma:
    family = "programmatic"
    is_constant = False

    def __init__(self, func: Callable, N: int, n: int):
        self.func, self.N, self.n = func, int(N), int(n)

    def __call__(self, x, i):
        return np.asarray(self.func(x, np.asarray(i)), dtype=np.float64)


@dataclass(frozen=True)
class Constants:
    """Declared constants; ``None`` means the corresponding assumption is not declared."""

    alpha: tuple[float, ...] | None = None
    C1: float | None = None
    C2: float | None = None
    C3: float | None = None
    beta: float | None = None
    p: float | None = None
    i0: int | None = None
    C4: float | None = None
    c_q: float | None = None

    @property
    def has_A4(self) -> bool:
        return None not in (self.C3, self.beta, self.p, self.i0)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in dataclasses.asdict(self).items() if v is not None}


@dataclass(frozen=True)
class RSDPModel:
    rates: RateFunction
    drift: PolyDrift | CallableDrift
    sigma: ConstantSigma | CallableSigma
    constants: Constants = field(default_factory=Constants)
    name: str = ""

    def __post_init__(self):
        N, n = self.rates.N, self.rates.n
        for part in (self.drift, self.sigma):
            if part.N != N or part.n != n:
                raise ModelError(f"{type(part).__name__} has (N, n)=({part.N}, {part.n}), rates have ({N}, {n})")
        if self.constants.alpha is not None and len(self.constants.alpha) != N:
            raise ModelError("alpha needs one entry per regime")
        if self.constants.i0 is not None and not 1 <= self.constants.i0 <= N:
            raise ModelError(f"i0={self.constants.i0} outside 1..{N}")
        if self.constants.p is not None and self.constants.p <= 2:
            raise AssumptionError(f"A4 needs p > 2, got p={self.constants.p}")

    @property
    def n(self) -> int:
        return self.rates.n

    @property
    def N(self) -> int:
        return self.rates.N

    @property
    def regimes(self) -> RegimeSet:
        return RegimeSet(self.N)

    @property
    def H(self) -> float:
        return self.rates.H

    @property
    def M(self) -> float:
        return self.N * (self.N - 1) * self.H

    @property
    def constant_sigma(self) -> bool:
        return bool(getattr(self.sigma, "is_constant", False))

    def sigma_matrix(self) -> NDArray[np.float64]:
        """The single diffusion matrix of an (H1) model."""
        if not self.constant_sigma:
            raise AssumptionError("H1 required: sigma must be one constant matrix")
        return self.sigma.S[0]

    def with_constants(self, **kw) -> "RSDPModel":
        return dataclasses.replace(self, constants=dataclasses.replace(self.constants, **kw))


# ----------------------------------------------------------------------
# Assumption checks
# ----------------------------------------------------------------------


@dataclass
class Verdict:
    name: str
    method: str
    passed: bool
    evidence: dict[str, Any] = field(default_factory=dict)
    witness: Any = None

    def to_dict(self) -> dict:
        return {"name": self.name, "method": self.method, "passed": self.passed,
                "evidence": _jsonable(self.evidence), "witness": _jsonable(self.witness)}


@dataclass
class AssumptionReport:
    verdicts: dict[str, Verdict]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.verdicts.items() if not v.passed]

    def __getitem__(self, key: str) -> Verdict:
        return self.verdicts[key]

    def __contains__(self, key: str) -> bool:
        return key in self.verdicts

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self.verdicts.items()}


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def rate_bounds(model: RSDPModel) -> RateBounds:
    """Per-pair sup/inf of the rates together with ``H`` and ``M = N(N-1)H``."""
    rates = model.rates
    if not rates.analytic:
        _check_rates_bounded(rates)
    sup, inf = rates.bounds()
    H = rates.H
    return RateBounds(sup=sup, inf=inf, H=H, M=model.N * (model.N - 1) * H,
                      method="analytic" if rates.analytic else "grid-sampled")


def _check_rates_bounded(rates: RateFunction) -> None:
    g = rates.grid
    sups = []
    for scale in (1.0, 2.0, 4.0):
        grid = GridSpec(g.lo * scale, g.hi * scale, g.points)
        vals = rates.off_diagonal(grid.nodes(rates.n))
        if not np.all(np.isfinite(vals)):
            raise EvaluationError("non-finite rate while probing boundedness")
        sups.append(float(vals.max()))
    grow_near, grow_far = sups[1] - sups[0], sups[2] - sups[1]
    if grow_far > 1e-6 * max(1.0, sups[2]) and grow_far >= 0.5 * grow_near:
        raise AssumptionError(f"Q2 violated: rates diverge on growing boxes, sup={sups}")


def _irreducible(adj: NDArray[np.bool_]) -> NDArray[np.bool_]:
    """Strong connectivity of each adjacency matrix in a stack ``(..., N, N)``."""
    N = adj.shape[-1]
    reach = adj | np.eye(N, dtype=bool)
    steps = 1
    while steps < N:
        reach = np.einsum("...ij,...jk->...ik", reach.astype(np.int64), reach.astype(np.int64)) > 0
        steps *= 2
    return reach.all(axis=(-2, -1))


def check_birth_death(model: RSDPModel, grid: GridSpec | None = None) -> dict[str, Any]:
    """Birth-death structure and the pair-sum condition used by the dominating chain.

    For ``N = 2`` this is ``sup q12 + inf q21 <= q12(x) + q21(x)``; for larger
    ``N`` the sums ``q_{i,i+1} + q_{i+1,i}`` must be constant for ``i <= N-2`` and
    the last pair must satisfy the ``N = 2`` inequality.
    """
    rates = model.rates
    N = model.N
    out = {"is_birth_death": rates.is_birth_death, "m1_holds": True,
           "method": "analytic", "witness": None, "detail": []}
    if N == 1:
        return out
    if not out["is_birth_death"]:
        out["m1_holds"] = False
        return out
    sup, inf = rates.bounds()
    grid = grid or (rates.grid if not rates.analytic else GridSpec())
    pts = None
    for i in range(N - 1):
        last = i == N - 2
        const = _pair_sum_constant(rates, i)
        if const is not None:
            lo = const
            method = "analytic"
            witness_x = None
        else:
            if pts is None:
                pts = grid.nodes(model.n)
                offs = rates.off_diagonal(pts)
            sums = offs[:, i, i + 1] + offs[:, i + 1, i]
            k = int(np.argmin(sums))
            lo = float(sums[k])
            method = "grid-sampled"
            witness_x = pts[k]
            out["method"] = "grid-sampled"
            if not last and float(sums.max() - sums.min()) > TOL:
                out["m1_holds"] = False
                out["witness"] = witness_x.tolist()
                out["detail"].append({"pair": [i + 1, i + 2], "varies": [float(sums.min()), float(sums.max())]})
                continue
        if last:
            bar = sup[i, i + 1] + inf[i + 1, i]
            ok = bar <= lo + TOL
            out["detail"].append({"pair": [i + 1, i + 2], "bar_sum": float(bar), "inf_sum": lo, "method": method})
            if not ok:
                out["m1_holds"] = False
                out["witness"] = (witness_x.tolist() if witness_x is not None
                                  else _sum_witness(rates, i, model.n))
    return out


def _pair_sum_constant(rates: RateFunction, i: int) -> float | None:
    """Closed-form constant value of ``q_{i,i+1} + q_{i+1,i}`` when provably constant."""
    j = i + 1
    if isinstance(rates, ConstantRates):
        return float(rates._off[i, j] + rates._off[j, i])
    if isinstance(rates, TanhRates):
        act = rates._active()
        sup, inf = rates.bounds()
        # unclamped on the whole range of tanh
        unclamped = [sup[p] == rates.a[p] + abs(rates.b[p]) and inf[p] == rates.a[p] - abs(rates.b[p])
                     for p in ((i, j), (j, i))]
        if not act[i, j] and not act[j, i]:
            return float(sup[i, j] + sup[j, i])
        if act[i, j] and act[j, i] and all(unclamped):
            v1, v2 = rates.v[i, j], rates.v[j, i]
            b1, b2 = rates.b[i, j], rates.b[j, i]
            if (np.allclose(v1, v2, atol=0) and b1 + b2 == 0) or (np.allclose(v1, -v2, atol=0) and b1 == b2):
                return float(rates.a[i, j] + rates.a[j, i])
    return None


def _sum_witness(rates: RateFunction, i: int, n: int) -> list[float]:
    best, arg = np.inf, None
    for scale in (1.0, 10.0, 100.0):
        pts = GridSpec(-scale, scale, 201 if n == 1 else 21).nodes(n)
        q = rates.off_diagonal(pts)
        s = q[:, i, i + 1] + q[:, i + 1, i]
        k = int(np.argmin(s))
        if s[k] < best:
            best, arg = s[k], pts[k]
    return arg.tolist()


def validate_model(model: RSDPModel, grid: GridSpec | None = None,
                   pair_samples: int = 2000, seed: int = 0) -> AssumptionReport:
    """Check every declared assumption; analytic families get closed-form verdicts.

    ``Q1``-``Q3`` are always checked; ``A1``-``A4``, ``H2`` are checked when their
    constants are declared; ``H1`` is always reported; the dominating-chain
    condition is reported as ``con-q`` (two regimes) or ``m1`` (birth-death).
    Grid-sampled pair checks are deterministic given ``seed``.
    """
    grid = grid or GridSpec()
    pts = grid.nodes(model.n)
    rates = model.rates
    N, n = model.N, model.n
    V: dict[str, Verdict] = {}

    off = rates.off_diagonal(pts)
    if not np.all(np.isfinite(off)):
        k, i, j = np.argwhere(~np.isfinite(off))[0]
        raise EvaluationError(f"non-finite rate q_{i + 1}{j + 1} at x={pts[k].tolist()}")
    if np.any(off < 0):
        k, i, j = np.argwhere(off < 0)[0]
        raise QMatrixError(f"negative rate q_{i + 1}{j + 1}={off[k, i, j]} at x={pts[k].tolist()}")
    rows = _as_generator(off).sum(axis=-1)
    conservative_err = float(np.abs(rows).max()) if rows.size else 0.0

    # Q1 ---------------------------------------------------------------
    if N == 1:
        V["Q1"] = Verdict("Q1", "analytic", True, {"conservative_err": 0.0})
    else:
        sup, inf = rates.bounds()
        if rates.analytic and _irreducible(inf > 0)[()]:
            V["Q1"] = Verdict("Q1", "analytic", True, {"conservative_err": conservative_err})
        elif rates.analytic and not _irreducible(sup > 0)[()]:
            V["Q1"] = Verdict("Q1", "analytic", False, {"reason": "support of rates is reducible"},
                              witness=[0.0] * n)
        else:
            irr = _irreducible(off > 0)
            ok = bool(irr.all())
            V["Q1"] = Verdict("Q1", "grid-sampled", ok,
                              {"conservative_err": conservative_err, "points": len(pts)},
                              witness=None if ok else pts[int(np.argmin(irr))].tolist())

    # Q2 / Q3 ------------------------------------------------------------
    try:
        rb = rate_bounds(model)
        V["Q2"] = Verdict("Q2", rb.method, True, {"H": rb.H, "M": rb.M})
    except AssumptionError as exc:
        V["Q2"] = Verdict("Q2", "grid-sampled", False, {"error": str(exc)})
        rb = None
    c_q = rates.lipschitz
    q3 = Verdict("Q3", "analytic" if rates.analytic else "grid-sampled", bool(np.isfinite(c_q)), {"c_q": c_q})
    if model.constants.c_q is not None:
        q3.evidence["declared"] = model.constants.c_q
        if c_q > model.constants.c_q + TOL:
            q3.passed = False
    V["Q3"] = q3

    # coefficient assumptions ---------------------------------------------
    rng = np.random.default_rng(seed)
    ia = rng.integers(0, len(pts), pair_samples)
    ib = rng.integers(0, len(pts), pair_samples)
    keep = ia != ib
    xa, xb = pts[ia[keep]], pts[ib[keep]]
    c = model.constants
    drift, sigma = model.drift, model.sigma
    analytic_drift = isinstance(drift, PolyDrift)
    analytic_sigma = isinstance(sigma, ConstantSigma)

    _check_finite_coeffs(model, pts)

    V["H1"] = Verdict("H1", "analytic" if analytic_sigma else "grid-sampled",
                      bool(model.constant_sigma), {})

    if c.alpha is not None:
        V["A1"] = _check_A1(model, xa, xb, analytic_drift and analytic_sigma)
    if c.C1 is not None:
        V["A2"] = _check_A2(model, pts, analytic_drift and analytic_sigma)
    if c.C2 is not None:
        V["A3"] = _check_A3(model, pts, analytic_sigma)
    if c.has_A4:
        V["A4"] = _check_A4(model, xa, xb, analytic_drift and analytic_sigma)
    if c.C4 is not None:
        V["H2"] = _check_H2(model, xa, xb, analytic_drift)

    if N >= 2:
        bd = check_birth_death(model, grid)
        name = "con-q" if N == 2 else "m1"
        ok = bd["is_birth_death"] and bd["m1_holds"]
        if N == 2:
            sup, inf = rates.bounds()
            ok = ok and inf[1, 0] > 0
        V[name] = Verdict(name, bd["method"], bool(ok), {"detail": bd["detail"],
                          "is_birth_death": bd["is_birth_death"]}, witness=bd["witness"])
    return AssumptionReport(V)


def _check_finite_coeffs(model: RSDPModel, pts: NDArray) -> None:
    for i in model.regimes.labels:
        lab = np.full(len(pts), i)
        b = model.drift(pts, lab)
        s = model.sigma(pts, lab)
        for name, val in (("drift", b), ("sigma", s)):
            bad = ~np.isfinite(val.reshape(len(pts), -1)).all(axis=1)
            if np.any(bad):
                raise EvaluationError(f"non-finite {name} at x={pts[np.argmax(bad)].tolist()}, regime {i}")


def _sigma_gap(model, xa, xb, i):
    la = np.full(len(xa), i)
    d = model.sigma(xa, la) - model.sigma(xb, la)
    return np.sum(d * d, axis=(-2, -1))


def _check_A1(model, xa, xb, analytic) -> Verdict:
    alpha = np.asarray(model.constants.alpha, dtype=float)
    if analytic:
        need = np.array([2 * model.drift.sym_eig_max(i) for i in model.regimes.labels])
        bad = np.flatnonzero(alpha < need - TOL)
        wit = None
        if bad.size:
            i = int(bad[0]) + 1
            S = 0.5 * (model.drift.A[i - 1] + model.drift.A[i - 1].T)
            w, vec = np.linalg.eigh(S)
            wit = {"regime": i, "x": (1e-3 * vec[:, -1]).tolist(), "y": [0.0] * model.n}
        return Verdict("A1", "analytic", not bad.size, {"alpha": alpha, "required": need}, wit)
    worst, wit = np.inf, None
    d2 = np.sum((xa - xb) ** 2, axis=-1)
    for i in model.regimes.labels:
        la = np.full(len(xa), i)
        lhs = 2 * np.sum((xa - xb) * (model.drift(xa, la) - model.drift(xb, la)), axis=-1) \
            + 2 * _sigma_gap(model, xa, xb, i)
        slack = alpha[i - 1] * d2 - lhs
        k = int(np.argmin(slack))
        if slack[k] < worst:
            worst, wit = slack[k], {"regime": i, "x": xa[k].tolist(), "y": xb[k].tolist()}
    ok = worst >= -TOL
    return Verdict("A1", "grid-sampled", ok, {"min_slack": worst}, None if ok else wit)


def _check_A2(model, pts, analytic) -> Verdict:
    C1 = model.constants.C1
    vals = []
    for i in model.regimes.labels:
        lab = np.full(len(pts), i)
        vals.append(np.linalg.norm(model.drift(pts, lab), axis=-1)
                    + np.sqrt(np.sum(model.sigma(pts, lab) ** 2, axis=(-2, -1))))
    vals = np.stack(vals)
    box_sup = float(vals.max())
    if analytic and not model.drift.is_bounded():
        # unbounded drift: walk outward until the declared bound is exceeded
        i = int(np.argmax(vals.max(axis=1))) + 1
        x = pts[int(np.argmax(vals[i - 1]))].copy()
        if not np.any(x):
            x = np.ones(model.n)
        for _ in range(200):
            lab = np.array([i])
            v = np.linalg.norm(model.drift(x[None], lab)) + np.linalg.norm(model.sigma(x[None], lab))
            if v > C1:
                break
            x = 2 * x
        return Verdict("A2", "analytic", False,
                       {"reason": "drift is unbounded on R^n", "box_sup": box_sup, "C1": C1},
                       {"regime": i, "x": x.tolist()})
    if analytic:
        sup = max(float(np.linalg.norm(model.drift.c[i - 1]) + np.linalg.norm(model.sigma.S[i - 1]))
                  for i in model.regimes.labels)
        return Verdict("A2", "analytic", sup <= C1 + TOL, {"sup": sup, "C1": C1})
    k = np.unravel_index(int(np.argmax(vals)), vals.shape)
    ok = box_sup <= C1 + TOL
    return Verdict("A2", "grid-sampled", ok, {"box_sup": box_sup, "C1": C1},
                   None if ok else {"regime": int(k[0]) + 1, "x": pts[k[1]].tolist()})


def _check_A3(model, pts, analytic) -> Verdict:
    C2 = model.constants.C2
    if analytic:
        lam = [float(np.linalg.eigvalsh(0.5 * (S + S.T)).min()) for S in model.sigma.S]
        return Verdict("A3", "analytic", min(lam) >= C2 - TOL, {"min_eig": lam, "C2": C2})
    worst, wit = np.inf, None
    for i in model.regimes.labels:
        S = model.sigma(pts, np.full(len(pts), i))
        lam = np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))[..., 0]
        k = int(np.argmin(lam))
        if lam[k] < worst:
            worst, wit = float(lam[k]), {"regime": i, "x": pts[k].tolist()}
    ok = worst >= C2 - TOL
    return Verdict("A3", "grid-sampled", ok, {"min_eig": worst, "C2": C2}, None if ok else wit)


def _A4_slack(model, x, y):
    c = model.constants
    i = c.i0
    lab = np.full(len(x), i)
    r = np.linalg.norm(x - y, axis=-1)
    lhs = np.sum((x - y) * (model.drift(x, lab) - model.drift(y, lab)), axis=-1) + _sigma_gap(model, x, y, i)
    return c.beta * r ** 2 - c.C3 * r ** c.p - lhs


def _check_A4(model, xa, xb, analytic) -> Verdict:
    c = model.constants
    ev = {"C3": c.C3, "beta": c.beta, "p": c.p, "i0": c.i0}
    # symmetric pairs x = -y along each axis and the sampled grid pairs
    n = model.n
    scales = np.geomspace(1e-2, 1e2, 41)
    sym = np.concatenate([np.outer(scales, e) for e in np.eye(n)])
    x = np.concatenate([xa, sym, sym])
    y = np.concatenate([xb, -sym, np.zeros_like(sym)])
    slack = _A4_slack(model, x, y)
    k = int(np.argmin(slack))
    wit = None if slack[k] >= -TOL else {"x": x[k].tolist(), "y": y[k].tolist(), "slack": float(slack[k])}
    if analytic:
        d = model.drift
        i = c.i0
        beta_min = d.sym_eig_max(i)
        C3_max = d.damping_constant(i)
        p_ok = d.k[i - 1] > 0 and math.isclose(c.p, d.m[i - 1] + 2)
        ev.update(beta_min=beta_min, C3_max=C3_max)
        ok = p_ok and c.beta >= beta_min - TOL and c.C3 <= C3_max + TOL
        if not ok and wit is None:
            ev["note"] = "sufficient condition fails; no violating pair found"
        return Verdict("A4", "analytic", bool(ok), ev, None if ok else wit)
    ok = wit is None
    ev["min_slack"] = float(slack[k])
    return Verdict("A4", "grid-sampled", ok, ev, wit)


def _check_H2(model, xa, xb, analytic) -> Verdict:
    C4 = model.constants.C4
    if analytic and not np.any(model.drift.k):
        lip = max(float(np.linalg.norm(A, 2)) for A in model.drift.A)
        return Verdict("H2", "analytic", lip <= C4 + TOL, {"lipschitz": lip, "C4": C4})
    if analytic:
        i = int(np.argmax(model.drift.k)) + 1
        x = np.ones(model.n)
        for _ in range(200):
            lab = np.array([i])
            y = x * (1 + 1e-6)
            slope = np.linalg.norm(model.drift(y[None], lab) - model.drift(x[None], lab)) / np.linalg.norm(y - x)
            if slope > C4:
                break
            x = 2 * x
        return Verdict("H2", "analytic", False, {"reason": "superlinear drift is not globally Lipschitz",
                                                  "C4": C4}, {"regime": i, "x": x.tolist(), "y": y.tolist()})
    worst, wit = 0.0, None
    d = np.linalg.norm(xa - xb, axis=-1)
    for i in model.regimes.labels:
        la = np.full(len(xa), i)
        s = np.linalg.norm(model.drift(xa, la) - model.drift(xb, la), axis=-1) / d
        k = int(np.argmax(s))
        if s[k] > worst:
            worst, wit = float(s[k]), {"regime": i, "x": xa[k].tolist(), "y": xb[k].tolist()}
    ok = worst <= C4 + TOL
    return Verdict("H2", "grid-sampled", ok, {"lipschitz": worst, "C4": C4}, None if ok else wit)
