"""Empirical measures on R^n x S and the Wasserstein distance for
``rho((x, i), (y, j)) = 1{i != j} + |x - y|``."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .model import RSDPModel, validate_model
from .rng import stream

SAMPLE_CAP = 2000


class SampleCapError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    x: tuple[float, ...]
    i: int


@dataclass
class EmpiricalMeasure:
    """Equal-weight atoms at ``(x[k], regimes[k])``."""

    x: NDArray[np.float64]
    regimes: NDArray[np.int64]

    def __post_init__(self):
        self.regimes = np.asarray(self.regimes, dtype=np.int64).reshape(-1)
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim == 1:
            self.x = self.x.reshape(len(self.regimes), -1)
        if len(self.regimes) == 0:
            raise ValueError("empirical measure needs at least one sample")
        if self.x.shape[0] != len(self.regimes):
            raise ValueError("x and regimes must have the same number of samples")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("samples must be finite")

    @classmethod
    def from_samples(cls, samples: Sequence[LabeledSample]) -> "EmpiricalMeasure":
        return cls(np.array([s.x for s in samples], dtype=np.float64), [s.i for s in samples])

    def __len__(self) -> int:
        return len(self.regimes)

    def subsample(self, m: int, seed: int = 0) -> "EmpiricalMeasure":
        if m >= len(self):
            return self
        idx = np.sort(stream(seed, "subsample", len(self)).choice(len(self), m, replace=False))
        return EmpiricalMeasure(self.x[idx], self.regimes[idx])


def rho(a: LabeledSample | tuple, b: LabeledSample | tuple) -> float:
    xa, ia = (a.x, a.i) if isinstance(a, LabeledSample) else a
    xb, ib = (b.x, b.i) if isinstance(b, LabeledSample) else b
    d = np.asarray(xa, dtype=np.float64) - np.asarray(xb, dtype=np.float64)
    return float(ia != ib) + float(np.linalg.norm(d))


def rho_matrix(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> NDArray[np.float64]:
    return cdist(mu.x, nu.x) + (mu.regimes[:, None] != nu.regimes[None, :])


def wasserstein_rho(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = SAMPLE_CAP,
                    seed: int = 0) -> float:
    """Exact optimal transport cost between two empirical measures.

    Unequal sizes are balanced by subsampling the larger measure
    deterministically from ``seed``.
    """
    m = min(len(mu), len(nu))
    if m > cap:
        raise SampleCapError(f"{m} samples exceed the cap {cap}; subsample first")
    mu, nu = mu.subsample(m, seed), nu.subsample(m, seed + 1)
    C = rho_matrix(mu, nu)
    r, c = linear_sum_assignment(C)
    return float(C[r, c].sum() / m)


def regime_mass_gap(mu: EmpiricalMeasure, nu: EmpiricalMeasure, N: int | None = None) -> float:
    """Total-variation distance of the regime marginals, a lower bound for ``W_rho``."""
    N = int(max(mu.regimes.max(), nu.regimes.max())) if N is None else N
    a = np.bincount(mu.regimes - 1, minlength=N) / len(mu)
    b = np.bincount(nu.regimes - 1, minlength=N) / len(nu)
    return float(0.5 * np.abs(a - b).sum())


# ----------------------------------------------------------------------
# Convergence to the invariant measure
# ----------------------------------------------------------------------


@dataclass
class ConvergenceResult:
    times: list[float]
    pairs: list[tuple[int, int]]
    distances: NDArray[np.float64]
    noise_floor: list[float]
    probe: list[float] | None
    probe_lag: float
    warnings: list[str]

    def rows(self) -> list[dict]:
        out = []
        for k, t in enumerate(self.times):
            row = {"time": t}
            for c, (a, b) in enumerate(self.pairs):
                row[f"init{a}-init{b}"] = float(self.distances[k, c])
            row["noise_floor"] = self.noise_floor[k]
            if self.probe is not None:
                row["stationarity"] = self.probe[k]
            out.append(row)
        return out

    def to_dict(self) -> dict:
        return {"times": self.times, "pairs": [list(p) for p in self.pairs],
                "distances": self.distances.tolist(), "noise_floor": self.noise_floor,
                "stationarity": self.probe, "probe_lag": self.probe_lag, "warnings": self.warnings}


def init_tag(x0, i0) -> str:
    x = np.asarray(x0, dtype=np.float64).reshape(-1)
    return "init[" + ",".join(repr(float(v)) for v in x) + f";{int(i0)}]"


def invariant_convergence(model: RSDPModel, inits: Sequence[tuple], times: Sequence[float], paths: int,
                          seed: int, delta: float = 1e-2, probe_lag: float = 5.0, cap: int = SAMPLE_CAP,
                          workers: int = 1, check: bool = True) -> ConvergenceResult:
    """``W_rho`` between the time-t laws started from every pair of initial conditions.

    Random streams are keyed by the initial condition itself, so repeated
    initial conditions share their paths.  The noise floor at
    each time is the distance between the two halves of the first initial
    condition's sample (which has ``2 * paths`` paths for this purpose).  The
    stationarity probe compares the first initial condition's laws at ``t``
    and ``t + probe_lag``, using the second half of its sample at the later
    time so the two samples are independent.
    """
    from .integrate import simulate_observations
    warn = []
    if check:
        rep = validate_model(model)
        if not rep.passed:
            warn.append("hypotheses not verified: " + ", ".join(rep.failed()))
            warnings.warn(warn[-1], stacklevel=2)
    times = [float(t) for t in times]
    obs = sorted(set(times) | ({t + probe_lag for t in times} if probe_lag else set()))
    T = max(obs)
    laws = []
    for k, (x0, i0) in enumerate(inits):
        m = 2 * paths if k == 0 else paths
        X, L = simulate_observations(model, delta, T, obs, m, seed, x0, i0, tag=init_tag(x0, i0),
                                     workers=workers)
        laws.append((X, L))
    col = {t: obs.index(t) for t in obs}

    def law(k, t, part=slice(None)):
        X, L = laws[k]
        return EmpiricalMeasure(X[part, col[t]], L[part, col[t]])

    first, second = slice(0, paths), slice(paths, 2 * paths)
    pairs = [(a, b) for a in range(len(inits)) for b in range(a + 1, len(inits))]
    D = np.zeros((len(times), len(pairs)))
    floor, probe = [], [] if probe_lag else None
    for r, t in enumerate(times):
        for c, (a, b) in enumerate(pairs):
            D[r, c] = wasserstein_rho(law(a, t, first if a == 0 else slice(None)),
                                      law(b, t, first if b == 0 else slice(None)), cap, seed)
        floor.append(wasserstein_rho(law(0, t, first), law(0, t, second), cap, seed))
        if probe_lag:
            probe.append(wasserstein_rho(law(0, t, first), law(0, t + probe_lag, second), cap, seed))
    return ConvergenceResult(times, pairs, D, floor, probe, probe_lag, warn)
