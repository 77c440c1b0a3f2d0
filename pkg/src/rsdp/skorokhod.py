"""Skorokhod representation of the switching component.

For each state ``x`` the rates are laid out as consecutive left-closed,
right-open intervals on ``[0, M)`` in row-major order (row 1 pairs
``j = 2..N``, then row 2, ...).  A Poisson point process on ``[0, T] x [0, M]``
drives every jump: at a point ``(t, z)`` the regime moves from ``i`` to ``l``
exactly when ``z`` falls in the interval of pair ``(i, l)`` built at the
current state.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .model import QMatrixError, RateFunction
from .rng import stream


@dataclass(frozen=True)
class IntervalTable:
    entries: tuple[tuple[int, int, float, float], ...]
    x: tuple[float, ...]

    @property
    def total(self) -> float:
        return self.entries[-1][3] if self.entries else 0.0

    def interval(self, i: int, j: int) -> tuple[float, float]:
        for a, b, lo, hi in self.entries:
            if (a, b) == (i, j):
                return lo, hi
        raise KeyError((i, j))


def interval_edges(off: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    """Lower and upper interval ends for a stack of off-diagonal rate matrices.

    Diagonal entries are zero so they occupy empty intervals and leave the
    row-major running sum unchanged.  Lower ends are the previous upper ends,
    so the layout tiles ``[0, total)`` without floating-point gaps.
    """
    shape = off.shape
    flat = off.reshape(shape[:-2] + (-1,))
    hi = np.cumsum(flat, axis=-1)
    lo = np.concatenate([np.zeros(shape[:-2] + (1,)), hi[..., :-1]], axis=-1)
    return lo.reshape(shape), hi.reshape(shape)


def build_intervals(rates: RateFunction, x: ArrayLike) -> IntervalTable:
    x = np.asarray(x, dtype=np.float64).reshape(rates.n)
    off = rates.off_diagonal(x)
    if np.any(off < 0):
        i, j = np.argwhere(off < 0)[0]
        raise QMatrixError(f"negative rate q_{i + 1}{j + 1}={off[i, j]} at x={x.tolist()}")
    lo, hi = interval_edges(off)
    N = rates.N
    entries = tuple((i + 1, j + 1, float(lo[i, j]), float(hi[i, j]))
                    for i in range(N) for j in range(N) if i != j)
    return IntervalTable(entries, tuple(x.tolist()))


def jump_batch(off: NDArray[np.float64], regime: NDArray[np.int64], z: NDArray[np.float64]) -> NDArray[np.int64]:
    """Vectorised ``h``: displacement ``l - i`` for marks ``z`` at the current tables.

    ``off`` has shape ``(P, N, N)``, ``regime`` (1-based) and ``z`` shape ``(P,)``.
    """
    lo, hi = interval_edges(off)
    rows = np.arange(len(regime))
    row_lo, row_hi = lo[rows, regime - 1], hi[rows, regime - 1]
    zz = z[:, None]
    hit = (row_lo <= zz) & (zz < row_hi)
    hit[rows, regime - 1] = False
    any_hit = hit.any(axis=1)
    target = np.argmax(hit, axis=1) + 1
    return np.where(any_hit, target - regime, 0)


def h_eval(table: IntervalTable, i: int, z: float) -> int:
    for a, b, lo, hi in table.entries:
        if a == i and lo <= z < hi:
            return b - i
    return 0


# ----------------------------------------------------------------------
# Poisson drive
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class PoissonDrive:
    T: float
    M: float
    times: NDArray[np.float64]
    marks: NDArray[np.float64]
    seed: tuple = ()

    def __len__(self) -> int:
        return len(self.times)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "time", "mark"])
        for k, (t, z) in enumerate(zip(self.times, self.marks), start=1):
            w.writerow([k, repr(float(t)), repr(float(z))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, T: float, M: float) -> "PoissonDrive":
        rows = list(csv.DictReader(io.StringIO(text)))
        times = np.array([float(r["time"]) for r in rows])
        marks = np.array([float(r["mark"]) for r in rows])
        return cls(T, M, times, marks)


def sample_drive(T: float, M: float, seed: int | np.random.Generator = 0, path: int = 0) -> PoissonDrive:
    """Jump times with Exponential(M) gaps on ``(0, T]`` and Uniform[0, M) marks.

    An integer ``seed`` selects the stream ``hash(seed, "drive", path)``.
    """
    if T <= 0 or M < 0:
        raise ValueError("need T > 0 and M >= 0")
    if isinstance(seed, np.random.Generator):
        rng, prov = seed, ()
    else:
        rng, prov = stream(seed, "drive", path), (int(seed), "drive", int(path))
    if M == 0:
        return PoissonDrive(T, M, np.empty(0), np.empty(0), prov)
    chunk = int(M * T + 6 * np.sqrt(M * T) + 16)
    times = np.cumsum(rng.exponential(1.0 / M, chunk))
    while times[-1] <= T:
        more = times[-1] + np.cumsum(rng.exponential(1.0 / M, chunk))
        times = np.concatenate([times, more])
    k = int(np.searchsorted(times, T, side="right"))
    times = times[:k]
    marks = rng.uniform(0.0, M, k)
    return PoissonDrive(T, M, times, marks, prov)


def stack_drives(drives: Sequence[PoissonDrive]) -> tuple[NDArray, NDArray]:
    """Pad a batch of drives into ``(P, K)`` arrays; padding times are ``+inf``."""
    K = max((len(d) for d in drives), default=0)
    times = np.full((len(drives), K + 1), np.inf)
    marks = np.zeros((len(drives), K + 1))
    for p, d in enumerate(drives):
        times[p, :len(d)] = d.times
        marks[p, :len(d)] = d.marks
    return times, marks


# ----------------------------------------------------------------------
# Switch paths
# ----------------------------------------------------------------------


@dataclass
class SwitchPath:
    """Piecewise-constant regime path.

    ``event_regimes[k]`` is the regime right after the ``k``-th drive point,
    whether or not it changed; ``times`` and ``regimes`` list actual switches.
    """

    i0: int
    event_times: NDArray[np.float64]
    event_regimes: NDArray[np.int64]
    T: float = np.inf
    times: NDArray[np.float64] = field(init=False)
    regimes: NDArray[np.int64] = field(init=False)

    def __post_init__(self):
        prev = np.concatenate([[self.i0], self.event_regimes[:-1]]).astype(np.int64)
        moved = self.event_regimes != prev
        self.times = self.event_times[moved]
        self.regimes = self.event_regimes[moved]

    def at(self, t: float | NDArray) -> NDArray[np.int64]:
        k = np.searchsorted(self.event_times, t, side="right")
        seq = np.concatenate([[self.i0], self.event_regimes]).astype(np.int64)
        return seq[k]

    def occupation(self, weights: ArrayLike, t: float) -> float:
        """``int_0^t weights[L(s)] ds`` computed exactly from the jump record."""
        w = np.asarray(weights, dtype=np.float64)
        edges = np.concatenate([[0.0], self.times[self.times < t], [t]])
        regs = np.concatenate([[self.i0], self.regimes[self.times < t]])
        return float(np.sum(w[regs - 1] * np.diff(edges)))


def evolve_switch(rates: RateFunction, drive: PoissonDrive,
                  x_provider: Callable[[float], ArrayLike], i0: int) -> SwitchPath:
    """Run the regime through the drive, reading the state from ``x_provider(t)``."""
    regime = int(i0)
    out = np.empty(len(drive), dtype=np.int64)
    for k, (t, z) in enumerate(zip(drive.times, drive.marks)):
        x = np.asarray(x_provider(float(t)), dtype=np.float64).reshape(1, rates.n)
        regime += int(jump_batch(rates.off_diagonal(x), np.array([regime]), np.array([z]))[0])
        out[k] = regime
    return SwitchPath(int(i0), drive.times.copy(), out, drive.T)


def mismatch_time(a: SwitchPath, b: SwitchPath, T: float) -> float:
    """Lebesgue measure of ``{s <= T: a(s) != b(s)}`` for paths on one drive."""
    if not np.array_equal(a.event_times, b.event_times):
        raise ValueError("switch paths must share the same drive")
    return float(mismatch_batch(a.i0, b.i0, a.event_times[None], a.event_regimes[None],
                                b.event_regimes[None], T)[0])


def mismatch_batch(i0a, i0b, times: NDArray, regs_a: NDArray, regs_b: NDArray, T: float) -> NDArray:
    """Vectorised mismatch measure over paths that share per-path event times."""
    P = times.shape[0]
    i0a = np.broadcast_to(np.asarray(i0a), (P,))
    i0b = np.broadcast_to(np.asarray(i0b), (P,))
    t = np.minimum(times, T)
    edges = np.concatenate([np.zeros((P, 1)), t, np.full((P, 1), T)], axis=1)
    ra = np.concatenate([i0a[:, None], regs_a], axis=1)
    rb = np.concatenate([i0b[:, None], regs_b], axis=1)
    return np.sum((ra != rb) * np.diff(edges, axis=1), axis=1)


def symm_diff_measure(rates: RateFunction, x: ArrayLike, y: ArrayLike, i: int, j: int) -> float:
    """``|Gamma_ij(x) symmetric-difference Gamma_ij(y)|`` by interval arithmetic."""
    pts = np.stack([np.asarray(x, dtype=np.float64).reshape(rates.n),
                    np.asarray(y, dtype=np.float64).reshape(rates.n)])
    lo, hi = interval_edges(rates.off_diagonal(pts))
    return float(symm_diff_batch(lo[0, i - 1, j - 1], hi[0, i - 1, j - 1],
                                 lo[1, i - 1, j - 1], hi[1, i - 1, j - 1]))


def symm_diff_batch(a_lo, a_hi, b_lo, b_hi):
    overlap = np.maximum(0.0, np.minimum(a_hi, b_hi) - np.maximum(a_lo, b_lo))
    return (a_hi - a_lo) + (b_hi - b_lo) - 2.0 * overlap
