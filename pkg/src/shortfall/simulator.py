"""Discrete-time buffer and shortfall simulation.

Each slot, user ``i`` receives ``S_i(t)`` into its buffer, then tries to
consume ``F_i(t)``::

    kappa_i(t) = (F_i(t) - (Q_i(t) + S_i(t)))^+
    Q_i(t+1)   = min((Q_i(t) + S_i(t) - F_i(t))^+, B)

Policies are static: ``S_i(t) = s_i c(t) / c_bar`` with ``c_bar`` the analytic
mean of the availability process.  Randomness comes from Philox streams keyed
by ``(seed, stream)``, stream 0 for availability and ``i + 1`` for user ``i``,
so adding users or extending the horizon leaves existing draws unchanged.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .domain import (
    Allocation,
    CostFunction,
    DomainError,
    FeasibilityError,
    PreconditionError,
    _check_keys,
)

N_BATCHES = 100
_CHUNK = 1 << 20


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), stream]))


def _uniforms(seed: int, stream: int, T: int) -> np.ndarray:
    return _stream(seed, stream).random(T)


# ---------------------------------------------------------------------------
# Processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantAvailability:
    level: float
    kind = "constant"

    @property
    def mean(self) -> float:
        return self.level

    def draw(self, seed: int, T: int) -> np.ndarray:
        return np.full(T, self.level)

    def to_dict(self):
        return {"kind": self.kind, "level": self.level}


@dataclass(frozen=True)
class IidUniformAvailability:
    lo: float
    hi: float
    kind = "iid_uniform"

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def draw(self, seed: int, T: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * _uniforms(seed, 0, T)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class CyclostationaryAvailability:
    """Periodic phase means plus iid uniform noise in ``[-noise, noise]``.

    ``noise`` may not exceed the smallest phase mean, so ``c(t) >= 0`` and
    the long-run mean is the average of the phase means.
    """

    phase_means: tuple[float, ...]
    noise: float = 0.0
    kind = "cyclostationary"

    @property
    def period(self) -> int:
        return len(self.phase_means)

    @property
    def mean(self) -> float:
        return math.fsum(self.phase_means) / self.period

    def draw(self, seed: int, T: int) -> np.ndarray:
        base = np.resize(np.asarray(self.phase_means, dtype=float), T)
        if self.noise == 0:
            return base
        return base + self.noise * (2.0 * _uniforms(seed, 0, T) - 1.0)

    def to_dict(self):
        return {"kind": self.kind, "phase_means": list(self.phase_means), "noise": self.noise}


@dataclass(frozen=True)
class DeterministicConsumption:
    rate: float
    kind = "deterministic"

    @property
    def mean(self) -> float:
        return self.rate

    @property
    def peak(self) -> float:
        return self.rate

    def draw(self, seed: int, stream: int, T: int) -> np.ndarray:
        return np.full(T, self.rate)

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class BernoulliConsumption:
    """``peak`` with probability ``p``, else 0; mean ``peak * p``."""

    peak: float
    p: float
    kind = "iid_bernoulli"

    @property
    def mean(self) -> float:
        return self.peak * self.p

    def draw(self, seed: int, stream: int, T: int) -> np.ndarray:
        return np.where(_uniforms(seed, stream, T) < self.p, self.peak, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "peak": self.peak, "p": self.p}


@dataclass(frozen=True)
class UniformConsumption:
    lo: float
    hi: float
    kind = "iid_uniform"

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def peak(self) -> float:
        return self.hi

    def draw(self, seed: int, stream: int, T: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * _uniforms(seed, stream, T)

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo, "hi": self.hi}


AVAILABILITY_KINDS = {
    "constant": (ConstantAvailability, {"level"}),
    "iid_uniform": (IidUniformAvailability, {"lo", "hi"}),
    "cyclostationary": (CyclostationaryAvailability, {"phase_means", "noise"}),
}
CONSUMPTION_KINDS = {
    "deterministic": (DeterministicConsumption, {"rate"}),
    "iid_bernoulli": (BernoulliConsumption, {"peak", "p"}),
    "iid_uniform": (UniformConsumption, {"lo", "hi"}),
}


def _from_dict(table, d, what):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in table:
        raise ValueError(f"unknown {what} kind {kind!r}; expected one of {sorted(table)}")
    cls, keys = table[kind]
    _check_keys(f"{kind} {what}", d, keys)
    if "phase_means" in d:
        d["phase_means"] = tuple(float(x) for x in d["phase_means"])
    return cls(**{k: (float(v) if not isinstance(v, tuple) else v) for k, v in d.items()})


def availability_from_dict(d):
    return _from_dict(AVAILABILITY_KINDS, d, "availability")


def consumption_from_dict(d):
    return _from_dict(CONSUMPTION_KINDS, d, "consumption")


def availability_problems(proc) -> list[str]:
    if isinstance(proc, ConstantAvailability):
        ok = proc.level > 0
    elif isinstance(proc, IidUniformAvailability):
        ok = 0 <= proc.lo <= proc.hi and proc.hi > 0
    else:
        ok = (proc.period >= 1 and min(proc.phase_means) >= 0
              and 0 <= proc.noise <= min(proc.phase_means) and proc.mean > 0)
    return [] if ok else [f"invalid availability process {proc!r}"]


def consumption_problems(proc) -> list[str]:
    if isinstance(proc, DeterministicConsumption):
        ok = proc.rate >= 0
    elif isinstance(proc, BernoulliConsumption):
        ok = proc.peak >= 0 and 0 <= proc.p <= 1
    else:
        ok = 0 <= proc.lo <= proc.hi
    return [] if ok else [f"invalid consumption process {proc!r}"]


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------


def step(Q: float, S: float, F: float, B: float | None = None) -> tuple[float, float]:
    """One slot of the recurrence: ``(Q_next, shortfall)``.

    The shortfall is taken before capping, so a full buffer wastes
    resource rather than hiding shortfall.
    """
    if Q < 0 or S < 0 or F < 0:
        raise DomainError("queue, service and consumption must be non-negative")
    if B is not None and Q > B:
        raise DomainError(f"queue level {Q} exceeds buffer cap {B}")
    x = Q + S - F
    kappa = max(-x, 0.0)
    q_next = max(x, 0.0)
    if B is not None:
        q_next = min(q_next, B)
    return q_next, kappa


@dataclass(frozen=True, eq=False)
class SimulationResult:
    horizon: int
    mean_shortfall: np.ndarray
    shortfall_stderr: np.ndarray
    mean_service: np.ndarray
    mean_consumption: np.ndarray
    final_queue: np.ndarray
    max_queue: np.ndarray
    queue_growth: np.ndarray
    zero_queue_slots: np.ndarray
    realized_availability: float
    max_overallocation: float
    buffer_cap: float | None = None
    dissatisfaction: np.ndarray | None = None
    normalized_dissatisfaction: float | None = None
    increment_std: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


def batch_stderr(x: np.ndarray, batches: int = N_BATCHES) -> float:
    """Batch-means standard error of the mean of an autocorrelated series."""
    L = x.size // batches
    if L == 0:
        return math.nan
    means = x[: L * batches].reshape(batches, L).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(batches))


def _policy_services(weights: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, float]:
    """Per-slot services ``w_i c(t)`` shrunk where rounding overshoots ``c(t)``."""
    S = weights[:, None] * c[None, :]
    total = S.sum(axis=0)
    over = total > c
    shrink = 1.0 - 4.0 * max(weights.size, 1) * np.finfo(float).eps
    while np.any(over):
        S[:, over] *= shrink
        total = S.sum(axis=0)
        over = total > c
    return S, float(np.max(total - c)) if c.size else 0.0


def run(users: Sequence, availability, policy: Allocation, T: int,
        B: float | None = None, seed: int = 0,
        costs: Sequence[CostFunction] | None = None,
        trace_path=None, backend: str | None = None) -> SimulationResult:
    """Simulate ``T`` slots of the proportional policy built from ``policy``."""
    if T < 1:
        raise PreconditionError("horizon T must be at least 1")
    m = len(users)
    if policy.m != m:
        raise ValueError(f"policy has {policy.m} users, simulation has {m}")
    c_bar = availability.mean
    if c_bar <= 0:
        raise PreconditionError("availability must have a positive long-run mean")
    rates = policy.rates
    if np.any(rates < 0) or math.fsum(rates) > c_bar + 1e-9:
        raise FeasibilityError(
            f"policy uses {math.fsum(rates):.6g} but availability averages {c_bar:.6g}")
    cap = math.inf if B is None else float(B)
    if cap < 0:
        raise DomainError("buffer cap must be non-negative")
    kern = _backend.get_kernels(backend)
    weights = rates / c_bar
    wsum = math.fsum(weights)
    if wsum > 1.0:  # within feasibility tolerance; never hand out more than c(t)
        weights = weights / wsum

    c_all = np.asarray(availability.draw(seed, T), dtype=float)
    F_all = (np.stack([u.draw(seed, i + 1, T) for i, u in enumerate(users)]).astype(float)
             if m else np.zeros((0, T)))
    q = np.zeros(m)
    kappa_all = np.empty((m, T))
    q_max = np.zeros(m)
    zero_slots = np.zeros(m, dtype=np.int64)
    service_sum = np.zeros(m)
    inc_sum = np.zeros(m)
    inc_sq = np.zeros(m)
    max_over = -math.inf
    writer = None
    fh = None
    if trace_path is not None:
        fh = open(trace_path, "w", newline="")
        writer = csv.writer(fh)
        header = ["t", "c"]
        for i in range(m):
            header += [f"S_{i}", f"F_{i}", f"Q_{i}", f"kappa_{i}"]
        writer.writerow(header)
    try:
        for start in range(0, T, _CHUNK):
            stop = min(start + _CHUNK, T)
            c = c_all[start:stop]
            S, over = _policy_services(weights, c)
            max_over = max(max_over, over)
            service_sum += S.sum(axis=1)
            inc = F_all[:, start:stop] - S
            inc_sum += inc.sum(axis=1)
            inc_sq += np.square(inc).sum(axis=1)
            qpath = np.empty((m, stop - start))
            for i in range(m):
                q[i] = kern.queue_path(
                    np.ascontiguousarray(S[i]), np.ascontiguousarray(F_all[i, start:stop]),
                    cap, q[i], qpath[i], kappa_all[i, start:stop])
                after = np.append(qpath[i, 1:], q[i])
                q_max[i] = max(q_max[i], float(after.max()))
                zero_slots[i] += int(np.count_nonzero(after == 0.0))
            if writer is not None:
                _write_trace(writer, start, c, S, F_all[:, start:stop], qpath, kappa_all[:, start:stop])
    finally:
        if fh is not None:
            fh.close()

    kbar = kappa_all.mean(axis=1)
    stderr = np.array([batch_stderr(kappa_all[i]) for i in range(m)])
    dissat = None
    total = None
    if costs is not None:
        dissat = np.array([float(cst(k)) for cst, k in zip(costs, kbar)])
        total = float(dissat.sum() / m) if m else 0.0
    return SimulationResult(
        horizon=T,
        mean_shortfall=kbar,
        shortfall_stderr=stderr,
        mean_service=service_sum / T,
        mean_consumption=F_all.mean(axis=1),
        final_queue=q.copy(),
        max_queue=q_max,
        queue_growth=q / T,
        zero_queue_slots=zero_slots,
        realized_availability=float(c_all.mean()),
        max_overallocation=max_over,
        buffer_cap=B,
        dissatisfaction=dissat,
        normalized_dissatisfaction=total,
        increment_std=np.sqrt(np.maximum(inc_sq / T - np.square(inc_sum / T), 0.0)),
    )


def _write_trace(writer, start, c, S, F, Q, kappa):
    m, n = S.shape
    cols = [np.arange(start + 1, start + n + 1), c]
    for i in range(m):
        cols += [S[i], F[i], Q[i], kappa[i]]
    for row in zip(*cols):
        writer.writerow([int(row[0])] + [f"{v:.12g}" for v in row[1:]])


@dataclass(frozen=True, eq=False)
class StabilityTrace:
    checkpoints: np.ndarray
    queue_ratio: np.ndarray
    zero_queue_slots: int
    final_ratio: float


def stability_trace(consumption, s: float, T: int, seed: int = 0,
                    n_checkpoints: int = 25, backend: str | None = None) -> StabilityTrace:
    """``Q(t)/t`` at log-spaced checkpoints for one queue under constant service ``s < f``."""
    if not s < consumption.mean:
        raise PreconditionError(f"service {s} must be below mean consumption {consumption.mean}")
    if T < 1000:
        raise PreconditionError("horizon must be at least 1000 slots")
    if s < 0:
        raise DomainError("service rate must be non-negative")
    kern = _backend.get_kernels(backend)
    F = np.asarray(consumption.draw(seed, 1, T), dtype=float)
    S = np.full(T, float(s))
    qpath = np.empty(T)
    kappa = np.empty(T)
    q_final = kern.queue_path(S, F, math.inf, 0.0, qpath, kappa)
    after = np.append(qpath[1:], q_final)  # Q(t+1), t = 1..T
    t = np.unique(np.geomspace(1, T, n_checkpoints).astype(np.int64))
    return StabilityTrace(
        checkpoints=t,
        queue_ratio=after[t - 1] / t,
        zero_queue_slots=int(np.count_nonzero(after == 0.0)),
        final_ratio=float(q_final / T),
    )
