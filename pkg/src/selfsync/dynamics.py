"""Fixed-step simulation of delay-coupled integrator networks.

Each node integrates its local statistic while a coupling term pulls its
state toward delayed neighbor states::

    xdot_i(t) = u_i + (K / c_i) * sum_j a_ij * (x_j(t - tau_ij) - x_i(t))

Integration is explicit Euler on a fixed grid.  Per-link delays are
quantized to integer step lags (round half to even) and realized through
history buffers, so the recorded trajectory satisfies
``x[n+1] == x[n] + step_s * xdot[n]`` bit for bit.  The synchronized-state
math consuming these trajectories lives in :mod:`selfsync.consensus`.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .digraph import Digraph

__all__ = [
    "NodeParams",
    "InitialCondition",
    "SimConfig",
    "DelayQuantization",
    "Trajectory",
    "VerdictKind",
    "DerivativeGroup",
    "ConsensusVerdict",
    "SimulationDiverged",
    "StepSizeWarning",
    "quantize_delays",
    "simulate",
    "detect_consensus",
    "write_trajectory_csv",
]

# Warn when step_s * K/c_i * (received gain sum) exceeds this; one order
# of magnitude under the explicit-Euler monotonicity bound of 1.
STIFFNESS_GUARD = 0.1

DEFAULT_WINDOW = 200
DEFAULT_DRIFT_TOL = 1e-8
DEFAULT_SYNC_TOL = 1e-6


class SimulationDiverged(RuntimeError):
    """A non-finite state appeared; ``step`` is the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class StepSizeWarning(UserWarning):
    """The step size is large for the realized coupling strengths."""


@dataclass(frozen=True)
class NodeParams:
    """Per-node consensus weights (positive) and local statistics."""

    weights: np.ndarray
    stats: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        s = np.asarray(self.stats, dtype=float)
        if w.ndim != 1 or s.shape != w.shape:
            raise ValueError("weights and stats must be 1-d arrays of equal length")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("weights must be finite and strictly positive")
        if not np.all(np.isfinite(s)):
            raise ValueError("stats must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "stats", s)

    @property
    def n(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class InitialCondition:
    """Node state history on the delay window ``[-tau_max, 0]``.

    ``zero`` and ``constant`` hold the history flat; ``samples`` supplies
    explicit rows on the step grid, oldest first, of which the trailing
    ``m_max + 1`` rows are used.
    """

    kind: str
    values: "np.ndarray | None" = None

    @staticmethod
    def zero() -> "InitialCondition":
        return InitialCondition("zero")

    @staticmethod
    def constant(values: "float | np.ndarray") -> "InitialCondition":
        return InitialCondition("constant", np.atleast_1d(np.asarray(values, dtype=float)))

    @staticmethod
    def samples(history: np.ndarray) -> "InitialCondition":
        arr = np.asarray(history, dtype=float)
        if arr.ndim != 2:
            raise ValueError("sampled history must be a (steps, nodes) array")
        return InitialCondition("samples", arr)

    def fill(self, rows: int, n: int) -> np.ndarray:
        """Materialize the history block of shape ``(rows, n)``."""
        if self.kind == "zero":
            return np.zeros((rows, n))
        if self.kind == "constant":
            v = self.values
            if v.shape not in ((1,), (n,)):
                raise ValueError(f"constant initial condition needs 1 or {n} values")
            return np.broadcast_to(v, (rows, n)).copy() if v.shape == (n,) else np.full((rows, n), float(v[0]))
        if self.kind == "samples":
            arr = self.values
            if arr.shape[1] != n:
                raise ValueError(f"sampled history has {arr.shape[1]} columns, expected {n}")
            if arr.shape[0] < rows:
                raise ValueError(f"sampled history needs at least {rows} rows, got {arr.shape[0]}")
            return arr[-rows:].copy()
        raise ValueError(f"unknown initial condition kind {self.kind!r}")


@dataclass(frozen=True)
class SimConfig:
    """Coupling gain, step size, horizon (steps), and initial history."""

    coupling: float
    step_s: float
    horizon: int
    init: InitialCondition = field(default_factory=InitialCondition.zero)

    def __post_init__(self) -> None:
        if not np.isfinite(self.coupling) or self.coupling <= 0:
            raise ValueError("coupling must be finite and positive")
        if not np.isfinite(self.step_s) or self.step_s <= 0:
            raise ValueError("step_s must be finite and positive")
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise ValueError("horizon must be a positive integer number of steps")


@dataclass(frozen=True)
class DelayQuantization:
    """Integer step lags for every link; ``lags`` is 0 off-edge."""

    lags: np.ndarray
    m_max: int
    step_s: float

    def delay_matrix(self) -> np.ndarray:
        """Quantized delays in seconds, ``lags * step_s``."""
        return self.lags * self.step_s


def quantize_delays(g: Digraph, step_s: float) -> DelayQuantization:
    """Round each link delay to an integer number of steps.

    Ties round half to even (so 2.5 steps becomes 2, 3.5 becomes 4).  The
    same quantization feeds both the simulator and any prediction that
    must agree with it exactly.
    """
    if step_s <= 0 or not np.isfinite(step_s):
        raise ValueError("step_s must be finite and positive")
    lags = np.rint(g.delay_matrix() / step_s).astype(np.int64)
    m_max = int(lags.max()) if g.edges else 0
    return DelayQuantization(lags=lags, m_max=m_max, step_s=step_s)


@dataclass(frozen=True)
class Trajectory:
    """Recorded run: ``states[k]`` and ``derivs[k]`` at time ``times[k]``."""

    step_s: float
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    @property
    def n(self) -> int:
        return int(self.states.shape[1])

    @property
    def horizon(self) -> int:
        return int(self.states.shape[0])

    def write_csv(self, path: "str | Path") -> None:
        write_trajectory_csv(self, path)


def simulate(g: Digraph, params: NodeParams, cfg: SimConfig) -> Trajectory:
    """Run the delay-coupled integrator network for ``cfg.horizon`` steps.

    The state at step 0 is the initial history's final row; earlier rows
    feed the delayed coupling terms.  Warns with :class:`StepSizeWarning`
    when the per-node coupling rate is large for the step size, and raises
    :class:`SimulationDiverged` as soon as any derivative goes non-finite.
    """
    if params.n != g.n:
        raise ValueError(f"params are for {params.n} nodes, graph has {g.n}")
    n = g.n
    quant = quantize_delays(g, cfg.step_s)
    m_max = quant.m_max
    horizon = cfg.horizon

    dsts = np.fromiter((e.dst for e in g.edges), dtype=np.int64, count=len(g.edges))
    srcs = np.fromiter((e.src for e in g.edges), dtype=np.int64, count=len(g.edges))
    gains = np.fromiter((e.gain for e in g.edges), dtype=float, count=len(g.edges))
    lags = quant.lags[dsts, srcs] if len(g.edges) else np.zeros(0, dtype=np.int64)

    rate = cfg.coupling / params.weights
    inflow = np.zeros(n)
    np.add.at(inflow, dsts, gains)
    stiffness = float(np.max(cfg.step_s * rate * inflow)) if n else 0.0
    if stiffness > STIFFNESS_GUARD:
        warnings.warn(
            f"step_s * coupling rate reaches {stiffness:.3g} (guard {STIFFNESS_GUARD}); "
            "expect a stiff, possibly inaccurate integration",
            StepSizeWarning,
            stacklevel=2,
        )

    # Rows 0 .. m_max hold the history at steps -m_max .. 0; row m_max + k
    # is the state at step k.
    x = np.empty((m_max + horizon, n))
    x[: m_max + 1] = cfg.init.fill(m_max + 1, n)
    derivs = np.empty((horizon, n))
    stats = params.stats

    has_edges = len(g.edges) > 0
    # Overflow is reported through SimulationDiverged, not numpy warnings.
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(horizon):
            row = m_max + k
            now = x[row]
            if has_edges:
                delayed = x[row - lags, srcs]
                pull = gains * (delayed - now[dsts])
                agg = np.bincount(dsts, weights=pull, minlength=n)
            else:
                agg = 0.0
            xdot = stats + rate * agg
            if not np.all(np.isfinite(xdot)):
                raise SimulationDiverged(f"non-finite derivative at step {k}", step=k)
            derivs[k] = xdot
            if k + 1 < horizon:
                x[row + 1] = now + cfg.step_s * xdot

    states = x[m_max : m_max + horizon].copy()
    times = np.arange(horizon) * cfg.step_s
    return Trajectory(step_s=cfg.step_s, times=times, states=states, derivs=derivs)


class VerdictKind(str, Enum):
    GLOBAL = "GLOBAL"
    CLUSTERED = "CLUSTERED"
    NONE = "NONE"


@dataclass(frozen=True)
class DerivativeGroup:
    """Nodes whose terminal derivatives agree, and their common value."""

    members: tuple[int, ...]
    omega: float


@dataclass(frozen=True)
class ConsensusVerdict:
    kind: VerdictKind
    omega: "float | None"
    groups: tuple[DerivativeGroup, ...]
    unsettled: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "verdict": self.kind.value,
            "omega": self.omega,
            "groups": [
                {"members": list(grp.members), "omega": grp.omega} for grp in self.groups
            ],
            "unsettled": list(self.unsettled),
        }


def detect_consensus(
    traj: Trajectory,
    *,
    window: int = DEFAULT_WINDOW,
    drift_tol: float = DEFAULT_DRIFT_TOL,
    sync_tol: float = DEFAULT_SYNC_TOL,
) -> ConsensusVerdict:
    """Classify the terminal derivative behavior of a trajectory.

    Over the final ``window`` samples, a node is settled when its
    derivative range is below ``drift_tol`` and settled nodes are grouped
    when their means sit within ``sync_tol``; both tolerances are relative
    to the largest derivative magnitude in the window.  GLOBAL means every
    node settled into one group (``omega`` is the mean terminal
    derivative); two or more groups give CLUSTERED; anything else NONE.
    Nodes fed by several groups may settle to intermediate values and then
    show up as extra groups; no convergence claim is made for them.
    """
    if window < 2:
        raise ValueError("window must be at least 2 samples")
    if traj.horizon <= window:
        raise ValueError(f"trajectory ({traj.horizon} steps) must be longer than window {window}")
    tail = traj.derivs[-window:]
    scale = max(float(np.max(np.abs(tail))), 1e-300)
    ranges = tail.max(axis=0) - tail.min(axis=0)
    means = tail.mean(axis=0)
    settled = ranges < drift_tol * scale

    settled_idx = np.flatnonzero(settled)
    unsettled = tuple(int(i) for i in np.flatnonzero(~settled))

    groups: list[DerivativeGroup] = []
    if settled_idx.size:
        order = settled_idx[np.argsort(means[settled_idx], kind="stable")]
        start = 0
        vals = means[order]
        for i in range(1, order.size + 1):
            if i == order.size or vals[i] - vals[i - 1] > sync_tol * scale:
                members = tuple(sorted(int(v) for v in order[start:i]))
                groups.append(DerivativeGroup(members=members, omega=float(vals[start:i].mean())))
                start = i

    if len(groups) == 1 and not unsettled:
        return ConsensusVerdict(
            kind=VerdictKind.GLOBAL,
            omega=float(means.mean()),
            groups=tuple(groups),
            unsettled=(),
        )
    if len(groups) >= 2:
        return ConsensusVerdict(
            kind=VerdictKind.CLUSTERED, omega=None, groups=tuple(groups), unsettled=unsettled
        )
    return ConsensusVerdict(
        kind=VerdictKind.NONE, omega=None, groups=tuple(groups), unsettled=unsettled
    )


def write_trajectory_csv(traj: Trajectory, path: "str | Path") -> None:
    """Write ``t,x_0..x_{n-1},xdot_0..xdot_{n-1}`` rows at full precision."""
    n = traj.n
    header = "t," + ",".join(f"x_{i}" for i in range(n)) + "," + ",".join(
        f"xdot_{i}" for i in range(n)
    )
    lines = [header]
    for k in range(traj.horizon):
        cells = [repr(float(traj.times[k]))]
        cells.extend(repr(float(v)) for v in traj.states[k])
        cells.extend(repr(float(v)) for v in traj.derivs[k])
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")
