"""Random geometric sensor networks with radio-channel link gains.

Nodes are dropped uniformly in a square.  The gain of the directed link
``dst <- src`` follows the received-amplitude model
``sqrt(P_src * |h|^2 / d^eta)`` with ``|h| = 1`` when fading is disabled;
with Rayleigh fading the amplitude is drawn so that its mean square equals
``P_src / (1 + d^2)``.  A link exists when its amplitude clears the hearing
threshold.  Link delays are ``delay_offset_s + d / wave_speed``.

All draws derive from ``RadioConfig.seed``; a fixed config reproduces the
same network bit for bit.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .digraph import ConnectivityClass, Digraph, Edge, classify

__all__ = [
    "Fading",
    "RadioConfig",
    "GeneratedNetwork",
    "GenerationBudgetError",
    "place_nodes",
    "build_channel",
    "solved_wave_speed",
    "ensure_connectivity",
]

_PLACEMENT_TAG = 0
_FADING_TAG = 1
_ATTEMPT_TAG = 2


class Fading(str, Enum):
    NONE = "NONE"
    RAYLEIGH = "RAYLEIGH"


class GenerationBudgetError(RuntimeError):
    """Connectivity target not reached within the attempt budget."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class RadioConfig:
    """Geometry, channel, and determinism knobs for network generation.

    ``tx_power`` is a scalar or a per-node tuple.  ``delay_span_s``, when
    set, overrides ``wave_speed`` per draw so the largest pairwise
    propagation delay equals exactly that many seconds (the square's size
    then only fixes the geometry's shape, not the delay scale).
    """

    n: int
    area_side: float = 1.0
    tx_power: "float | tuple[float, ...]" = 1.0
    path_loss_exponent: float = 2.0
    hear_threshold: float = 0.0
    fading: Fading = Fading.NONE
    wave_speed: float = 299_792_458.0
    delay_offset_s: float = 0.0
    delay_span_s: "float | None" = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if self.area_side < 0 or not np.isfinite(self.area_side):
            raise ValueError("area_side must be finite and nonnegative")
        if self.hear_threshold < 0:
            raise ValueError("hear_threshold must be nonnegative")
        if self.path_loss_exponent < 0:
            raise ValueError("path_loss_exponent must be nonnegative")
        if self.wave_speed <= 0:
            raise ValueError("wave_speed must be positive")
        if self.delay_offset_s < 0:
            raise ValueError("delay_offset_s must be nonnegative")
        if self.delay_span_s is not None and self.delay_span_s < 0:
            raise ValueError("delay_span_s must be nonnegative")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        powers = self.power_vector()
        if powers.shape != (self.n,) or np.any(powers <= 0) or not np.all(np.isfinite(powers)):
            raise ValueError("tx_power must be positive and scalar or one value per node")

    def power_vector(self) -> np.ndarray:
        if np.isscalar(self.tx_power):
            return np.full(self.n, float(self.tx_power))
        return np.asarray(self.tx_power, dtype=float)


@dataclass(frozen=True)
class GeneratedNetwork:
    """One accepted draw from :func:`ensure_connectivity`."""

    graph: Digraph
    positions: np.ndarray
    hear_threshold: float
    attempts: int
    seed: int


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


def place_nodes(cfg: RadioConfig) -> np.ndarray:
    """Uniform node positions in ``[0, area_side]^2``, shape ``(n, 2)``."""
    rng = _rng(cfg.seed, _PLACEMENT_TAG)
    return rng.uniform(0.0, cfg.area_side, size=(cfg.n, 2))


def _distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def solved_wave_speed(cfg: RadioConfig, positions: np.ndarray) -> float:
    """Wave speed actually used for this geometry (see ``delay_span_s``)."""
    if cfg.delay_span_s is None:
        return cfg.wave_speed
    dist = _distances(positions)
    d_max = float(dist.max())
    if cfg.delay_span_s == 0.0:
        return float("inf")
    if d_max == 0.0:
        raise ValueError("cannot solve wave speed: all nodes are coincident")
    return d_max / cfg.delay_span_s


def build_channel(cfg: RadioConfig, positions: np.ndarray) -> Digraph:
    """Realize link gains and delays for fixed node positions.

    Directed pairs are gated independently: ``a[dst, src]`` and
    ``a[src, dst]`` are separate draws under Rayleigh fading.  Edges are
    emitted in row-major ``(dst, src)`` order, deterministically in
    ``cfg.seed``.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.shape != (cfg.n, 2):
        raise ValueError(f"positions must have shape ({cfg.n}, 2)")
    dist = _distances(positions)
    powers = cfg.power_vector()

    off_diag = ~np.eye(cfg.n, dtype=bool)
    if cfg.fading is Fading.NONE:
        eta = cfg.path_loss_exponent
        if eta > 0 and np.any(dist[off_diag] == 0.0):
            raise ValueError("coincident nodes give infinite gain under pure path loss")
        with np.errstate(divide="ignore"):
            loss = np.where(off_diag, dist, 1.0) ** eta
        amp = np.sqrt(powers[None, :] / loss)
    else:
        # Mean-square amplitude P_src / (1 + d^2); Rayleigh scale follows.
        scale = np.sqrt(powers[None, :] / (2.0 * (1.0 + dist**2)))
        draws = _rng(cfg.seed, _FADING_TAG).rayleigh(scale=1.0, size=(cfg.n, cfg.n))
        amp = draws * scale

    wave = solved_wave_speed(cfg, positions)
    prop = dist / wave if np.isfinite(wave) else np.zeros_like(dist)

    edges = []
    for dst in range(cfg.n):
        for src in range(cfg.n):
            if dst == src:
                continue
            a = float(amp[dst, src])
            if a >= cfg.hear_threshold and a > 0.0:
                edges.append(Edge(dst, src, a, cfg.delay_offset_s + float(prop[dst, src])))
    return Digraph(cfg.n, tuple(edges))


def _attempt_seed(seed: int, attempt: int) -> int:
    return int(np.random.SeedSequence([seed, _ATTEMPT_TAG, attempt]).generate_state(1)[0])


def ensure_connectivity(
    cfg: RadioConfig,
    target: str = "SC",
    *,
    max_attempts: int = 32,
    threshold_decay: float = 0.7,
) -> GeneratedNetwork:
    """Draw networks until the requested connectivity class holds.

    ``target`` is ``"SC"`` (strongly connected) or ``"QSC"`` (a single
    root component influences everything; SC qualifies).  Each failed
    attempt switches to a fresh seed stream and lowers the hearing
    threshold by ``threshold_decay``.  Raises
    :class:`GenerationBudgetError` after ``max_attempts`` failures.
    """
    if target not in ("SC", "QSC"):
        raise ValueError(f'target must be "SC" or "QSC", got {target!r}')
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    if not (0.0 < threshold_decay <= 1.0):
        raise ValueError("threshold_decay must be in (0, 1]")

    accepted = (
        (ConnectivityClass.SC,)
        if target == "SC"
        else (ConnectivityClass.SC, ConnectivityClass.QSC_NOT_SC)
    )
    threshold = cfg.hear_threshold
    for attempt in range(1, max_attempts + 1):
        child = _attempt_seed(cfg.seed, attempt)
        trial = dataclasses.replace(cfg, seed=child, hear_threshold=threshold)
        positions = place_nodes(trial)
        graph = build_channel(trial, positions)
        if classify(graph).kind in accepted:
            return GeneratedNetwork(
                graph=graph,
                positions=positions,
                hear_threshold=threshold,
                attempts=attempt,
                seed=child,
            )
        threshold *= threshold_decay
    raise GenerationBudgetError(
        f"no {target} draw within {max_attempts} attempts (last threshold {threshold:.3g})",
        attempts=max_attempts,
    )
