"""Weighted digraphs with per-link delays, and their connectivity structure.

Conventions used across the package:

* An edge ``(dst, src)`` means node ``dst`` hears node ``src``: information
  flows ``src -> dst``.  ``gain`` is the coupling weight of that link and
  ``delay_s`` the propagation delay in seconds.
* The coupling Laplacian is ``L = D - A`` where ``A[dst, src] = gain`` and
  ``D`` is the diagonal of row sums of ``A`` (each listener's total received
  gain).  Rows of ``L`` sum to zero by construction.  Beware of naming: in
  flipped-orientation texts this same diagonal is called the out-degree.
  Rely on the formula, not the name.
* Reachability statements ("r reaches q") always follow information flow:
  a directed path ``r -> ... -> q`` where each hop's listener hears the
  previous node.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "Edge",
    "Digraph",
    "ConnectivityClass",
    "ConnectivityReport",
    "GraphFormatError",
    "NullSpaceError",
    "laplacian",
    "scc_decompose",
    "classify",
    "left_null_vector",
    "load_graph",
    "save_graph",
]

# Residual bound for the left null vector, relative to the induced
# infinity norm of the Laplacian.
NULL_RESIDUAL_RTOL = 1e-10


class GraphFormatError(ValueError):
    """Malformed graph description (ids, weights, duplicates, JSON shape)."""


class NullSpaceError(RuntimeError):
    """A root component's null space is defective or numerically ambiguous."""


@dataclass(frozen=True)
class Edge:
    """Directed link: ``dst`` hears ``src`` with a positive gain and a delay."""

    dst: int
    src: int
    gain: float
    delay_s: float


@dataclass(frozen=True)
class Digraph:
    """Immutable weighted digraph on nodes ``0 .. n-1``.

    Validation happens at construction: ids in range, no self-loops, no
    duplicate ``(dst, src)`` pairs, gains strictly positive and finite,
    delays finite and nonnegative.
    """

    n: int
    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or self.n < 1:
            raise GraphFormatError(f"node count must be a positive integer, got {self.n!r}")
        seen: set[tuple[int, int]] = set()
        for e in self.edges:
            if not (0 <= e.dst < self.n) or not (0 <= e.src < self.n):
                raise GraphFormatError(f"edge ({e.dst}, {e.src}) out of range for n={self.n}")
            if e.dst == e.src:
                raise GraphFormatError(f"self-loop at node {e.dst}")
            key = (e.dst, e.src)
            if key in seen:
                raise GraphFormatError(f"duplicate edge (dst={e.dst}, src={e.src})")
            seen.add(key)
            if not np.isfinite(e.gain) or e.gain <= 0.0:
                raise GraphFormatError(f"edge {key} has non-positive or non-finite gain {e.gain!r}")
            if not np.isfinite(e.delay_s) or e.delay_s < 0.0:
                raise GraphFormatError(f"edge {key} has invalid delay {e.delay_s!r}")

    def gain_matrix(self) -> np.ndarray:
        """Dense gain matrix ``A`` with ``A[dst, src]`` > 0 on edges, else 0."""
        a = np.zeros((self.n, self.n))
        for e in self.edges:
            a[e.dst, e.src] = e.gain
        return a

    def delay_matrix(self) -> np.ndarray:
        """Dense delay matrix aligned with :meth:`gain_matrix` (0 off-edge)."""
        d = np.zeros((self.n, self.n))
        for e in self.edges:
            d[e.dst, e.src] = e.delay_s
        return d

    def with_delays(self, delays: "np.ndarray | float") -> "Digraph":
        """Copy of the graph with delays replaced.

        ``delays`` is either a scalar applied to every edge or a dense
        ``(n, n)`` matrix indexed like :meth:`delay_matrix`.
        """
        if np.isscalar(delays):
            new = tuple(Edge(e.dst, e.src, e.gain, float(delays)) for e in self.edges)
        else:
            mat = np.asarray(delays, dtype=float)
            new = tuple(Edge(e.dst, e.src, e.gain, float(mat[e.dst, e.src])) for e in self.edges)
        return Digraph(self.n, new)


class ConnectivityClass(str, Enum):
    SC = "SC"
    QSC_NOT_SC = "QSC_NOT_SC"
    WC_NOT_QSC = "WC_NOT_QSC"
    DISCONNECTED = "DISCONNECTED"


@dataclass(frozen=True)
class ConnectivityReport:
    """Structural summary of a digraph.

    ``sccs`` lists strongly connected components as sorted node tuples,
    ordered by smallest member.  ``condensation`` holds DAG edges
    ``(a, b)`` meaning information flows from component ``a`` to ``b``.
    ``root_sccs`` indexes the components receiving no outside influence.
    ``influence`` is the nonnegative left null vector of the Laplacian,
    supported exactly on root components, each root block unit 2-norm.
    """

    kind: ConnectivityClass
    sccs: tuple[tuple[int, ...], ...]
    condensation: tuple[tuple[int, int], ...]
    root_sccs: tuple[int, ...]
    balanced: bool
    influence: np.ndarray

    @property
    def n(self) -> int:
        return int(self.influence.shape[0])

    def root_nodes(self) -> tuple[tuple[int, ...], ...]:
        """Node tuples of the root components, in ``root_sccs`` order."""
        return tuple(self.sccs[i] for i in self.root_sccs)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "class": self.kind.value,
            "sccs": [list(c) for c in self.sccs],
            "condensation": [list(e) for e in self.condensation],
            "root_sccs": [list(self.sccs[i]) for i in self.root_sccs],
            "balanced": self.balanced,
            "influence": [float(v) for v in self.influence],
        }


def laplacian(g: Digraph) -> np.ndarray:
    """Coupling Laplacian ``L = diag(A @ 1) - A``; every row sums to zero."""
    a = g.gain_matrix()
    return np.diag(a.sum(axis=1)) - a


def _tarjan_components(n: int, succ: list[list[int]]) -> list[list[int]]:
    """Iterative Tarjan SCC over successor lists; components sorted by min node."""
    order = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for start in range(n):
        if order[start] != -1:
            continue
        work: list[list[int]] = [[start, 0]]
        while work:
            v, child_idx = work[-1]
            if child_idx == 0:
                order[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            descended = False
            children = succ[v]
            while child_idx < len(children):
                w = children[child_idx]
                child_idx += 1
                if order[w] == -1:
                    work[-1][1] = child_idx
                    work.append([w, 0])
                    descended = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], order[w])
            if descended:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[v])
            if low[v] == order[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comp.sort()
                comps.append(comp)
    comps.sort(key=lambda c: c[0])
    return comps


def scc_decompose(g: Digraph) -> tuple[tuple[tuple[int, ...], ...], tuple[tuple[int, int], ...]]:
    """Strongly connected components and the condensation DAG.

    Returns ``(sccs, condensation)`` where ``sccs`` are sorted node tuples
    ordered by smallest member and ``condensation`` contains deduplicated
    edges ``(a, b)``: some node in component ``b`` hears some node in
    component ``a``.  The condensation is acyclic by construction.
    """
    succ: list[list[int]] = [[] for _ in range(g.n)]
    for e in g.edges:
        succ[e.src].append(e.dst)
    comps = _tarjan_components(g.n, succ)
    comp_of = [0] * g.n
    for idx, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = idx
    cond = {
        (comp_of[e.src], comp_of[e.dst])
        for e in g.edges
        if comp_of[e.src] != comp_of[e.dst]
    }
    return tuple(tuple(c) for c in comps), tuple(sorted(cond))


def _weakly_connected(g: Digraph) -> bool:
    parent = list(range(g.n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in g.edges:
        ra, rb = find(e.dst), find(e.src)
        if ra != rb:
            parent[ra] = rb
    return len({find(v) for v in range(g.n)}) == 1


def classify(g: Digraph) -> ConnectivityReport:
    """Full connectivity analysis of a digraph.

    The class is SC when there is a single strongly connected component;
    QSC_NOT_SC when a unique root component influences everything else;
    WC_NOT_QSC when the graph is connected ignoring direction but has
    several root components; DISCONNECTED otherwise.  A graph is balanced
    when every node's received gain sum equals its transmitted gain sum.
    """
    sccs, condensation = scc_decompose(g)
    heard_from_outside = {b for (_a, b) in condensation}
    root_sccs = tuple(i for i in range(len(sccs)) if i not in heard_from_outside)

    if len(sccs) == 1:
        kind = ConnectivityClass.SC
    elif len(root_sccs) == 1:
        kind = ConnectivityClass.QSC_NOT_SC
    elif _weakly_connected(g):
        kind = ConnectivityClass.WC_NOT_QSC
    else:
        kind = ConnectivityClass.DISCONNECTED

    a = g.gain_matrix()
    received = a.sum(axis=1)
    transmitted = a.sum(axis=0)
    scale = max(1.0, float(received.max(initial=0.0)))
    balanced = bool(np.all(np.abs(received - transmitted) <= 1e-12 * scale))

    influence = _influence_vector(laplacian(g), sccs, root_sccs)
    return ConnectivityReport(
        kind=kind,
        sccs=sccs,
        condensation=condensation,
        root_sccs=root_sccs,
        balanced=balanced,
        influence=influence,
    )


def _root_block_null_vector(block: np.ndarray) -> np.ndarray:
    """Positive left null vector of one root component's Laplacian block.

    Shifted power iteration on ``I - sigma * block.T`` with
    ``sigma = 0.5 / max(diagonal)`` supplies the positive direction, then a
    single pinned linear solve polishes it to solver precision.  Raises
    :class:`NullSpaceError` when the block's null space is not
    one-dimensional (a malformed gain matrix).
    """
    k = block.shape[0]
    if k == 1:
        return np.ones(1)
    diag_max = float(block.diagonal().max())
    if diag_max <= 0.0 or not np.isfinite(diag_max):
        raise NullSpaceError("root component block has no positive coupling on its diagonal")
    sigma = 0.5 / diag_max
    step = np.eye(k) - sigma * block.T
    vec = np.full(k, 1.0 / np.sqrt(k))
    for _ in range(50 * k):
        nxt = step @ vec
        norm = np.linalg.norm(nxt)
        if norm == 0.0 or not np.isfinite(norm):
            raise NullSpaceError("power iteration collapsed; block is defective")
        nxt /= norm
        if np.max(np.abs(nxt - vec)) < 1e-13:
            vec = nxt
            break
        vec = nxt

    # Polish: pin the largest coordinate to 1 and solve the remaining
    # equations of block.T @ x = 0 exactly.
    pin = int(np.argmax(vec))
    system = block.T.copy()
    system[pin, :] = 0.0
    system[pin, pin] = 1.0
    rhs = np.zeros(k)
    rhs[pin] = 1.0
    try:
        x = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise NullSpaceError("root component null space is rank deficient") from exc
    if not np.all(np.isfinite(x)) or np.min(x) <= 0.0:
        raise NullSpaceError("root component null vector is not strictly positive")
    resid = float(np.max(np.abs(x @ block)))
    block_scale = float(np.max(np.abs(block).sum(axis=1)))
    if resid > NULL_RESIDUAL_RTOL * block_scale:
        raise NullSpaceError(
            f"null vector residual {resid:.3e} exceeds {NULL_RESIDUAL_RTOL:.0e} * {block_scale:.3e}"
        )
    return x / np.linalg.norm(x)


def _influence_vector(
    lap: np.ndarray,
    sccs: tuple[tuple[int, ...], ...],
    root_sccs: tuple[int, ...],
) -> np.ndarray:
    gamma = np.zeros(lap.shape[0])
    for ri in root_sccs:
        nodes = np.asarray(sccs[ri], dtype=int)
        gamma[nodes] = _root_block_null_vector(lap[np.ix_(nodes, nodes)])
    return gamma


def left_null_vector(g: Digraph, report: ConnectivityReport | None = None) -> np.ndarray:
    """Nonnegative left null vector of the Laplacian.

    Entry ``i`` is positive exactly when node ``i`` belongs to a root
    component (no outside influence); each root block is normalized to
    unit 2-norm.  The assembled vector satisfies
    ``max|gamma @ L| <= 1e-10 * norm_inf(L)``.
    """
    if report is not None:
        gamma = np.array(report.influence, copy=True)
    else:
        sccs, condensation = scc_decompose(g)
        heard = {b for (_a, b) in condensation}
        roots = tuple(i for i in range(len(sccs)) if i not in heard)
        gamma = _influence_vector(laplacian(g), sccs, roots)
    lap = laplacian(g)
    lap_norm = float(np.max(np.abs(lap).sum(axis=1))) if g.n else 0.0
    resid = float(np.max(np.abs(gamma @ lap))) if g.n else 0.0
    if resid > NULL_RESIDUAL_RTOL * max(lap_norm, 1e-300):
        raise NullSpaceError(
            f"left null vector residual {resid:.3e} exceeds tolerance for norm {lap_norm:.3e}"
        )
    return gamma


def load_graph(path: "str | Path") -> Digraph:
    """Read a graph from the JSON wire format.

    Expected shape::

        {"n": 3, "edges": [{"dst": 0, "src": 1, "gain": 1.0, "delay_s": 0.0}, ...]}

    Node ids are 0-based.  A repeated ``(dst, src)`` pair, malformed
    fields, or ids out of range raise :class:`GraphFormatError`.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"graph file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "n" not in doc or "edges" not in doc:
        raise GraphFormatError('graph JSON must be an object with "n" and "edges"')
    raw_edges = doc["edges"]
    if not isinstance(raw_edges, list):
        raise GraphFormatError('"edges" must be a list')
    edges = []
    for item in raw_edges:
        try:
            edges.append(
                Edge(
                    dst=int(item["dst"]),
                    src=int(item["src"]),
                    gain=float(item["gain"]),
                    delay_s=float(item["delay_s"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphFormatError(f"malformed edge entry {item!r}") from exc
    n = doc["n"]
    if not isinstance(n, int):
        raise GraphFormatError(f'"n" must be an integer, got {n!r}')
    return Digraph(n=n, edges=tuple(edges))


def save_graph(g: Digraph, path: "str | Path") -> None:
    """Write the JSON wire format read back by :func:`load_graph`."""
    doc = {
        "n": g.n,
        "edges": [
            {"dst": e.dst, "src": e.src, "gain": e.gain, "delay_s": e.delay_s}
            for e in g.edges
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
