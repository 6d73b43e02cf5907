"""Valid-pair discovery under an adaptive distance threshold."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.spatial import cKDTree

from .mesh import RefMesh, bounding_box_diagonal

MAX_ADAPTATIONS = 64
WINDOW_MAX = 10
DEFAULT_INITIAL_FRACTION = 0.01


class Decision(enum.Enum):
    KEEP = "keep"
    DOUBLED = "doubled"
    HALVED = "halved"


class ThresholdOscillation(RuntimeError):
    pass


@dataclass(frozen=True)
class ThresholdState:
    t: float
    t_initial: float
    adaptations: int = 0

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"threshold must be positive, got {self.t}")

    @classmethod
    def seed(cls, mesh: RefMesh, fraction: float = DEFAULT_INITIAL_FRACTION) -> "ThresholdState":
        diag = bounding_box_diagonal(mesh)
        t = fraction * diag if diag > 0 else 1.0
        return cls(t, t)


@dataclass
class CandidatePair:
    v1: int
    v2: int
    is_edge: bool
    geometric_error: float = float("nan")
    normal_error: float = 0.0
    texture_error: float = 0.0
    color_error: float = 0.0
    unified_error: float = float("nan")
    survivor: Optional[int] = None

    def __post_init__(self):
        if self.v1 > self.v2:
            self.v1, self.v2 = self.v2, self.v1
        if self.v1 == self.v2:
            raise ValueError("a pair needs two distinct vertices")

    @property
    def key(self) -> tuple[int, int]:
        return self.v1, self.v2


def adapt_threshold(state: ThresholdState, pair_count: int) -> tuple[ThresholdState, Decision]:
    """Double on no pairs, halve on more than ten, otherwise keep."""
    if pair_count < 0:
        raise ValueError("pair count cannot be negative")
    if 1 <= pair_count <= WINDOW_MAX:
        return state, Decision.KEEP
    if state.adaptations >= MAX_ADAPTATIONS:
        raise ThresholdOscillation(
            f"{state.adaptations} adaptations without landing in [1, {WINDOW_MAX}] "
            f"(t={state.t:g}, pairs={pair_count})"
        )
    if pair_count == 0:
        return replace(state, t=state.t * 2.0, adaptations=state.adaptations + 1), Decision.DOUBLED
    return replace(state, t=state.t / 2.0, adaptations=state.adaptations + 1), Decision.HALVED


def settle_threshold(
    state: ThresholdState, count_at: Callable[[float], int], refine: bool = True
) -> tuple[ThresholdState, bool]:
    """Adapt from ``state`` until the pair count lands in the window.

    Once some threshold admitted no pair and another admitted too many,
    doubling and halving can only ping-pong between them; with ``refine`` the
    next threshold is then the midpoint of that bracket.  When the guard
    trips the current threshold is accepted, or, if it admits no pair, the
    smallest threshold seen that admitted some.  Returns the settled state
    and whether the guard tripped.
    """
    state = replace(state, adaptations=0)
    empty_below = None  # largest t with no pair
    crowded_above = None  # smallest t with too many pairs
    smallest_nonempty = None
    while True:
        n = count_at(state.t)
        if n > 0 and (smallest_nonempty is None or state.t < smallest_nonempty):
            smallest_nonempty = state.t
        if n == 0 and (empty_below is None or state.t > empty_below):
            empty_below = state.t
        if n > WINDOW_MAX and (crowded_above is None or state.t < crowded_above):
            crowded_above = state.t
        try:
            new, decision = adapt_threshold(state, n)
        except ThresholdOscillation:
            if n == 0 and smallest_nonempty is not None:
                state = replace(state, t=smallest_nonempty)
            return state, True
        if decision is Decision.KEEP:
            return new, False
        if refine and empty_below is not None and crowded_above is not None:
            new = replace(new, t=0.5 * (empty_below + crowded_above))
        state = new


def unique_edges(faces: np.ndarray) -> np.ndarray:
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]
    return np.unique(e, axis=0)


def proximity_pairs(positions: np.ndarray, t: float, alive: Optional[np.ndarray] = None) -> set[tuple[int, int]]:
    """All vertex pairs strictly closer than ``t``."""
    idx = np.arange(len(positions)) if alive is None else np.flatnonzero(alive)
    if len(idx) < 2:
        return set()
    tree = cKDTree(positions[idx])
    out = set()
    for i, j in tree.query_pairs(r=t, output_type="ndarray"):
        a, b = int(idx[i]), int(idx[j])
        if np.linalg.norm(positions[a] - positions[b]) < t:
            out.add((a, b) if a < b else (b, a))
    return out


def find_valid_pairs(mesh: RefMesh, state: ThresholdState, proximity: bool = False) -> list[CandidatePair]:
    """Edges shorter than the threshold, plus close non-edge pairs when ``proximity`` is set."""
    edges = unique_edges(mesh.faces)
    p = mesh.positions
    found: dict[tuple[int, int], bool] = {}
    if len(edges):
        lengths = np.linalg.norm(p[edges[:, 0]] - p[edges[:, 1]], axis=1)
        for a, b in edges[lengths < state.t].tolist():
            found[(a, b)] = True
    if proximity:
        edge_set = {tuple(e) for e in edges.tolist()}
        for key in proximity_pairs(p, state.t):
            if key not in found:
                found[key] = key in edge_set
    return [CandidatePair(a, b, is_edge) for (a, b), is_edge in sorted(found.items())]


def select_min_error_pair(candidates: Iterable[CandidatePair]) -> CandidatePair:
    """Lowest unified error; ties go to the lexicographically smaller (v1, v2)."""
    best = None
    for c in candidates:
        if best is None or (c.unified_error, c.v1, c.v2) < (best.unified_error, best.v1, best.v2):
            best = c
    if best is None:
        raise ValueError("no candidates to choose from")
    return best
